#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "memprobe/vocab.hpp"

namespace memprobe {

/// Splits text on whitespace with ASCII punctuation detached as single-char
/// tokens. Bytes >= 0x80 are treated as word characters, so UTF-8 sequences
/// pass through intact.
std::vector<std::string> split_text(std::string_view text);

/// split_text + id lookup (OOV -> <unk>) + trailing <eos>.
TokenSeq tokenize(std::string_view text, const Vocabulary& vocab);

/// Vocabulary over every distinct surface token in the given texts, ids
/// assigned by descending frequency, ties broken lexicographically.
Vocabulary build_vocab(const std::vector<std::string>& texts);

}  // namespace memprobe
