#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace memprobe {

/// Shortest round-trip decimal form of a double (std::to_chars), so reports
/// serialize the same bytes on every run.
std::string format_double(double value);

/// Writes to a temp file in the target directory, then renames into place.
/// An interrupted command never leaves a half-written file.
void atomic_write_text(const std::filesystem::path& path, const std::string& content);

std::string read_text_file(const std::filesystem::path& path);  // throws MissingInputError

std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace memprobe
