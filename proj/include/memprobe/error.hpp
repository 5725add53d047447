#pragma once

#include <stdexcept>
#include <string>

namespace memprobe {

// Error categories map 1:1 onto CLI exit codes (config=2, missing input=3,
// runtime=4).

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class MissingInputError : public std::runtime_error {
 public:
  explicit MissingInputError(const std::string& msg) : std::runtime_error(msg) {}
};

class RuntimeFailure : public std::runtime_error {
 public:
  explicit RuntimeFailure(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace memprobe
