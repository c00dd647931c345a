#pragma once

#include <stdexcept>
#include <string>

namespace astrec {

// Exception taxonomy, mapped to CLI exit codes in tools/main.cpp:
//   ConfigError -> 2, DataError -> 3, NumericError / TrainingError -> 4.

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

struct TrainingError : std::runtime_error {
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace astrec
