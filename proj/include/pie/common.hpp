#pragma once

#include <stdexcept>
#include <string>

namespace pie {

// Bad or inconsistent input data (malformed files, length mismatches,
// over-long sequences, vocabulary mismatches). CLI exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required (diverged training,
// NaN gradients). CLI exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Misuse of the library API (shape mismatches, backward before forward).
struct ProgrammingError : std::logic_error {
  using std::logic_error::logic_error;
};

enum class TokenMode { Word, Char };

inline const char* to_string(TokenMode m) {
  return m == TokenMode::Word ? "word" : "char";
}

inline TokenMode token_mode_from_string(const std::string& s) {
  if (s == "word") return TokenMode::Word;
  if (s == "char") return TokenMode::Char;
  throw DataError("unknown token mode: " + s);
}

}  // namespace pie
