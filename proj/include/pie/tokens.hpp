#pragma once

#include <string>
#include <vector>

#include "pie/common.hpp"

namespace pie {

// Tokens are plain strings: whole words in word mode, single characters in
// char mode. The boundary markers below are ordinary vocabulary entries so
// that sentence-initial appends attach to a real position.
inline constexpr const char* kStartMarker = "[";
inline constexpr const char* kEndMarker = "]";

using Token = std::string;

struct TokenSequence {
  std::vector<Token> tokens;
  bool boundary_wrapped = false;

  size_t size() const { return tokens.size(); }
  bool operator==(const TokenSequence& o) const = default;
};

// Number of Unicode scalar values in a UTF-8 string (continuation bytes are
// not counted). Drives the modified substitution cost.
size_t scalar_length(const std::string& s);

// Split a line into tokens. Word mode splits on runs of spaces; char mode
// yields one token per UTF-8 scalar, skipping spaces.
std::vector<Token> tokenize_line(const std::string& line, TokenMode mode);

TokenSequence wrap_boundaries(std::vector<Token> tokens);
TokenSequence tokenize_and_wrap(const std::string& line, TokenMode mode);

// Inverse of tokenize_and_wrap: strips markers and joins per mode.
std::string detokenize(const TokenSequence& seq, TokenMode mode);

// Insert payloads are stored as single strings: space-joined in word mode,
// concatenated in char mode.
std::string join_payload(const std::vector<Token>& tokens, TokenMode mode);
std::vector<Token> split_payload(const std::string& payload, TokenMode mode);

// Throws DataError when a non-boundary token collides with a marker or
// contains whitespace.
void validate_tokens(const TokenSequence& seq);

}  // namespace pie
