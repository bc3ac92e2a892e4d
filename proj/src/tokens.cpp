#include "pie/tokens.hpp"

#include <sstream>

namespace pie {

size_t scalar_length(const std::string& s) {
  size_t n = 0;
  for (unsigned char c : s)
    if ((c & 0xc0) != 0x80) ++n;
  return n;
}

std::vector<Token> tokenize_line(const std::string& line, TokenMode mode) {
  std::vector<Token> out;
  if (mode == TokenMode::Word) {
    size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && line[i] == ' ') ++i;
      size_t j = i;
      while (j < line.size() && line[j] != ' ') ++j;
      if (j > i) out.push_back(line.substr(i, j - i));
      i = j;
    }
  } else {
    size_t i = 0;
    while (i < line.size()) {
      unsigned char c = static_cast<unsigned char>(line[i]);
      size_t len = 1;
      if ((c & 0x80) != 0) {
        if ((c & 0xe0) == 0xc0) len = 2;
        else if ((c & 0xf0) == 0xe0) len = 3;
        else if ((c & 0xf8) == 0xf0) len = 4;
      }
      if (i + len > line.size()) len = 1;
      if (!(len == 1 && line[i] == ' ')) out.push_back(line.substr(i, len));
      i += len;
    }
  }
  return out;
}

TokenSequence wrap_boundaries(std::vector<Token> tokens) {
  TokenSequence seq;
  seq.tokens.reserve(tokens.size() + 2);
  seq.tokens.emplace_back(kStartMarker);
  for (auto& t : tokens) seq.tokens.push_back(std::move(t));
  seq.tokens.emplace_back(kEndMarker);
  seq.boundary_wrapped = true;
  return seq;
}

TokenSequence tokenize_and_wrap(const std::string& line, TokenMode mode) {
  return wrap_boundaries(tokenize_line(line, mode));
}

std::string detokenize(const TokenSequence& seq, TokenMode mode) {
  size_t begin = 0, end = seq.tokens.size();
  if (seq.boundary_wrapped && end >= 2) {
    begin = 1;
    end -= 1;
  }
  std::string out;
  for (size_t i = begin; i < end; ++i) {
    if (mode == TokenMode::Word && i > begin) out += ' ';
    out += seq.tokens[i];
  }
  return out;
}

std::string join_payload(const std::vector<Token>& tokens, TokenMode mode) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (mode == TokenMode::Word && i > 0) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::vector<Token> split_payload(const std::string& payload, TokenMode mode) {
  return tokenize_line(payload, mode);
}

void validate_tokens(const TokenSequence& seq) {
  size_t n = seq.tokens.size();
  for (size_t i = 0; i < n; ++i) {
    const Token& t = seq.tokens[i];
    if (t.empty()) throw DataError("empty token at position " + std::to_string(i));
    if (t.find(' ') != std::string::npos)
      throw DataError("token contains whitespace: '" + t + "'");
    bool is_boundary_pos = seq.boundary_wrapped && (i == 0 || i + 1 == n);
    if (!is_boundary_pos && (t == kStartMarker || t == kEndMarker))
      throw DataError("boundary marker '" + t + "' occurs inside sequence at position " +
                      std::to_string(i));
  }
  if (seq.boundary_wrapped) {
    if (n < 2 || seq.tokens.front() != kStartMarker || seq.tokens.back() != kEndMarker)
      throw DataError("sequence marked boundary-wrapped but markers are missing");
  }
}

}  // namespace pie
