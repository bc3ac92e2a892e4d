#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "pie/tokens.hpp"

namespace pie {

// Token vocabulary with reserved ids. [MASK] doubles as the seed embedding of
// the replace/append units, so it is an ordinary table row rather than a
// separate parameter.
class Vocabulary {
 public:
  static constexpr int32_t kPad = 0;
  static constexpr int32_t kUnk = 1;
  static constexpr int32_t kMask = 2;

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);  // must start with the 3 specials

  // Tokens ranked by (count desc, token asc) after the specials; `extra`
  // tokens (e.g. insert-payload tokens) are appended lexicographically.
  static Vocabulary build(const std::vector<const TokenSequence*>& corpus,
                          const std::vector<std::string>& extra_tokens = {});

  int32_t id(const std::string& token) const;  // kUnk when unknown
  const std::string& token(int32_t id) const;
  std::vector<int32_t> ids(const TokenSequence& seq) const;
  int32_t size() const { return static_cast<int32_t>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::string digest() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int32_t> index_;
};

}  // namespace pie
