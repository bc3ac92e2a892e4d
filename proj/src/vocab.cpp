#include "pie/vocab.hpp"

#include <algorithm>
#include <map>

#include "pie/hash.hpp"

namespace pie {

namespace {
const char* kSpecials[] = {"[PAD]", "[UNK]", "[MASK]"};
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{kSpecials[0], kSpecials[1], kSpecials[2]}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 3 || tokens_[0] != kSpecials[0] || tokens_[1] != kSpecials[1] ||
      tokens_[2] != kSpecials[2])
    throw DataError("vocabulary must begin with [PAD], [UNK], [MASK]");
  for (size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, inserted] = index_.emplace(tokens_[i], static_cast<int32_t>(i));
    if (!inserted) throw DataError("duplicate vocabulary token: " + tokens_[i]);
  }
}

Vocabulary Vocabulary::build(const std::vector<const TokenSequence*>& corpus,
                             const std::vector<std::string>& extra_tokens) {
  std::map<std::string, uint64_t> counts;
  for (const TokenSequence* seq : corpus)
    for (const Token& t : seq->tokens) counts[t] += 1;

  std::vector<std::pair<std::string, uint64_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::vector<std::string> tokens{kSpecials[0], kSpecials[1], kSpecials[2]};
  for (auto& [tok, cnt] : ranked) tokens.push_back(tok);

  std::vector<std::string> extras = extra_tokens;
  std::sort(extras.begin(), extras.end());
  extras.erase(std::unique(extras.begin(), extras.end()), extras.end());
  for (const auto& tok : extras)
    if (!counts.count(tok)) tokens.push_back(tok);

  return Vocabulary(std::move(tokens));
}

int32_t Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int32_t id) const {
  if (id < 0 || id >= size()) throw ProgrammingError("vocabulary id out of range");
  return tokens_[static_cast<size_t>(id)];
}

std::vector<int32_t> Vocabulary::ids(const TokenSequence& seq) const {
  std::vector<int32_t> out;
  out.reserve(seq.tokens.size());
  for (const Token& t : seq.tokens) out.push_back(id(t));
  return out;
}

std::string Vocabulary::digest() const {
  std::string blob;
  for (const auto& t : tokens_) {
    blob += t;
    blob += '\n';
  }
  return digest_hex(blob);
}

}  // namespace pie
