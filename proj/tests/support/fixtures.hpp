#pragma once

#include <string>
#include <vector>

#include "pie/editspace.hpp"
#include "pie/rng.hpp"
#include "pie/tokens.hpp"

namespace pie::testing {

inline TokenSequence wrap_words(const std::string& line) {
  return tokenize_and_wrap(line, TokenMode::Word);
}

// Exponential-time minimum alignment cost over all edit scripts; the
// independent oracle for the DP diff.
inline double brute_force_diff_cost(const std::vector<Token>& x, const std::vector<Token>& y,
                                    const DiffConfig& cfg, size_t i = 0, size_t j = 0) {
  if (i == x.size()) return static_cast<double>(y.size() - j) * cfg.insert_cost;
  if (j == y.size()) return static_cast<double>(x.size() - i) * cfg.delete_cost;
  double sub_cost =
      x[i] == y[j]
          ? 0.0
          : 1.0 + cfg.epsilon * std::abs(static_cast<double>(scalar_length(x[i])) -
                                         static_cast<double>(scalar_length(y[j])));
  double best = sub_cost + brute_force_diff_cost(x, y, cfg, i + 1, j + 1);
  best = std::min(best, cfg.delete_cost + brute_force_diff_cost(x, y, cfg, i + 1, j));
  best = std::min(best, cfg.insert_cost + brute_force_diff_cost(x, y, cfg, i, j + 1));
  return best;
}

// Cost of one explicit alignment script, for scoring hand-built diffs.
struct ScriptOp {
  char kind;  // 'C','S','D','I'
  std::string from, to;
};
inline double script_cost(const std::vector<ScriptOp>& ops, const DiffConfig& cfg) {
  double cost = 0;
  for (const auto& op : ops) {
    switch (op.kind) {
      case 'C': break;
      case 'S':
        cost += 1.0 + cfg.epsilon * std::abs(static_cast<double>(scalar_length(op.from)) -
                                             static_cast<double>(scalar_length(op.to)));
        break;
      case 'D': cost += cfg.delete_cost; break;
      case 'I': cost += cfg.insert_cost; break;
      default: throw std::logic_error("bad script op");
    }
  }
  return cost;
}

// Unit-cost Levenshtein over token vectors.
inline size_t token_edit_distance(const std::vector<Token>& a, const std::vector<Token>& b) {
  std::vector<size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= b.size(); ++j) {
      size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Random token from a small alphabet with differing character lengths so the
// epsilon offset matters.
inline Token random_token(Rng& rng) {
  static const char* alphabet[] = {"a", "bb", "ccc"};
  return alphabet[rng.next_below(3)];
}

inline std::vector<Token> random_tokens(Rng& rng, size_t max_len) {
  std::vector<Token> out(rng.next_below(max_len + 1));
  for (auto& t : out) t = random_token(rng);
  return out;
}

// GEC-shaped random pair: y is a clean sentence, x a corrupted copy (word
// drops, spurious function words, word swaps, case flips). Mirrors how real
// parallel correction data relates source to target.
inline std::pair<TokenSequence, TokenSequence> random_gec_pair(Rng& rng) {
  static const char* content[] = {"bolt",   "runner", "race",   "crowd",  "stadium", "team",
                                  "winner", "record", "medal",  "coach",  "morning", "training",
                                  "effort", "speed",  "track",  "result", "season",  "game"};
  static const char* function_words[] = {"the", "a", "to", "of", "in", "and", "could", "have"};
  size_t n = 3 + rng.next_below(6);
  std::vector<Token> clean;
  for (size_t i = 0; i < n; ++i) {
    if (rng.next_below(4) == 0)
      clean.push_back(function_words[rng.next_below(8)]);
    else
      clean.push_back(content[rng.next_below(18)]);
  }
  std::vector<Token> noisy = clean;
  size_t corruptions = 1 + rng.next_below(3);
  for (size_t c = 0; c < corruptions && !noisy.empty(); ++c) {
    switch (rng.next_below(4)) {
      case 0:  // drop a word (the corrector must append)
        noisy.erase(noisy.begin() + static_cast<ptrdiff_t>(rng.next_below(noisy.size())));
        break;
      case 1:  // spurious function word (the corrector must delete)
        noisy.insert(noisy.begin() + static_cast<ptrdiff_t>(rng.next_below(noisy.size() + 1)),
                     function_words[rng.next_below(8)]);
        break;
      case 2: {  // wrong word (replace)
        size_t pos = rng.next_below(noisy.size());
        noisy[pos] = content[rng.next_below(18)];
        break;
      }
      case 3: {  // case flip (transform)
        size_t pos = rng.next_below(noisy.size());
        noisy[pos][0] = static_cast<char>(std::toupper(static_cast<unsigned char>(noisy[pos][0])));
        break;
      }
    }
  }
  return {wrap_boundaries(std::move(noisy)), wrap_boundaries(std::move(clean))};
}

// A deterministic 50-pair word-mode toy corpus exercising appends, deletes,
// replaces and case/suffix transforms.
inline std::vector<std::pair<std::string, std::string>> toy_pairs_50() {
  std::vector<std::pair<std::string, std::string>> base = {
      {"he play football", "he plays football"},
      {"she like apples", "she likes apples"},
      {"they walk home", "they walked home"},
      {"i want learn", "i want to learn"},
      {"we visit museum", "we visit the museum"},
      {"he is engineer", "he is an engineer"},
      {"cats chase mouse", "cats chase the mouse"},
      {"she go to school", "she goes to school"},
      {"it rain today", "it rains today"},
      {"birds sing song", "birds sing a song"},
  };
  std::vector<std::pair<std::string, std::string>> out;
  const char* subjects[] = {"john", "mary", "tom", "anna", "peter"};
  for (int k = 0; k < 5; ++k)
    for (auto& [s, t] : base)
      out.push_back({std::string(subjects[k]) + " said " + s, std::string(subjects[k]) + " said " + t});
  return out;
}

}  // namespace pie::testing
