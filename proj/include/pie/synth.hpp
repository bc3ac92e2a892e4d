#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "pie/rng.hpp"
#include "pie/tokens.hpp"

namespace pie {

// Error kinds are named after the edit the *corrector* must learn: an
// AppendError drops a word (fixed by an append), a DeleteError inserts a
// spurious word (fixed by a delete), a ReplaceError does both at one
// position, a VerbError swaps a verb's form.
enum class SynthErrorType { Append = 0, Verb = 1, Replace = 2, Delete = 3 };

const char* to_string(SynthErrorType t);

struct SynthConfig {
  std::array<double, 5> error_count_probs{0.05, 0.07, 0.25, 0.35, 0.28};
  std::array<double, 4> error_type_probs{0.30, 0.25, 0.25, 0.20};
  std::vector<std::pair<std::string, double>> spurious_words;  // word, weight
  std::map<std::string, std::vector<std::string>> verb_alternatives;
  uint64_t seed = 42;
  TokenMode mode = TokenMode::Word;

  void validate() const;
};

struct AppliedError {
  SynthErrorType type = SynthErrorType::Append;
  bool skipped = false;
  std::string detail;
};

// Inverse-CDF draw from a probability vector.
size_t sample_multinoulli(const std::vector<double>& probs, Rng& rng);

// Apply errorCount sampled errors sequentially to the evolving sentence.
// Inapplicable draws (no verb in the sentence, nothing left to drop) are
// recorded as skipped.
std::pair<std::vector<Token>, std::vector<AppliedError>> corrupt_sentence(
    const std::vector<Token>& clean, const SynthConfig& cfg, Rng& rng);

struct SynthStats {
  uint64_t sentences = 0;
  std::array<uint64_t, 5> count_hist{};
  std::array<uint64_t, 4> type_hist{};  // applied errors by type
  uint64_t skipped = 0;
};

// Streams line-by-line; noisy text is the source side, clean the target.
// Per-sentence RNG streams derive from (seed, line number).
SynthStats generate_corpus(std::istream& clean_in, std::ostream& noisy_out,
                           std::ostream& clean_out, const SynthConfig& cfg);

// Shipped defaults (the TSV files under data/ mirror these).
std::vector<std::pair<std::string, double>> default_spurious_words();
std::map<std::string, std::vector<std::string>> default_verb_lexicon();

std::vector<std::pair<std::string, double>> load_spurious_words(const std::string& path);
std::map<std::string, std::vector<std::string>> load_verb_lexicon(const std::string& path);

// JSON config file; omitted word lists fall back to the shipped defaults.
SynthConfig load_synth_config(const std::string& path);

}  // namespace pie
