#include "pie/synth.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

#include "json.hpp"
#include "pie/transforms.hpp"

namespace pie {

const char* to_string(SynthErrorType t) {
  switch (t) {
    case SynthErrorType::Append: return "append";
    case SynthErrorType::Verb: return "verb";
    case SynthErrorType::Replace: return "replace";
    case SynthErrorType::Delete: return "delete";
  }
  return "?";
}

namespace {
void check_prob_vector(const double* p, size_t n, const char* what) {
  double sum = 0;
  for (size_t i = 0; i < n; ++i) {
    if (p[i] < 0) throw DataError(std::string(what) + ": negative probability");
    sum += p[i];
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw DataError(std::string(what) + ": probabilities sum to " + std::to_string(sum));
}
}  // namespace

void SynthConfig::validate() const {
  check_prob_vector(error_count_probs.data(), error_count_probs.size(), "error_count_probs");
  check_prob_vector(error_type_probs.data(), error_type_probs.size(), "error_type_probs");
  if (error_type_probs[static_cast<size_t>(SynthErrorType::Delete)] > 0 ||
      error_type_probs[static_cast<size_t>(SynthErrorType::Replace)] > 0) {
    if (spurious_words.empty())
      throw DataError("spurious word list is empty but delete/replace errors have probability");
  }
  if (error_type_probs[static_cast<size_t>(SynthErrorType::Verb)] > 0 && verb_alternatives.empty())
    throw DataError("verb lexicon is empty but verb errors have probability");
}

size_t sample_multinoulli(const std::vector<double>& probs, Rng& rng) {
  check_prob_vector(probs.data(), probs.size(), "multinoulli");
  double u = rng.next_double();
  double acc = 0;
  for (size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

namespace {

const std::string& sample_weighted(const std::vector<std::pair<std::string, double>>& items,
                                   Rng& rng) {
  double total = 0;
  for (auto& [w, weight] : items) total += weight;
  double u = rng.next_double() * total;
  double acc = 0;
  for (auto& [w, weight] : items) {
    acc += weight;
    if (u < acc) return w;
  }
  return items.back().first;
}

}  // namespace

std::pair<std::vector<Token>, std::vector<AppliedError>> corrupt_sentence(
    const std::vector<Token>& clean, const SynthConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<Token> sent = clean;
  std::vector<AppliedError> applied;
  std::vector<double> count_probs(cfg.error_count_probs.begin(), cfg.error_count_probs.end());
  std::vector<double> type_probs(cfg.error_type_probs.begin(), cfg.error_type_probs.end());
  size_t error_count = sample_multinoulli(count_probs, rng);
  for (size_t k = 0; k < error_count; ++k) {
    auto type = static_cast<SynthErrorType>(sample_multinoulli(type_probs, rng));
    AppliedError rec;
    rec.type = type;
    switch (type) {
      case SynthErrorType::Append: {
        if (sent.empty()) {
          rec.skipped = true;
          break;
        }
        size_t pos = static_cast<size_t>(rng.next_below(sent.size()));
        rec.detail = "dropped '" + sent[pos] + "'";
        sent.erase(sent.begin() + static_cast<ptrdiff_t>(pos));
        break;
      }
      case SynthErrorType::Delete: {
        size_t pos = static_cast<size_t>(rng.next_below(sent.size() + 1));
        const std::string& w = sample_weighted(cfg.spurious_words, rng);
        rec.detail = "inserted '" + w + "'";
        sent.insert(sent.begin() + static_cast<ptrdiff_t>(pos), w);
        break;
      }
      case SynthErrorType::Replace: {
        if (sent.empty()) {
          rec.skipped = true;
          break;
        }
        size_t pos = static_cast<size_t>(rng.next_below(sent.size()));
        const std::string& w = sample_weighted(cfg.spurious_words, rng);
        rec.detail = "replaced '" + sent[pos] + "' with '" + w + "'";
        sent[pos] = w;
        break;
      }
      case SynthErrorType::Verb: {
        std::vector<size_t> verb_positions;
        for (size_t i = 0; i < sent.size(); ++i)
          if (cfg.verb_alternatives.count(sent[i])) verb_positions.push_back(i);
        if (verb_positions.empty()) {
          rec.skipped = true;
          break;
        }
        size_t pos = verb_positions[static_cast<size_t>(rng.next_below(verb_positions.size()))];
        const auto& alts = cfg.verb_alternatives.at(sent[pos]);
        const std::string& w = alts[static_cast<size_t>(rng.next_below(alts.size()))];
        rec.detail = "verb '" + sent[pos] + "' -> '" + w + "'";
        sent[pos] = w;
        break;
      }
    }
    applied.push_back(std::move(rec));
  }
  return {std::move(sent), std::move(applied)};
}

SynthStats generate_corpus(std::istream& clean_in, std::ostream& noisy_out,
                           std::ostream& clean_out, const SynthConfig& cfg) {
  cfg.validate();
  SynthStats stats;
  std::string line;
  uint64_t line_no = 0;
  while (std::getline(clean_in, line)) {
    Rng rng = Rng::derive(cfg.seed, line_no);
    std::vector<Token> clean = tokenize_line(line, cfg.mode);
    auto [noisy, applied] = corrupt_sentence(clean, cfg, rng);
    size_t applied_count = 0;
    for (const auto& rec : applied) {
      if (rec.skipped) {
        ++stats.skipped;
        continue;
      }
      ++applied_count;
      ++stats.type_hist[static_cast<size_t>(rec.type)];
    }
    ++stats.count_hist[std::min<size_t>(applied.size(), 4)];
    std::string sep = cfg.mode == TokenMode::Word ? " " : "";
    for (size_t i = 0; i < noisy.size(); ++i) {
      if (i) noisy_out << sep;
      noisy_out << noisy[i];
    }
    noisy_out << '\n';
    for (size_t i = 0; i < clean.size(); ++i) {
      if (i) clean_out << sep;
      clean_out << clean[i];
    }
    clean_out << '\n';
    ++stats.sentences;
    ++line_no;
  }
  return stats;
}

std::vector<std::pair<std::string, double>> default_spurious_words() {
  return {{"the", 100}, {"a", 80},   {"an", 30},  {"to", 75},  {"of", 70},  {"in", 65},
          {"for", 40},  {"on", 38},  {"with", 30},{"at", 25},  {"by", 22},  {"is", 50},
          {"are", 35},  {"was", 30}, {"were", 20},{"be", 28},  {"been", 15},{"and", 45},
          {"or", 18},   {"but", 15}, {"that", 32},{"this", 20},{"it", 25},  {"as", 22},
          {"not", 18}};
}

std::map<std::string, std::vector<std::string>> default_verb_lexicon() {
  // Small seed verb list expanded through the suffix-transform families
  // (base, -s/-es, -ed/-d, -ing with e-drop).
  const char* verbs[] = {"play", "use",  "walk", "talk",  "work",  "move",  "live",
                         "like", "want", "need", "help",  "call",  "ask",   "look",
                         "turn", "start","show", "open",  "close", "visit", "stay",
                         "watch","follow","create","join", "learn", "love",  "plan"};
  std::map<std::string, std::vector<std::string>> lex;
  for (const char* vb : verbs) {
    std::string base = vb;
    bool ends_e = base.back() == 'e';
    bool sibilant = base.ends_with("ch") || base.ends_with("sh") || base.back() == 's' ||
                    base.back() == 'x';
    std::vector<std::string> forms{base};
    forms.push_back(sibilant ? base + "es" : base + "s");
    forms.push_back(ends_e ? base + "d" : base + "ed");
    forms.push_back(ends_e ? base.substr(0, base.size() - 1) + "ing" : base + "ing");
    for (const std::string& f : forms) {
      std::vector<std::string> alts;
      for (const std::string& g : forms)
        if (g != f) alts.push_back(g);
      lex[f] = std::move(alts);
    }
  }
  return lex;
}

std::vector<std::pair<std::string, double>> load_spurious_words(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open spurious word list: " + path);
  std::vector<std::pair<std::string, double>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("malformed spurious word line: " + line);
    out.push_back({line.substr(0, tab), std::stod(line.substr(tab + 1))});
  }
  return out;
}

std::map<std::string, std::vector<std::string>> load_verb_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open verb lexicon: " + path);
  // base<TAB>form lines; all forms sharing a base become mutual alternatives
  std::map<std::string, std::vector<std::string>> groups;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("malformed verb lexicon line: " + line);
    std::string base = line.substr(0, tab), form = line.substr(tab + 1);
    auto& g = groups[base];
    if (g.empty()) g.push_back(base);
    g.push_back(form);
  }
  std::map<std::string, std::vector<std::string>> lex;
  for (auto& [base, forms] : groups) {
    for (const std::string& f : forms) {
      std::vector<std::string> alts;
      for (const std::string& g : forms)
        if (g != f) alts.push_back(g);
      lex[f] = std::move(alts);
    }
  }
  return lex;
}

SynthConfig load_synth_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open synth config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("invalid synth config JSON: ") + ex.what());
  }
  SynthConfig cfg;
  if (j.contains("error_count_probs")) {
    auto v = j["error_count_probs"].get<std::vector<double>>();
    if (v.size() != 5) throw DataError("error_count_probs must have 5 entries");
    std::copy(v.begin(), v.end(), cfg.error_count_probs.begin());
  }
  if (j.contains("error_type_probs")) {
    auto v = j["error_type_probs"].get<std::vector<double>>();
    if (v.size() != 4) throw DataError("error_type_probs must have 4 entries");
    std::copy(v.begin(), v.end(), cfg.error_type_probs.begin());
  }
  if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
  if (j.contains("mode")) cfg.mode = token_mode_from_string(j["mode"].get<std::string>());
  if (j.contains("spurious_words") && !j["spurious_words"].is_null())
    cfg.spurious_words = load_spurious_words(j["spurious_words"].get<std::string>());
  else
    cfg.spurious_words = default_spurious_words();
  if (j.contains("verb_lexicon") && !j["verb_lexicon"].is_null())
    cfg.verb_alternatives = load_verb_lexicon(j["verb_lexicon"].get<std::string>());
  else
    cfg.verb_alternatives = default_verb_lexicon();
  cfg.validate();
  return cfg;
}

}  // namespace pie
