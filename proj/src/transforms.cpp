#include "pie/transforms.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "pie/hash.hpp"

namespace pie {

const char* to_string(TransformFamily f) {
  switch (f) {
    case TransformFamily::AddSuffix: return "add_suffix";
    case TransformFamily::RemoveSuffix: return "remove_suffix";
    case TransformFamily::ReplaceSuffix: return "replace_suffix";
    case TransformFamily::CapitalizeFirst: return "capitalize_first";
    case TransformFamily::LowerFirst: return "lower_first";
  }
  return "?";
}

TransformFamily transform_family_from_string(const std::string& s) {
  if (s == "add_suffix") return TransformFamily::AddSuffix;
  if (s == "remove_suffix") return TransformFamily::RemoveSuffix;
  if (s == "replace_suffix") return TransformFamily::ReplaceSuffix;
  if (s == "capitalize_first") return TransformFamily::CapitalizeFirst;
  if (s == "lower_first") return TransformFamily::LowerFirst;
  throw DataError("unknown transform family: " + s);
}

namespace {
bool ends_with(const std::string& w, const std::string& suf) {
  return w.size() >= suf.size() && w.compare(w.size() - suf.size(), suf.size(), suf) == 0;
}
}  // namespace

std::optional<std::string> apply_transform(const TransformRule& rule, const std::string& word) {
  if (word.empty()) return std::nullopt;
  switch (rule.family) {
    case TransformFamily::AddSuffix:
      return word + rule.suffix_to;
    case TransformFamily::RemoveSuffix:
      if (!ends_with(word, rule.suffix_from) || word.size() <= rule.suffix_from.size())
        return std::nullopt;
      return word.substr(0, word.size() - rule.suffix_from.size());
    case TransformFamily::ReplaceSuffix:
      if (!ends_with(word, rule.suffix_from) || word.size() <= rule.suffix_from.size())
        return std::nullopt;
      return word.substr(0, word.size() - rule.suffix_from.size()) + rule.suffix_to;
    case TransformFamily::CapitalizeFirst: {
      unsigned char c = static_cast<unsigned char>(word[0]);
      if (!std::islower(c)) return std::nullopt;
      std::string out = word;
      out[0] = static_cast<char>(std::toupper(c));
      return out;
    }
    case TransformFamily::LowerFirst: {
      unsigned char c = static_cast<unsigned char>(word[0]);
      if (!std::isupper(c)) return std::nullopt;
      std::string out = word;
      out[0] = static_cast<char>(std::tolower(c));
      return out;
    }
  }
  return std::nullopt;
}

std::optional<int> match_transformation(const std::string& src, const std::string& dst,
                                        const TransformTable& table) {
  for (const auto& rule : table) {
    auto out = apply_transform(rule, src);
    if (out && *out == dst) return rule.id;
  }
  return std::nullopt;
}

const TransformRule& rule_by_id(const TransformTable& table, int id) {
  for (const auto& r : table)
    if (r.id == id) return r;
  throw ProgrammingError("no transform rule with id " + std::to_string(id));
}

TransformTable default_transform_table() {
  TransformTable t;
  auto add = [&](TransformFamily f, std::string from, std::string to) {
    t.push_back({static_cast<int>(t.size()), f, std::move(from), std::move(to)});
  };
  const char* suffixes[] = {"s", "d", "es", "ing", "ed", "ly", "er", "al", "n", "y", "ation"};
  const std::pair<const char*, const char*> replacements[] = {
      {"e", "ing"},  {"d", "t"},     {"d", "s"},      {"s", "ing"}, {"n", "ing"},
      {"nce", "t"},  {"s", "ed"},    {"ing", "ed"},   {"ing", "ion"}, {"ing", "ation"},
      {"t", "ce"},   {"y", "ic"},    {"t", "s"},      {"e", "al"},  {"y", "ily"},
      {"y", "ied"},  {"y", "ical"},  {"y", "ies"}};
  for (const char* s : suffixes) add(TransformFamily::AddSuffix, "", s);
  for (auto& [from, to] : replacements) add(TransformFamily::ReplaceSuffix, from, to);
  for (const char* s : suffixes) add(TransformFamily::RemoveSuffix, s, "");
  for (auto& [from, to] : replacements) add(TransformFamily::ReplaceSuffix, to, from);
  add(TransformFamily::CapitalizeFirst, "", "");
  add(TransformFamily::LowerFirst, "", "");
  return t;
}

TransformTable load_transform_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open transform table: " + path);
  TransformTable t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string family, from, to;
    std::getline(ss, family, '\t');
    std::getline(ss, from, '\t');
    std::getline(ss, to, '\t');
    t.push_back({static_cast<int>(t.size()), transform_family_from_string(family), from, to});
  }
  return t;
}

void save_transform_table(const TransformTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write transform table: " + path);
  for (const auto& r : table)
    out << to_string(r.family) << '\t' << r.suffix_from << '\t' << r.suffix_to << '\n';
}

std::string transform_table_digest(const TransformTable& table) {
  std::string blob;
  for (const auto& r : table) {
    blob += to_string(r.family);
    blob += '\t';
    blob += r.suffix_from;
    blob += '\t';
    blob += r.suffix_to;
    blob += '\n';
  }
  return digest_hex(blob);
}

}  // namespace pie
