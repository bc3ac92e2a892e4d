#include "pie/editspace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "json.hpp"
#include "pie/hash.hpp"

namespace pie {

char edit_kind_char(EditKind k) {
  switch (k) {
    case EditKind::Copy: return 'C';
    case EditKind::Delete: return 'D';
    case EditKind::Append: return 'A';
    case EditKind::Replace: return 'R';
    case EditKind::Transform: return 'T';
  }
  return '?';
}

EditKind edit_kind_from_char(char c) {
  switch (c) {
    case 'C': return EditKind::Copy;
    case 'D': return EditKind::Delete;
    case 'A': return EditKind::Append;
    case 'R': return EditKind::Replace;
    case 'T': return EditKind::Transform;
  }
  throw DataError(std::string("unknown edit op code '") + c + "'");
}

namespace {

enum class Step : uint8_t { None, Match, Sub, Del, Ins };

}  // namespace

DiffResult modified_levenshtein_diff(const TokenSequence& x, const TokenSequence& y,
                                     const DiffConfig& cfg) {
  if (!x.boundary_wrapped || !y.boundary_wrapped)
    throw DataError("diff requires boundary-wrapped sequences");
  const size_t n = x.tokens.size(), m = y.tokens.size();
  if (n > cfg.max_tokens || m > cfg.max_tokens)
    throw DataError("input too long for diff: " + std::to_string(std::max(n, m)) +
                    " tokens exceeds maximum " + std::to_string(cfg.max_tokens));

  // DP over prefix costs. Cell (i,j) aligns x[0..i) with y[0..j).
  std::vector<double> cost((n + 1) * (m + 1), 0.0);
  std::vector<Step> step((n + 1) * (m + 1), Step::None);
  auto at = [m](size_t i, size_t j) { return i * (m + 1) + j; };

  for (size_t i = 1; i <= n; ++i) {
    cost[at(i, 0)] = cost[at(i - 1, 0)] + cfg.delete_cost;
    step[at(i, 0)] = Step::Del;
  }
  for (size_t j = 1; j <= m; ++j) {
    cost[at(0, j)] = cost[at(0, j - 1)] + cfg.insert_cost;
    step[at(0, j)] = Step::Ins;
  }
  for (size_t i = 1; i <= n; ++i) {
    const Token& xi = x.tokens[i - 1];
    const double xi_len = static_cast<double>(scalar_length(xi));
    for (size_t j = 1; j <= m; ++j) {
      const Token& yj = y.tokens[j - 1];
      bool equal = (xi == yj);
      double sub_cost =
          equal ? 0.0 : 1.0 + cfg.epsilon * std::abs(xi_len - static_cast<double>(scalar_length(yj)));
      // Candidates are evaluated in tie-break preference order (substitution,
      // then insert, then delete) and replaced only on strict improvement;
      // this reproduces the appendix Diff-1 alignment among equal-cost diffs.
      double best = cost[at(i - 1, j - 1)] + sub_cost;
      Step chosen = equal ? Step::Match : Step::Sub;
      double ins = cost[at(i, j - 1)] + cfg.insert_cost;
      if (ins < best) {
        best = ins;
        chosen = Step::Ins;
      }
      double del = cost[at(i - 1, j)] + cfg.delete_cost;
      if (del < best) {
        best = del;
        chosen = Step::Del;
      }
      cost[at(i, j)] = best;
      step[at(i, j)] = chosen;
    }
  }

  // Backtrace, then post-process: substitutions become D+I at the same
  // anchor, adjacent inserts at one anchor merge into a q-gram payload.
  struct RawOp {
    Step s;
    size_t i, j;
  };
  std::vector<RawOp> raw;
  {
    size_t i = n, j = m;
    while (i > 0 || j > 0) {
      Step s = step[at(i, j)];
      raw.push_back({s, i, j});
      switch (s) {
        case Step::Match:
        case Step::Sub: --i; --j; break;
        case Step::Del: --i; break;
        case Step::Ins: --j; break;
        case Step::None: throw ProgrammingError("broken diff backtrace");
      }
    }
    std::reverse(raw.begin(), raw.end());
  }

  DiffResult out;
  out.cost = cost[at(n, m)];
  for (const RawOp& op : raw) {
    switch (op.s) {
      case Step::Match:
        out.ops.push_back({DiffKind::Copy, op.i - 1, {}});
        break;
      case Step::Sub:
        out.ops.push_back({DiffKind::Delete, op.i - 1, {}});
        out.ops.push_back({DiffKind::Insert, op.i - 1, {y.tokens[op.j - 1]}});
        break;
      case Step::Del:
        out.ops.push_back({DiffKind::Delete, op.i - 1, {}});
        break;
      case Step::Ins: {
        size_t anchor = op.i == 0 ? 0 : op.i - 1;
        if (!out.ops.empty() && out.ops.back().kind == DiffKind::Insert &&
            out.ops.back().pos == anchor) {
          out.ops.back().payload.push_back(y.tokens[op.j - 1]);
        } else {
          out.ops.push_back({DiffKind::Insert, anchor, {y.tokens[op.j - 1]}});
        }
        break;
      }
      case Step::None: break;
    }
  }
  return out;
}

bool InsertDictionary::contains(const std::string& w) const {
  return index_of(w).has_value();
}

std::optional<size_t> InsertDictionary::index_of(const std::string& w) const {
  for (size_t i = 0; i < entries.size(); ++i)
    if (entries[i].text == w) return i;
  return std::nullopt;
}

namespace {

void collect_inserts(const std::vector<std::pair<TokenSequence, TokenSequence>>& pairs,
                     size_t begin, size_t end, size_t q, TokenMode mode, const DiffConfig& cfg,
                     std::map<std::string, uint64_t>& counts, size_t& long_runs) {
  for (size_t p = begin; p < end; ++p) {
    DiffResult diff = modified_levenshtein_diff(pairs[p].first, pairs[p].second, cfg);
    bool has_long_run = false;
    for (const DiffOp& op : diff.ops) {
      if (op.kind != DiffKind::Insert) continue;
      if (op.payload.size() > q) {
        has_long_run = true;
        continue;
      }
      counts[join_payload(op.payload, mode)] += 1;
    }
    if (has_long_run) ++long_runs;
  }
}

}  // namespace

InsertDictionary build_insert_dictionary(
    const std::vector<std::pair<TokenSequence, TokenSequence>>& pairs, size_t M, size_t q,
    TokenMode mode, const DiffConfig& cfg, DictionaryBuildStats* stats, int threads) {
  std::map<std::string, uint64_t> counts;
  size_t long_runs = 0;
  if (threads <= 1 || pairs.size() < 64) {
    collect_inserts(pairs, 0, pairs.size(), q, mode, cfg, counts, long_runs);
  } else {
    size_t nt = std::min<size_t>(threads, pairs.size());
    std::vector<std::map<std::string, uint64_t>> partial(nt);
    std::vector<size_t> partial_runs(nt, 0);
    std::vector<std::thread> workers;
    size_t chunk = (pairs.size() + nt - 1) / nt;
    for (size_t t = 0; t < nt; ++t) {
      size_t b = t * chunk, e = std::min(pairs.size(), b + chunk);
      workers.emplace_back([&, b, e, t] {
        collect_inserts(pairs, b, e, q, mode, cfg, partial[t], partial_runs[t]);
      });
    }
    for (auto& w : workers) w.join();
    // Merge in worker-index order; integer counts make the merge exact.
    for (size_t t = 0; t < nt; ++t) {
      for (auto& [k, v] : partial[t]) counts[k] += v;
      long_runs += partial_runs[t];
    }
  }

  std::vector<InsertDictionary::Entry> all;
  all.reserve(counts.size());
  for (auto& [text, count] : counts) all.push_back({text, count});
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.text < b.text;
  });
  if (all.size() > M) all.resize(M);

  if (stats) {
    stats->pairs = pairs.size();
    stats->distinct_inserts = counts.size();
    stats->sentences_with_long_runs = long_runs;
  }
  InsertDictionary dict;
  dict.entries = std::move(all);
  dict.q = q;
  dict.capacity = M;
  return dict;
}

InsertDictionary load_insert_dictionary(const std::string& path, size_t q) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open insert dictionary: " + path);
  InsertDictionary dict;
  dict.q = q;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    size_t tab = line.rfind('\t');
    if (tab == std::string::npos) throw DataError("malformed dictionary line: " + line);
    dict.entries.push_back({line.substr(0, tab), std::stoull(line.substr(tab + 1))});
  }
  dict.capacity = dict.entries.size();
  return dict;
}

void save_insert_dictionary(const InsertDictionary& dict, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write insert dictionary: " + path);
  for (const auto& e : dict.entries) out << e.text << '\t' << e.count << '\n';
}

std::string insert_dictionary_digest(const InsertDictionary& dict) {
  std::string blob;
  for (const auto& e : dict.entries) {
    blob += e.text;
    blob += '\t';
    blob += std::to_string(e.count);
    blob += '\n';
  }
  return digest_hex(blob);
}

EditSequence seq2edits(const TokenSequence& x, const TokenSequence& y,
                       const InsertDictionary& dict, const TransformTable& table,
                       TokenMode mode, const DiffConfig& cfg) {
  DiffResult diff = modified_levenshtein_diff(x, y, cfg);
  EditSequence e;
  e.ops.assign(x.tokens.size(), EditOp::copy());
  for (const DiffOp& op : diff.ops) {
    EditOp& slot = e.ops.at(op.pos);
    switch (op.kind) {
      case DiffKind::Copy:
        slot = EditOp::copy();
        break;
      case DiffKind::Delete:
        slot = EditOp::del();
        break;
      case DiffKind::Insert: {
        std::string w = join_payload(op.payload, mode);
        if (slot.kind == EditKind::Delete) {
          std::optional<int> rule;
          if (op.payload.size() == 1 && !table.empty())
            rule = match_transformation(x.tokens[op.pos], w, table);
          if (rule)
            slot = EditOp::transform(*rule);
          else if (dict.contains(w))
            slot = EditOp::replace(w);
          else
            slot = EditOp::copy();
        } else if (slot.kind == EditKind::Copy) {
          if (dict.contains(w)) slot = EditOp::append(w);
          // else: insert dropped, position stays Copy
        }
        break;
      }
    }
  }
  return e;
}

TokenSequence apply_edits(const TokenSequence& x, const EditSequence& e,
                          const TransformTable& table, TokenMode mode) {
  const size_t n = x.tokens.size();
  if (e.ops.size() != n)
    throw DataError("malformed edit sequence: " + std::to_string(e.ops.size()) +
                    " edits for " + std::to_string(n) + " tokens");
  TokenSequence out;
  out.boundary_wrapped = x.boundary_wrapped;
  auto emit_payload = [&](const std::string& w) {
    for (auto& t : split_payload(w, mode)) out.tokens.push_back(t);
  };
  for (size_t i = 0; i < n; ++i) {
    const EditOp& op = e.ops[i];
    bool is_start = x.boundary_wrapped && i == 0;
    bool is_end = x.boundary_wrapped && i + 1 == n;
    if (is_start || is_end) {
      out.tokens.push_back(x.tokens[i]);
      if (is_start && op.kind == EditKind::Append) emit_payload(op.arg);
      continue;
    }
    switch (op.kind) {
      case EditKind::Copy:
        out.tokens.push_back(x.tokens[i]);
        break;
      case EditKind::Delete:
        break;
      case EditKind::Append:
        out.tokens.push_back(x.tokens[i]);
        emit_payload(op.arg);
        break;
      case EditKind::Replace:
        emit_payload(op.arg);
        break;
      case EditKind::Transform: {
        auto res = apply_transform(rule_by_id(table, op.rule_id), x.tokens[i]);
        out.tokens.push_back(res ? *res : x.tokens[i]);
        break;
      }
    }
  }
  return out;
}

std::string edit_sequence_to_json(const EditSequence& e) {
  nlohmann::json arr = nlohmann::json::array();
  for (size_t i = 0; i < e.ops.size(); ++i) {
    const EditOp& op = e.ops[i];
    nlohmann::json rec{{"pos", i}, {"op", std::string(1, edit_kind_char(op.kind))}};
    if (op.kind == EditKind::Append || op.kind == EditKind::Replace) rec["arg"] = op.arg;
    if (op.kind == EditKind::Transform) rec["rule"] = op.rule_id;
    arr.push_back(std::move(rec));
  }
  return nlohmann::json{{"edits", std::move(arr)}}.dump();
}

EditSequence edit_sequence_from_json(const std::string& line) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("malformed edit record: ") + ex.what());
  }
  if (!doc.contains("edits") || !doc["edits"].is_array())
    throw DataError("edit record missing 'edits' array");
  EditSequence e;
  e.ops.resize(doc["edits"].size());
  for (const auto& rec : doc["edits"]) {
    size_t pos = rec.at("pos").get<size_t>();
    if (pos >= e.ops.size()) throw DataError("edit position out of range");
    std::string opc = rec.at("op").get<std::string>();
    if (opc.size() != 1) throw DataError("edit op must be a single character");
    EditOp op;
    op.kind = edit_kind_from_char(opc[0]);
    if (op.kind == EditKind::Append || op.kind == EditKind::Replace)
      op.arg = rec.at("arg").get<std::string>();
    if (op.kind == EditKind::Transform) op.rule_id = rec.at("rule").get<int>();
    e.ops[pos] = std::move(op);
  }
  return e;
}

}  // namespace pie
