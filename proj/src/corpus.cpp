#include "pie/corpus.hpp"

#include <fstream>

namespace pie {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_lines(const std::vector<std::string>& lines, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file: " + path);
  for (const auto& l : lines) out << l << '\n';
}

ParallelCorpus load_parallel(const std::string& src_path, const std::string& tgt_path,
                             TokenMode mode) {
  auto src = read_lines(src_path);
  auto tgt = read_lines(tgt_path);
  if (src.size() != tgt.size())
    throw DataError("line count mismatch: " + src_path + " has " + std::to_string(src.size()) +
                    " lines, " + tgt_path + " has " + std::to_string(tgt.size()));
  ParallelCorpus corpus;
  corpus.mode = mode;
  for (size_t i = 0; i < src.size(); ++i) {
    if (src[i].empty() || tgt[i].empty()) {
      ++corpus.skipped_empty;
      continue;
    }
    TokenSequence x = tokenize_and_wrap(src[i], mode);
    TokenSequence y = tokenize_and_wrap(tgt[i], mode);
    validate_tokens(x);
    validate_tokens(y);
    corpus.pairs.emplace_back(std::move(x), std::move(y));
  }
  return corpus;
}

std::vector<TokenSequence> load_lines(const std::string& path, TokenMode mode, bool keep_empty) {
  std::vector<TokenSequence> out;
  for (const auto& line : read_lines(path)) {
    if (line.empty() && !keep_empty) continue;
    TokenSequence seq = tokenize_and_wrap(line, mode);
    validate_tokens(seq);
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace pie
