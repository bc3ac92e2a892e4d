#pragma once

#include <string>
#include <vector>

#include "pie/tokens.hpp"

namespace pie {

struct ParallelCorpus {
  std::vector<std::pair<TokenSequence, TokenSequence>> pairs;
  TokenMode mode = TokenMode::Word;
  size_t skipped_empty = 0;
};

// Two aligned files, one sequence per line. Pairs with an empty line on
// either side are skipped (and counted); a line-count mismatch is an error
// naming both counts.
ParallelCorpus load_parallel(const std::string& src_path, const std::string& tgt_path,
                             TokenMode mode);

std::vector<TokenSequence> load_lines(const std::string& path, TokenMode mode,
                                      bool keep_empty = true);

std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::vector<std::string>& lines, const std::string& path);

}  // namespace pie
