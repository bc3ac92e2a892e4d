#include "pie/model.hpp"

namespace pie {

const char* to_string(HeadMode m) {
  return m == HeadMode::Factorized ? "factorized" : "default";
}

HeadMode head_mode_from_string(const std::string& s) {
  if (s == "factorized") return HeadMode::Factorized;
  if (s == "default") return HeadMode::Default;
  throw DataError("unknown head mode: " + s);
}

void ModelConfig::validate() const {
  if (num_layers < 1) throw DataError("num_layers must be >= 1");
  if (hidden_size < 1 || intermediate_size < 1) throw DataError("hidden sizes must be >= 1");
  if (num_heads < 1 || hidden_size % num_heads != 0)
    throw DataError("hidden_size " + std::to_string(hidden_size) +
                    " must be divisible by num_heads " + std::to_string(num_heads));
  if (max_positions < 3) throw DataError("max_positions must cover at least one token plus markers");
  if (dropout < 0.0 || dropout >= 1.0) throw DataError("dropout must be in [0,1)");
}

std::shared_ptr<const AttentionMask> build_edit_attention_mask(int64_t L, int64_t n) {
  auto mask = std::make_shared<AttentionMask>(3 * L);
  for (int64_t i = 0; i < L; ++i) {
    if (i < n) {
      for (int64_t j = 0; j < n; ++j) {
        mask->at(i, j) = 1;                      // h_i over all h_j
        if (j != i) mask->at(L + i, j) = 1;      // r_i over h_j, j != i
        mask->at(2 * L + i, j) = 1;              // a_i over all h_j
      }
    } else {
      mask->at(i, i) = 1;  // padding rows attend themselves only
    }
    mask->at(L + i, L + i) = 1;          // r_i over itself
    mask->at(2 * L + i, 2 * L + i) = 1;  // a_i over itself
  }
  return mask;
}

std::shared_ptr<const AttentionMask> build_plain_attention_mask(int64_t L, int64_t n) {
  auto mask = std::make_shared<AttentionMask>(L);
  for (int64_t i = 0; i < L; ++i) {
    if (i < n)
      for (int64_t j = 0; j < n; ++j) mask->at(i, j) = 1;
    else
      mask->at(i, i) = 1;
  }
  return mask;
}

}  // namespace pie
