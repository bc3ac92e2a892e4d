#pragma once

#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "pie/model.hpp"

namespace pie {

struct CheckpointVersionError : DataError {
  using DataError::DataError;
};
struct CheckpointDigestError : DataError {
  using DataError::DataError;
};
struct CheckpointTruncatedError : DataError {
  using DataError::DataError;
};

// Little-endian container: magic "PIE1", u32 version, length-prefixed JSON
// config block (model config + vocabulary + Σ_a + transforms + digests),
// then named tensors (name, dtype tag, shape, row-major payload).
inline constexpr uint32_t kCheckpointVersion = 1;

struct NamedRawTensor {
  std::string name;
  uint8_t dtype = 0;  // 0 = f32, 1 = f64
  std::vector<int64_t> shape;
  std::vector<unsigned char> raw;
};

struct CheckpointData {
  uint32_t version = kCheckpointVersion;
  ModelConfig config;
  HeadMode head_mode = HeadMode::Factorized;
  TokenMode token_mode = TokenMode::Word;
  std::vector<std::string> vocab_tokens;
  InsertDictionary dict;
  TransformTable table;
  std::string vocab_digest, dict_digest, table_digest;
  std::vector<NamedRawTensor> tensors;
  bool has_optimizer = false;
  int64_t optimizer_step = 0;
  AdamConfig optimizer_config;
};

CheckpointData read_checkpoint_file(const std::string& path);
void write_checkpoint_file(const CheckpointData& data, const std::string& path);

// Digest check against artifacts the caller compiled independently (e.g. when
// resuming training); throws CheckpointDigestError on mismatch.
void verify_checkpoint_artifacts(const CheckpointData& data, const InsertDictionary* expected_dict,
                                 const TransformTable* expected_table,
                                 const Vocabulary* expected_vocab);

namespace detail {
template <class T>
constexpr uint8_t dtype_tag() {
  return sizeof(T) == 4 ? 0 : 1;
}
}  // namespace detail

template <class T>
NamedRawTensor pack_tensor(const std::string& name, const Tensor<T>& t) {
  NamedRawTensor out;
  out.name = name;
  out.dtype = detail::dtype_tag<T>();
  out.shape = t.shape;
  out.raw.resize(t.v.size() * sizeof(T));
  std::memcpy(out.raw.data(), t.v.data(), out.raw.size());
  return out;
}

template <class T>
Tensor<T> unpack_tensor(const NamedRawTensor& t) {
  int64_t numel = Tensor<T>::numel_of(t.shape);
  Tensor<T> out(t.shape);
  if (t.dtype == detail::dtype_tag<T>()) {
    if (t.raw.size() != static_cast<size_t>(numel) * sizeof(T))
      throw CheckpointTruncatedError("tensor '" + t.name + "' payload size mismatch");
    std::memcpy(out.v.data(), t.raw.data(), t.raw.size());
  } else if (t.dtype == 0) {
    std::vector<float> tmp(static_cast<size_t>(numel));
    if (t.raw.size() != tmp.size() * sizeof(float))
      throw CheckpointTruncatedError("tensor '" + t.name + "' payload size mismatch");
    std::memcpy(tmp.data(), t.raw.data(), t.raw.size());
    for (int64_t i = 0; i < numel; ++i) out.v[i] = static_cast<T>(tmp[static_cast<size_t>(i)]);
  } else {
    std::vector<double> tmp(static_cast<size_t>(numel));
    if (t.raw.size() != tmp.size() * sizeof(double))
      throw CheckpointTruncatedError("tensor '" + t.name + "' payload size mismatch");
    std::memcpy(tmp.data(), t.raw.data(), t.raw.size());
    for (int64_t i = 0; i < numel; ++i) out.v[i] = static_cast<T>(tmp[static_cast<size_t>(i)]);
  }
  return out;
}

template <class T>
CheckpointData make_checkpoint(PieModel<T>& model, const Adam<T>* optimizer = nullptr) {
  CheckpointData data;
  data.config = model.config();
  data.head_mode = model.head_mode();
  data.token_mode = model.mode();
  data.vocab_tokens = model.vocab().tokens();
  data.dict = model.dict();
  data.table = model.transforms();
  data.vocab_digest = model.vocab().digest();
  data.dict_digest = insert_dictionary_digest(model.dict());
  data.table_digest = transform_table_digest(model.transforms());
  for (auto* p : model.parameters()) data.tensors.push_back(pack_tensor(p->name, p->value));
  if (optimizer) {
    data.has_optimizer = true;
    data.optimizer_step = optimizer->step_count();
    data.optimizer_config = optimizer->config();
    for (auto& [name, slot] : const_cast<Adam<T>*>(optimizer)->slots()) {
      data.tensors.push_back(pack_tensor("opt." + name + ".m", slot.m));
      data.tensors.push_back(pack_tensor("opt." + name + ".v", slot.v));
    }
  }
  return data;
}

template <class T>
std::unique_ptr<PieModel<T>> model_from_checkpoint(const CheckpointData& data) {
  InsertDictionary dict = data.dict;
  auto model = std::make_unique<PieModel<T>>(data.config, Vocabulary(data.vocab_tokens), dict,
                                             data.table, data.token_mode, data.head_mode,
                                             /*init_seed=*/0);
  size_t restored = 0;
  for (const auto& nt : data.tensors) {
    if (nt.name.rfind("opt.", 0) == 0) continue;
    Parameter<T>& p = model->param(nt.name);
    Tensor<T> val = unpack_tensor<T>(nt);
    if (val.shape != p.value.shape)
      throw DataError("checkpoint tensor '" + nt.name + "' has shape " + val.shape_str() +
                      ", model expects " + p.value.shape_str());
    p.value = std::move(val);
    ++restored;
  }
  if (restored != model->parameters().size())
    throw CheckpointTruncatedError("checkpoint is missing model tensors (" +
                                   std::to_string(restored) + " of " +
                                   std::to_string(model->parameters().size()) + ")");
  return model;
}

template <class T>
Adam<T> optimizer_from_checkpoint(const CheckpointData& data) {
  Adam<T> opt(data.optimizer_config);
  opt.set_step_count(data.optimizer_step);
  for (const auto& nt : data.tensors) {
    if (nt.name.rfind("opt.", 0) != 0) continue;
    std::string rest = nt.name.substr(4);
    bool is_m = rest.ends_with(".m");
    std::string pname = rest.substr(0, rest.size() - 2);
    auto& slot = opt.slots()[pname];
    (is_m ? slot.m : slot.v) = unpack_tensor<T>(nt);
  }
  return opt;
}

template <class T>
void save_checkpoint(PieModel<T>& model, const std::string& path,
                     const Adam<T>* optimizer = nullptr) {
  write_checkpoint_file(make_checkpoint(model, optimizer), path);
}

template <class T>
std::unique_ptr<PieModel<T>> load_checkpoint(const std::string& path,
                                             CheckpointData* out_data = nullptr) {
  CheckpointData data = read_checkpoint_file(path);
  auto model = model_from_checkpoint<T>(data);
  if (out_data) *out_data = std::move(data);
  return model;
}

}  // namespace pie
