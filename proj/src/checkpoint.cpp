#include "pie/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "pie/hash.hpp"

namespace pie {

namespace {

using nlohmann::json;

json config_to_json(const CheckpointData& d) {
  json mc{{"num_layers", d.config.num_layers},
          {"hidden_size", d.config.hidden_size},
          {"intermediate_size", d.config.intermediate_size},
          {"num_heads", d.config.num_heads},
          {"max_positions", d.config.max_positions},
          {"token_vocab_size", d.config.token_vocab_size},
          {"sigma_a_size", d.config.sigma_a_size},
          {"transform_count", d.config.transform_count},
          {"dropout", d.config.dropout},
          {"initializer_range", d.config.initializer_range}};
  json inserts = json::array();
  for (const auto& e : d.dict.entries) inserts.push_back(json::array({e.text, e.count}));
  json transforms = json::array();
  for (const auto& r : d.table)
    transforms.push_back(json::array({to_string(r.family), r.suffix_from, r.suffix_to}));
  json out{{"model", mc},
           {"head_mode", to_string(d.head_mode)},
           {"token_mode", to_string(d.token_mode)},
           {"vocab", d.vocab_tokens},
           {"inserts", inserts},
           {"insert_q", d.dict.q},
           {"transforms", transforms},
           {"digests",
            {{"vocab", d.vocab_digest}, {"inserts", d.dict_digest}, {"transforms", d.table_digest}}}};
  if (d.has_optimizer) {
    out["optimizer"] = {{"step", d.optimizer_step},
                        {"learning_rate", d.optimizer_config.learning_rate},
                        {"beta1", d.optimizer_config.beta1},
                        {"beta2", d.optimizer_config.beta2},
                        {"eps_stability", d.optimizer_config.eps_stability},
                        {"warmup_steps", d.optimizer_config.warmup_steps}};
  }
  return out;
}

void config_from_json(const json& j, CheckpointData& d) {
  const json& mc = j.at("model");
  d.config.num_layers = mc.at("num_layers").get<int>();
  d.config.hidden_size = mc.at("hidden_size").get<int>();
  d.config.intermediate_size = mc.at("intermediate_size").get<int>();
  d.config.num_heads = mc.at("num_heads").get<int>();
  d.config.max_positions = mc.at("max_positions").get<int>();
  d.config.token_vocab_size = mc.at("token_vocab_size").get<int>();
  d.config.sigma_a_size = mc.at("sigma_a_size").get<int>();
  d.config.transform_count = mc.at("transform_count").get<int>();
  d.config.dropout = mc.at("dropout").get<double>();
  d.config.initializer_range = mc.at("initializer_range").get<double>();
  d.head_mode = head_mode_from_string(j.at("head_mode").get<std::string>());
  d.token_mode = token_mode_from_string(j.at("token_mode").get<std::string>());
  d.vocab_tokens = j.at("vocab").get<std::vector<std::string>>();
  d.dict.entries.clear();
  for (const auto& e : j.at("inserts"))
    d.dict.entries.push_back({e.at(0).get<std::string>(), e.at(1).get<uint64_t>()});
  d.dict.q = j.at("insert_q").get<size_t>();
  d.dict.capacity = d.dict.entries.size();
  d.table.clear();
  for (const auto& r : j.at("transforms"))
    d.table.push_back({static_cast<int>(d.table.size()),
                       transform_family_from_string(r.at(0).get<std::string>()),
                       r.at(1).get<std::string>(), r.at(2).get<std::string>()});
  d.vocab_digest = j.at("digests").at("vocab").get<std::string>();
  d.dict_digest = j.at("digests").at("inserts").get<std::string>();
  d.table_digest = j.at("digests").at("transforms").get<std::string>();
  if (j.contains("optimizer")) {
    d.has_optimizer = true;
    const json& o = j.at("optimizer");
    d.optimizer_step = o.at("step").get<int64_t>();
    d.optimizer_config.learning_rate = o.at("learning_rate").get<double>();
    d.optimizer_config.beta1 = o.at("beta1").get<double>();
    d.optimizer_config.beta2 = o.at("beta2").get<double>();
    d.optimizer_config.eps_stability = o.at("eps_stability").get<double>();
    d.optimizer_config.warmup_steps = o.at("warmup_steps").get<int64_t>();
  }
}

template <class V>
void write_raw(std::ofstream& out, const V& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V read_raw(std::ifstream& in, const char* what) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (in.gcount() != sizeof(V))
    throw CheckpointTruncatedError(std::string("checkpoint truncated while reading ") + what);
  return v;
}

}  // namespace

void write_checkpoint_file(const CheckpointData& data, const std::string& path) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write("PIE1", 4);
    write_raw(out, kCheckpointVersion);
    std::string cfg = config_to_json(data).dump();
    write_raw(out, static_cast<uint64_t>(cfg.size()));
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    write_raw(out, static_cast<uint32_t>(data.tensors.size()));
    for (const auto& t : data.tensors) {
      write_raw(out, static_cast<uint32_t>(t.name.size()));
      out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
      write_raw(out, t.dtype);
      write_raw(out, static_cast<uint32_t>(t.shape.size()));
      for (int64_t dim : t.shape) write_raw(out, dim);
      out.write(reinterpret_cast<const char*>(t.raw.data()),
                static_cast<std::streamsize>(t.raw.size()));
    }
    if (!out) throw DataError("write failure for checkpoint: " + path);
  }
  std::filesystem::rename(tmp, path);
}

CheckpointData read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::string_view(magic, 4) != "PIE1")
    throw DataError("not a PIE checkpoint: " + path);
  CheckpointData data;
  data.version = read_raw<uint32_t>(in, "version");
  if (data.version != kCheckpointVersion)
    throw CheckpointVersionError("checkpoint version " + std::to_string(data.version) +
                                 " unsupported (expected " + std::to_string(kCheckpointVersion) +
                                 ")");
  auto json_len = read_raw<uint64_t>(in, "config length");
  std::string cfg(json_len, '\0');
  in.read(cfg.data(), static_cast<std::streamsize>(json_len));
  if (static_cast<uint64_t>(in.gcount()) != json_len)
    throw CheckpointTruncatedError("checkpoint truncated in config block");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(cfg);
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("checkpoint config block is invalid JSON: ") + ex.what());
  }
  config_from_json(j, data);

  auto count = read_raw<uint32_t>(in, "tensor count");
  for (uint32_t i = 0; i < count; ++i) {
    NamedRawTensor t;
    auto name_len = read_raw<uint32_t>(in, "tensor name length");
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    if (static_cast<uint32_t>(in.gcount()) != name_len)
      throw CheckpointTruncatedError("checkpoint truncated in tensor name");
    t.dtype = read_raw<uint8_t>(in, "dtype");
    if (t.dtype > 1) throw DataError("unknown dtype tag in checkpoint tensor " + t.name);
    auto ndim = read_raw<uint32_t>(in, "rank");
    t.shape.resize(ndim);
    for (auto& dim : t.shape) dim = read_raw<int64_t>(in, "shape");
    size_t bytes = static_cast<size_t>(Tensor<float>::numel_of(t.shape)) *
                   (t.dtype == 0 ? sizeof(float) : sizeof(double));
    t.raw.resize(bytes);
    in.read(reinterpret_cast<char*>(t.raw.data()), static_cast<std::streamsize>(bytes));
    if (static_cast<size_t>(in.gcount()) != bytes)
      throw CheckpointTruncatedError("checkpoint truncated in tensor '" + t.name + "'");
    data.tensors.push_back(std::move(t));
  }

  // Verify the embedded artifacts against their stored digests.
  Vocabulary vocab(data.vocab_tokens);
  if (vocab.digest() != data.vocab_digest)
    throw CheckpointDigestError("vocabulary digest mismatch in checkpoint");
  if (insert_dictionary_digest(data.dict) != data.dict_digest)
    throw CheckpointDigestError("insert dictionary digest mismatch in checkpoint");
  if (transform_table_digest(data.table) != data.table_digest)
    throw CheckpointDigestError("transform table digest mismatch in checkpoint");
  return data;
}

void verify_checkpoint_artifacts(const CheckpointData& data, const InsertDictionary* expected_dict,
                                 const TransformTable* expected_table,
                                 const Vocabulary* expected_vocab) {
  if (expected_dict && insert_dictionary_digest(*expected_dict) != data.dict_digest)
    throw CheckpointDigestError(
        "insert dictionary digest mismatch: checkpoint was built with a different Σ_a");
  if (expected_table && transform_table_digest(*expected_table) != data.table_digest)
    throw CheckpointDigestError(
        "transform table digest mismatch: checkpoint was built with a different table");
  if (expected_vocab && expected_vocab->digest() != data.vocab_digest)
    throw CheckpointDigestError(
        "vocabulary digest mismatch: checkpoint was built with a different vocabulary");
}

}  // namespace pie
