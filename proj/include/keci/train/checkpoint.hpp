#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "keci/autodiff/parameter_store.hpp"
#include "keci/train/config.hpp"
#include "keci/train/model.hpp"

namespace keci::train {

inline constexpr char kCheckpointMagic[4] = {'K', 'E', 'C', 'I'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
  ad::Shape shape;
  std::vector<float> values;

  bool operator==(const CheckpointTensor&) const = default;
};

/// Decoded file: the JSON header and the named f32 tensors.
struct Checkpoint {
  nlohmann::json header;
  std::map<std::string, CheckpointTensor> tensors;

  ModelConfig config() const { return ModelConfig::from_json(header.at("config")); }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}

  bool done() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

 private:
  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what + " at byte " + std::to_string(pos_));
    }
  }

  const std::string& data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Serializes parameter values as little-endian f32 records, sorted by name.
template <typename T>
std::string encode_checkpoint(const ad::ParameterStore<T>& store, const nlohmann::json& header) {
  std::string out(kCheckpointMagic, 4);
  detail::put_u32(out, kCheckpointVersion);
  const std::string json = header.dump();
  detail::put_u32(out, static_cast<std::uint32_t>(json.size()));
  out += json;
  for (const auto& [name, t] : store) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (auto v : t.values()) detail::put_f32(out, static_cast<float>(v));
  }
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& data) {
  detail::Reader in(data);
  if (in.bytes(4, "magic") != std::string(kCheckpointMagic, 4)) throw FormatError("not a checkpoint (bad magic)");
  const auto version = in.u32("version");
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const auto len = in.u32("header length");
  try {
    ck.header = nlohmann::json::parse(in.bytes(len, "header"));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  while (!in.done()) {
    const std::string name = in.bytes(in.u32("name length"), "name");
    CheckpointTensor t;
    const auto rank = in.u32("rank");
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      t.shape.push_back(in.u32("dims"));
      n *= t.shape.back();
      if (n > in.remaining() / 4) throw FormatError("checkpoint truncated in tensor " + name);
    }
    t.values.reserve(n);
    for (std::size_t i = 0; i < n; ++i) t.values.push_back(in.f32("values"));
    if (!ck.tensors.emplace(name, std::move(t)).second) throw FormatError("checkpoint repeats tensor " + name);
  }
  return ck;
}

template <typename T>
void save_checkpoint(const ad::ParameterStore<T>& store, const nlohmann::json& header, const std::string& path) {
  const std::string bytes = encode_checkpoint(store, header);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArgumentError("failed writing checkpoint " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open checkpoint " + path);
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(data);
}

/// Copies checkpoint values into `store`. Names and shapes must match exactly;
/// on mismatch nothing is modified.
template <typename T>
void restore_parameters(ad::ParameterStore<T>& store, const Checkpoint& ck) {
  for (const auto& [name, t] : store) {
    auto it = ck.tensors.find(name);
    if (it == ck.tensors.end()) throw ValidationError("checkpoint lacks parameter " + name);
    if (it->second.shape != t.shape()) {
      throw ValidationError("checkpoint parameter " + name + " has shape " + ad::shape_str(it->second.shape) +
                            ", model expects " + ad::shape_str(t.shape()));
    }
  }
  for (const auto& [name, _] : ck.tensors)
    if (!store.contains(name)) throw ValidationError("checkpoint has unexpected parameter " + name);
  for (auto& [name, t] : store) {
    const auto& src = ck.tensors.at(name).values;
    auto dst = t.mutable_values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(src[i]);
  }
}

template <typename T>
nlohmann::json model_header(const KeciModel<T>& model) {
  const auto& kb = model.kb_shape();
  return {{"config", model.config().to_json()},
          {"variant", to_string(model.variant())},
          {"schema", model.schema().to_json()},
          {"vocab", model.vocab().tokens()},
          {"kb_shape", {{"num_semantic_types", kb.num_semantic_types},
                        {"num_relations", kb.num_relations},
                        {"embedding_dim", kb.embedding_dim}}}};
}

template <typename T>
void save_model(const KeciModel<T>& model, const std::string& path) {
  save_checkpoint(model.params(), model_header(model), path);
}

/// Rebuilds a model from a checkpoint written by save_model.
template <typename T>
KeciModel<T> model_from_checkpoint(const Checkpoint& ck) {
  try {
    const auto& h = ck.header;
    const auto& ks = h.at("kb_shape");
    KbShape kb{ks.at("num_semantic_types").get<std::size_t>(), ks.at("num_relations").get<std::size_t>(),
               ks.at("embedding_dim").get<std::size_t>()};
    auto tokens = h.at("vocab").get<std::vector<std::string>>();
    if (tokens.empty() || tokens.front() != encoder::Vocabulary::kUnkToken) {
      throw FormatError("checkpoint vocabulary must start with the unknown token");
    }
    KeciModel<T> model(ck.config(), parse_variant(h.at("variant").get<std::string>()),
                       corpus::TaskSchema::from_json(h.at("schema")),
                       encoder::Vocabulary::from_tokens(std::vector<std::string>(tokens.begin() + 1, tokens.end())), kb);
    restore_parameters(model.params(), ck);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
}

template <typename T>
KeciModel<T> load_model(const std::string& path) {
  return model_from_checkpoint<T>(load_checkpoint(path));
}

}  // namespace keci::train
