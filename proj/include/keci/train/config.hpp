#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <utility>
#include <set>
#include <string>

#include <json.hpp>

#include "keci/error.hpp"

namespace keci {

enum class RelationLossMode { kSoftmaxCe, kSigmoidBce };

inline std::string to_string(RelationLossMode m) {
  return m == RelationLossMode::kSoftmaxCe ? "softmax_ce" : "sigmoid_bce";
}

/// Model and training hyperparameters.
struct ModelConfig {
  std::size_t d = 32;      // span / node hidden size
  std::size_t d_tok = 32;  // token embedding size (also the definition embedding size)
  std::size_t d_len = 16;  // span-length feature size
  std::size_t d_kb = 16;   // pretrained KB embedding size
  std::size_t ffnn_hidden = 0;  // hidden width of the one-hidden-layer FFNNs; 0 means d
  std::size_t max_span_length = 20;
  double prune_ratio = 0.5;
  std::size_t gcn_layers = 2;
  std::size_t rgcn_layers = 2;
  std::size_t gcn_num_bases = 0;  // 0: full per-relation matrices
  bool detach_edge_weights = false;
  bool position_encoding = false;
  double final_loss_weight = 2.0;
  RelationLossMode relation_loss_mode = RelationLossMode::kSoftmaxCe;
  double lr_lower = 5e-5;
  double lr_upper = 2e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  std::uint64_t seed = 13;
  std::size_t vocab_min_count = 1;
  double grad_clip = 0.0;  // global-norm clipping, 0 disables
  std::string embedding_path;
  bool freeze_token_embeddings = false;

  std::size_t hidden() const { return ffnn_hidden == 0 ? d : ffnn_hidden; }
  std::size_t node_dim() const { return d_kb + d_tok; }

  void validate() const {
    const std::initializer_list<std::pair<const char*, std::size_t>> dims{
        {"d", d}, {"d_tok", d_tok}, {"d_len", d_len}, {"d_kb", d_kb}, {"max_span_length", max_span_length},
        {"batch_size", batch_size}};
    for (const auto& [name, v] : dims) {
      if (v < 1) throw ValidationError(std::string("config: ") + name + " must be >= 1");
    }
    if (!(prune_ratio > 0.0 && prune_ratio <= 1.0)) throw ValidationError("config: prune_ratio must be in (0, 1]");
    if (!(final_loss_weight > 0.0)) throw ValidationError("config: final_loss_weight must be > 0");
    if (!(lr_lower > 0.0) || !(lr_upper > 0.0)) throw ValidationError("config: learning rates must be > 0");
    if (grad_clip < 0.0) throw ValidationError("config: grad_clip must be >= 0");
  }

  nlohmann::json to_json() const {
    return {{"d", d},
            {"d_tok", d_tok},
            {"d_len", d_len},
            {"d_kb", d_kb},
            {"ffnn_hidden", ffnn_hidden},
            {"max_span_length", max_span_length},
            {"prune_ratio", prune_ratio},
            {"gcn_layers", gcn_layers},
            {"rgcn_layers", rgcn_layers},
            {"gcn_num_bases", gcn_num_bases},
            {"detach_edge_weights", detach_edge_weights},
            {"position_encoding", position_encoding},
            {"final_loss_weight", final_loss_weight},
            {"relation_loss_mode", to_string(relation_loss_mode)},
            {"lr_lower", lr_lower},
            {"lr_upper", lr_upper},
            {"batch_size", batch_size},
            {"epochs", epochs},
            {"seed", seed},
            {"vocab_min_count", vocab_min_count},
            {"grad_clip", grad_clip},
            {"embedding_path", embedding_path},
            {"freeze_token_embeddings", freeze_token_embeddings}};
  }

  /// Missing keys keep their defaults; unknown keys are rejected.
  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    const nlohmann::json known = c.to_json();
    if (!j.is_object()) throw ParseError("config must be a JSON object");
    for (const auto& [key, _] : j.items())
      if (!known.contains(key)) throw ValidationError("config: unknown key " + key);
    try {
      c.d = j.value("d", c.d);
      c.d_tok = j.value("d_tok", c.d_tok);
      c.d_len = j.value("d_len", c.d_len);
      c.d_kb = j.value("d_kb", c.d_kb);
      c.ffnn_hidden = j.value("ffnn_hidden", c.ffnn_hidden);
      c.max_span_length = j.value("max_span_length", c.max_span_length);
      c.prune_ratio = j.value("prune_ratio", c.prune_ratio);
      c.gcn_layers = j.value("gcn_layers", c.gcn_layers);
      c.rgcn_layers = j.value("rgcn_layers", c.rgcn_layers);
      c.gcn_num_bases = j.value("gcn_num_bases", c.gcn_num_bases);
      c.detach_edge_weights = j.value("detach_edge_weights", c.detach_edge_weights);
      c.position_encoding = j.value("position_encoding", c.position_encoding);
      c.final_loss_weight = j.value("final_loss_weight", c.final_loss_weight);
      const auto mode = j.value("relation_loss_mode", to_string(c.relation_loss_mode));
      if (mode == "softmax_ce") {
        c.relation_loss_mode = RelationLossMode::kSoftmaxCe;
      } else if (mode == "sigmoid_bce") {
        c.relation_loss_mode = RelationLossMode::kSigmoidBce;
      } else {
        throw ValidationError("config: relation_loss_mode must be softmax_ce or sigmoid_bce, got " + mode);
      }
      c.lr_lower = j.value("lr_lower", c.lr_lower);
      c.lr_upper = j.value("lr_upper", c.lr_upper);
      c.batch_size = j.value("batch_size", c.batch_size);
      c.epochs = j.value("epochs", c.epochs);
      c.seed = j.value("seed", c.seed);
      c.vocab_min_count = j.value("vocab_min_count", c.vocab_min_count);
      c.grad_clip = j.value("grad_clip", c.grad_clip);
      c.embedding_path = j.value("embedding_path", c.embedding_path);
      c.freeze_token_embeddings = j.value("freeze_token_embeddings", c.freeze_token_embeddings);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
  }

  bool operator==(const ModelConfig&) const = default;
};

inline ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open config " + path);
  try {
    return ModelConfig::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("config " + path + ": " + e.what());
  }
}

}  // namespace keci
