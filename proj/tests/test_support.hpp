#pragma once

#include <functional>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "keci/keci.hpp"

namespace keci::testing {

using ad::Tensor;

inline Tensor<double> random_tensor(ad::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                                    bool requires_grad = true) {
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>(std::move(shape), std::move(v), requires_grad);
}

/// Max relative error of backprop vs central differences for f over `inputs`.
inline ad::GradCheckResult check_inputs(const std::vector<Tensor<double>>& inputs,
                                        const std::function<Tensor<double>()>& f) {
  ad::ParameterStore<double> store;
  for (std::size_t i = 0; i < inputs.size(); ++i) store.add("in" + std::to_string(i), inputs[i]);
  return ad::finite_difference_check(f, store);
}

/// Small dims so full-pipeline tests stay fast.
inline ModelConfig small_config() {
  ModelConfig c;
  c.d = 8;
  c.d_tok = 6;
  c.d_len = 3;
  c.d_kb = 4;
  c.gcn_layers = 1;
  c.rgcn_layers = 1;
  c.epochs = 3;
  c.batch_size = 4;
  c.lr_lower = c.lr_upper = 1e-2;
  return c;
}

inline corpus::ToySpec small_toy_spec(double ambiguity = 0.5) {
  corpus::ToySpec s;
  s.num_sentences = 6;
  s.num_dev = 4;
  s.ambiguity_rate = ambiguity;
  s.generic_rate = 0.5;
  s.kb_dim = 4;
  return s;
}

inline corpus::Document make_doc(const std::string& id, const std::string& text, const corpus::TaskSchema& schema,
                                 const std::vector<std::tuple<std::size_t, std::size_t, std::string>>& entities,
                                 const std::vector<std::tuple<std::size_t, std::size_t, std::string>>& relations = {}) {
  nlohmann::json j{{"id", id}, {"text", text}, {"entities", nlohmann::json::array()},
                   {"relations", nlohmann::json::array()}};
  for (const auto& [s, e, t] : entities) j["entities"].push_back({{"start", s}, {"end", e}, {"type", t}});
  for (const auto& [h, t, r] : relations) j["relations"].push_back({{"head", h}, {"tail", t}, {"type", r}});
  return corpus::document_from_json(j, schema);
}

}  // namespace keci::testing
