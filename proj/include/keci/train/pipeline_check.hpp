#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "keci/autodiff/gradcheck.hpp"
#include "keci/corpus/toy.hpp"
#include "keci/eval/predict.hpp"
#include "keci/kb/knowledge_base.hpp"
#include "keci/train/loss.hpp"
#include "keci/train/model.hpp"

namespace keci::train {

struct PipelineCheck {
  ad::GradCheckResult result;
  std::size_t documents = 0;
  std::size_t kg_nodes = 0;
  std::size_t parameters = 0;
};

/// Two-sentence toy batch whose KB links at least one mention, so the loss
/// depends on every stage of the pipeline.
inline corpus::ToyCorpus gradcheck_batch(const ModelConfig& config, std::uint64_t seed) {
  corpus::ToySpec spec;
  spec.num_sentences = 2;
  spec.num_dev = 0;
  spec.ambiguity_rate = 0.5;
  spec.generic_rate = 0.5;
  spec.kb_dim = config.d_kb;
  for (std::uint64_t s = seed;; ++s) {
    auto toy = corpus::generate_toy(spec, s);
    if (!toy.kb.at("entities").empty()) return toy;
  }
}

/// Backprop vs central differences at f64 over encoder, span graph, KG,
/// fusion and the joint loss.
inline PipelineCheck pipeline_gradcheck(ModelConfig config, std::uint64_t seed, ad::GradCheckOptions options = {}) {
  config.seed = seed;
  const auto toy = gradcheck_batch(config, seed);
  const auto kb = kb::KnowledgeBase::from_json(toy.kb);
  KeciModel<double> model(config, Variant::kFull, toy.schema, build_vocabulary(toy.train, config, &kb), KbShape::of(kb));
  const auto docs = eval::prepare_all(model, toy.train, &kb);
  const std::function<ad::Tensor<double>()> f = [&] {
    ad::Tensor<double> total = ad::Tensor<double>::scalar(0.0);
    for (const auto& d : docs) total = ad::add(total, compute_loss(model.forward(d), d, config).total);
    return total;
  };
  PipelineCheck out;
  out.result = ad::finite_difference_check(f, model.params(), options);
  out.documents = docs.size();
  for (const auto& d : docs) out.kg_nodes += d.kg.size();
  out.parameters = model.params().scalar_count();
  return out;
}

}  // namespace keci::train
