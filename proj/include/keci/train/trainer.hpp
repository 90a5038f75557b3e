#pragma once

#include <functional>
#include <numeric>
#include <optional>
#include <vector>

#include "keci/autodiff/tape.hpp"
#include "keci/encoder/vocabulary.hpp"
#include "keci/eval/predict.hpp"
#include "keci/random.hpp"
#include "keci/train/adam.hpp"
#include "keci/train/loss.hpp"
#include "keci/train/model.hpp"

namespace keci::train {

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<eval::MetricsReport> dev;
};

struct FitOptions {
  Variant variant = Variant::kFull;
  std::size_t threads = 1;                                // dev evaluation workers
  const encoder::EmbeddingFile* pretrained = nullptr;    // optional token vectors
  std::function<void(const EpochRecord&)> on_epoch;
};

template <typename T>
struct FitResult {
  KeciModel<T> model;  // best-dev parameters (last epoch without dev data)
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  std::size_t missing_grads = 0;
};

/// Forward + loss + backward for one document; gradients accumulate into
/// the parameters scaled by `scale`. Returns the unscaled loss.
template <typename T>
double accumulate_gradients(const KeciModel<T>& model, const PreparedDocument& doc, double scale) {
  ad::Tape<T> tape;
  ad::TapeScope<T> scope(tape);
  const auto fwd = model.forward(doc);
  if (fwd.spans.empty()) return 0.0;
  const auto loss = compute_loss(fwd, doc, model.config());
  const double value = loss.value();
  tape.backward(ad::scale(loss.total, static_cast<T>(scale)));
  return value;
}

/// Mini-batch training with Adam; keeps the parameters of the epoch with the
/// best dev score (mean of entity and relation micro-F1).
template <typename T>
FitResult<T> fit(const ModelConfig& config, const corpus::TaskSchema& schema, const std::vector<corpus::Document>& train,
                 const std::vector<corpus::Document>& dev, const kb::KnowledgeBase* kb, const FitOptions& opts = {}) {
  config.validate();
  if (train.empty()) throw ArgumentError("training set is empty");
  if (uses_kb(opts.variant) && kb == nullptr) throw ArgumentError("variant " + to_string(opts.variant) + " needs a KB");
  KeciModel<T> model(config, opts.variant, schema, build_vocabulary(train, config, kb),
                     kb ? KbShape::of(*kb) : KbShape{});
  if (opts.pretrained) model.embeddings().load_pretrained(*opts.pretrained);
  const auto train_docs = eval::prepare_all(model, train, kb);
  const auto dev_docs = eval::prepare_all(model, dev, kb);

  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  Adam<T> adam(config.lr_lower, config.lr_upper);
  Rng shuffle_rng(config.seed ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(train_docs.size());
  std::iota(order.begin(), order.end(), 0);
  std::optional<ad::ParameterStore<T>> best;
  double best_score = -1.0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t e = std::min(order.size(), b + config.batch_size);
      model.params().zero_grad();
      for (std::size_t k = b; k < e; ++k)
        total += accumulate_gradients(model, train_docs[order[k]], 1.0 / static_cast<double>(e - b));
      if (config.grad_clip > 0.0) clip_grad_norm(model.params(), config.grad_clip);
      adam.step(model.params());
    }
    EpochRecord rec{epoch, total / static_cast<double>(order.size()), std::nullopt};
    if (!dev_docs.empty()) {
      rec.dev = eval::evaluate_model(model, dev_docs, opts.threads);
      if (rec.dev->selection_score() > best_score) {
        best_score = rec.dev->selection_score();
        best = model.params().clone();
        best_epoch = epoch;
      }
    }
    history.push_back(rec);
    if (opts.on_epoch) opts.on_epoch(rec);
  }
  model.params().zero_grad();
  if (best) {
    model.params().assign_values(*best);
  } else {
    best_epoch = config.epochs;
  }
  return FitResult<T>{std::move(model), std::move(history), best_epoch, adam.missing_grads()};
}

}  // namespace keci::train
