// Runs the ten acceptance checks and prints one PASS/FAIL line per check.
// Exit status is nonzero when any check fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "keci/keci.hpp"

namespace {

using namespace keci;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& check) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("[%s] %2d %-28s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), seconds_since(t0));
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// 1 -------------------------------------------------------------------------

Outcome gradient_integrity() {
  const auto t0 = Clock::now();
  const auto check = train::pipeline_gradcheck(ModelConfig{}, 13);
  const double secs = seconds_since(t0);
  return {check.result.max_relative_error < 1e-3 && secs < 120.0 && check.kg_nodes > 0,
          fmt("max_rel_err=%.2e over %.0f scalars, %.0f kg nodes", check.result.max_relative_error,
              static_cast<double>(check.result.checked), static_cast<double>(check.kg_nodes))};
}

// 2 -------------------------------------------------------------------------

Outcome capacity() {
  const auto t0 = Clock::now();
  corpus::ToySpec spec;
  spec.num_sentences = 32;
  spec.num_dev = 0;
  spec.ambiguity_rate = 0.0;
  spec.kb_dim = 16;
  const auto toy = corpus::generate_toy(spec, 1);
  const auto kbase = kb::KnowledgeBase::from_json(toy.kb);
  ModelConfig c;
  c.lr_lower = c.lr_upper = 1e-2;
  c.batch_size = 8;
  c.seed = 1;
  c.epochs = 200;
  // Training data doubles as the selection set, so each epoch is scored on it.
  std::size_t first = 0;
  train::FitOptions o;
  o.on_epoch = [&](const train::EpochRecord& r) {
    if (!first && r.dev->entity_micro.f1 >= 0.95 && r.dev->relation_micro.f1 >= 0.90) first = r.epoch;
  };
  const auto fitted = train::fit<float>(c, toy.schema, toy.train, toy.train, &kbase, o);
  const auto m = eval::evaluate_model(fitted.model, eval::prepare_all(fitted.model, toy.train, &kbase));
  const double ent = m.entity_micro.f1, rel = m.relation_micro.f1;
  const double secs = seconds_since(t0);
  return {ent >= 0.95 && rel >= 0.90 && secs < 300.0,
          fmt("train entity F1=%.3f relation F1=%.3f, targets first met at epoch %.0f", ent, rel, static_cast<double>(first))};
}

// 3, 4, 5 -----------------------------------------------------------------

struct KnowledgeRun {
  std::map<train::Variant, std::vector<double>> entity_f1;
  eval::AttentionStat relevant, distractor;
  bool done = false;
};

KnowledgeRun& knowledge_run() {
  static KnowledgeRun run;
  if (run.done) return run;
  run.done = true;
  for (std::uint64_t seed : {1, 2, 3}) {
    corpus::ToySpec spec;
    spec.num_sentences = 64;
    spec.num_dev = 128;
    spec.ambiguity_rate = 0.5;
    spec.distractors_per_mention = 2;
    spec.generic_rate = 0.5;
    spec.kb_dim = 16;
    const auto toy = corpus::generate_toy(spec, seed);
    const auto kbase = kb::KnowledgeBase::from_json(toy.kb);
    const std::vector<corpus::Document> dev(toy.dev.begin(), toy.dev.begin() + 64);
    const std::vector<corpus::Document> test(toy.dev.begin() + 64, toy.dev.end());
    ModelConfig c;
    c.lr_lower = c.lr_upper = 1e-2;
    c.batch_size = 8;
    c.epochs = 60;
    c.vocab_min_count = 2;
    c.seed = seed;
    for (auto v : {train::Variant::kFull, train::Variant::kSentContextOnly, train::Variant::kFlatAttention}) {
      train::FitOptions o;
      o.variant = v;
      const auto fitted = train::fit<float>(c, toy.schema, toy.train, dev, &kbase, o);
      const auto docs = eval::prepare_all(fitted.model, test, &kbase);
      run.entity_f1[v].push_back(eval::evaluate_model(fitted.model, docs).entity_micro.f1);
      if (v != train::Variant::kFull) continue;
      const auto rep = eval::attention_report(fitted.model, docs, kbase);
      for (const auto& [type, stat] : rep.by_type) {
        eval::AttentionStat* pool = toy.relevant_types.count(type)     ? &run.relevant
                                    : toy.distractor_types.count(type) ? &run.distractor
                                                                       : nullptr;
        if (!pool) continue;
        pool->sum += stat.sum;
        pool->count += stat.count;
      }
    }
  }
  return run;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

Outcome knowledge_benefit() {
  auto& r = knowledge_run();
  const double full = mean(r.entity_f1[train::Variant::kFull]);
  const double sent = mean(r.entity_f1[train::Variant::kSentContextOnly]);
  return {full - sent >= 0.10, fmt("held-out entity F1 full=%.3f sent_context_only=%.3f (+%.1f pts)", full, sent,
                                   100 * (full - sent))};
}

Outcome collective_benefit() {
  auto& r = knowledge_run();
  const double full = mean(r.entity_f1[train::Variant::kFull]);
  const double flat = mean(r.entity_f1[train::Variant::kFlatAttention]);
  return {full - flat >= 0.02,
          fmt("held-out entity F1 full=%.3f flat_attention=%.3f (+%.1f pts)", full, flat, 100 * (full - flat))};
}

Outcome attention_pattern() {
  auto& r = knowledge_run();
  const double rel = r.relevant.mean(), dis = r.distractor.mean();
  return {r.relevant.count > 0 && r.distractor.count > 0 && rel > dis,
          fmt("mean beta relevant=%.3f distractor=%.3f", rel, dis)};
}

// 6 -------------------------------------------------------------------------

Outcome pruning_law() {
  Rng rng(6);
  std::size_t bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(30);
    const std::size_t m = rng.below(60);
    std::vector<double> scores(m);
    // Coarse values make ties common.
    for (auto& s : scores) s = static_cast<double>(rng.below(8)) / 8.0;
    const auto kept = spangraph::prune_spans(scores, 0.5, n);
    // Oracle: repeatedly take the lowest remaining score, earliest index on ties.
    const std::size_t budget = std::min<std::size_t>(static_cast<std::size_t>(std::ceil(0.5 * n)), m);
    std::vector<bool> taken(m, false);
    for (std::size_t k = 0; k < budget; ++k) {
      std::size_t best = m;
      for (std::size_t i = 0; i < m; ++i)
        if (!taken[i] && (best == m || scores[i] < scores[best])) best = i;
      taken[best] = true;
    }
    std::vector<std::size_t> expect;
    for (std::size_t i = 0; i < m; ++i)
      if (taken[i]) expect.push_back(i);
    if (kept != expect || kept != spangraph::prune_spans(scores, 0.5, n)) ++bad;
  }
  return {bad == 0, fmt("%.0f of 1000 cases differ from the sort oracle", static_cast<double>(bad))};
}

// 7 -------------------------------------------------------------------------

Outcome normalization() {
  double worst = 0;
  std::size_t rows = 0;
  auto check_rows = [&](const ad::Tensor<double>& p) {
    for (std::size_t r = 0; r < p.rows(); ++r) {
      double t = 0;
      for (std::size_t k = 0; k < p.cols(); ++k) t += p.at(r, k);
      worst = std::max(worst, std::abs(t - 1.0));
      ++rows;
    }
  };
  Rng rng(7);
  for (int draw = 0; draw < 100; ++draw) {
    corpus::ToySpec spec;
    spec.num_sentences = 2;
    spec.num_dev = 0;
    spec.ambiguity_rate = rng.uniform();
    spec.generic_rate = rng.uniform();
    spec.kb_dim = 4;
    const auto toy = corpus::generate_toy(spec, rng.next());
    const auto kbase = kb::KnowledgeBase::from_json(toy.kb);
    ModelConfig c;
    c.d = 8;
    c.d_tok = 6;
    c.d_len = 3;
    c.d_kb = 4;
    c.gcn_layers = 1 + rng.below(2);
    c.rgcn_layers = 1 + rng.below(2);
    c.seed = rng.next();
    train::KeciModel<double> model(c, train::Variant::kFull, toy.schema, train::build_vocabulary(toy.train, c, &kbase),
                                   train::KbShape::of(kbase));
    ad::NoGradScope<double> off;
    for (const auto& doc : toy.train) {
      const auto fwd = model.forward(model.prepare(doc, &kbase));
      check_rows(fwd.initial.entity_probs);
      check_rows(fwd.initial.relation_probs);
      check_rows(fwd.final->entity_probs);
      check_rows(fwd.final->relation_probs);
      for (std::size_t i = 0; i < fwd.fusion->num_spans(); ++i) {
        double t = fwd.fusion->sentinel_weight(i);
        for (std::size_t k = 0; k < fwd.candidates[i].size(); ++k) t += fwd.fusion->candidate_weight(i, k);
        worst = std::max(worst, std::abs(t - 1.0));
        ++rows;
      }
    }
  }
  return {worst <= 1e-6, fmt("%.0f distributions, max |sum-1|=%.1e", static_cast<double>(rows), worst)};
}

// 8 -------------------------------------------------------------------------

Outcome loss_arithmetic() {
  using T = ad::Tensor<double>;
  const double direct = train::combine_losses(T::scalar(1), T::scalar(2), T::scalar(3), T::scalar(4), 2.0).value();
  bool ok = direct == 17.0;
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const double w = rng.uniform(0.0, 10.0);
    ok = ok && train::combine_losses(T::scalar(1), T::scalar(2), T::scalar(3), T::scalar(4), w).value() ==
                   1.0 + 2.0 + w * 7.0;
  }

  // Same numbers through compute_loss: every target class gets probability
  // exp(-k), so each mean cross-entropy is k.
  corpus::TaskSchema schema({"A", "B"}, {"r"});
  const auto doc = corpus::document_from_json(
      {{"id", "s"},
       {"text", "x y z"},
       {"entities", {{{"start", 0}, {"end", 1}, {"type", "A"}}, {{"start", 2}, {"end", 3}, {"type", "B"}}}},
       {"relations", {{{"head", 0}, {"tail", 1}, {"type", "r"}}}}},
      schema);
  ModelConfig c;
  train::KeciModel<double> model(c, train::Variant::kSentContextOnly, schema, encoder::Vocabulary(), {});
  const auto p = model.prepare(doc, nullptr);
  auto stub = [](const std::vector<std::size_t>& targets, std::size_t classes, double k) {
    std::vector<double> v(targets.size() * classes, 0.0);
    for (std::size_t r = 0; r < targets.size(); ++r) {
      for (std::size_t q = 0; q < classes; ++q) v[r * classes + q] = (1.0 - std::exp(-k)) / (classes - 1);
      v[r * classes + targets[r]] = std::exp(-k);
    }
    return T({targets.size(), classes}, v);
  };
  spangraph::InitialPrediction<double> init;
  init.kept = {0, 1, 2};
  init.pairs = spangraph::ordered_pairs(3);
  const auto rt = train::relation_targets(p, init.kept, init.pairs);
  init.entity_probs = stub(p.entity_targets, 3, 1.0);
  init.relation_probs = stub(rt.cls, 2, 2.0);
  init.relation_logits = init.relation_probs;
  fusion::FinalPrediction<double> fin;
  std::vector<std::size_t> kept_targets;
  for (auto i : init.kept) kept_targets.push_back(p.entity_targets[i]);
  fin.entity_probs = stub(kept_targets, 3, 3.0);
  fin.relation_probs = stub(rt.cls, 2, 4.0);
  fin.relation_logits = fin.relation_probs;
  const double via_model = train::compute_loss(init, &fin, p, c).value();
  ok = ok && std::abs(via_model - 17.0) < 1e-12;
  return {ok, fmt("combine=%.17g compute_loss=%.15f", direct, via_model)};
}

// 9 -------------------------------------------------------------------------

using Item = std::vector<std::size_t>;

struct Tally {
  std::map<std::size_t, std::array<std::size_t, 3>> by_type;  // tp, fp, fn
};

// Independent counting: for each predicted item, find and consume an equal gold item.
void tally(const std::vector<Item>& pred, std::vector<Item> gold, Tally& t) {
  for (const auto& p : pred) {
    bool hit = false;
    for (std::size_t g = 0; g < gold.size(); ++g) {
      if (gold[g] == p) {
        gold.erase(gold.begin() + static_cast<std::ptrdiff_t>(g));
        hit = true;
        break;
      }
    }
    ++t.by_type[p.back()][hit ? 0 : 1];
  }
  for (const auto& g : gold) ++t.by_type[g.back()][2];
}

std::array<double, 3> prf(std::size_t tp, std::size_t fp, std::size_t fn) {
  const double p = tp + fp ? double(tp) / double(tp + fp) : 0.0;
  const double r = tp + fn ? double(tp) / double(tp + fn) : 0.0;
  return {p, r, p + r > 0 ? 2 * p * r / (p + r) : 0.0};
}

std::array<double, 3> micro(const Tally& t) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& [_, c] : t.by_type) tp += c[0], fp += c[1], fn += c[2];
  return prf(tp, fp, fn);
}

std::array<double, 3> macro(const Tally& t) {
  std::array<double, 3> s{0, 0, 0};
  int n = 0;
  for (const auto& [_, c] : t.by_type) {
    if (c[0] + c[2] == 0) continue;  // type absent from gold
    const auto x = prf(c[0], c[1], c[2]);
    for (int k = 0; k < 3; ++k) s[k] += x[k];
    ++n;
  }
  if (n > 0)
    for (auto& v : s) v /= n;
  return s;
}

eval::PredictedGraph random_graph(Rng& rng) {
  eval::PredictedGraph g;
  const std::size_t n = rng.below(6);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = rng.below(5);
    g.entities.push_back({{s, s + 1 + rng.below(2)}, 1 + rng.below(3)});
  }
  if (n > 0)
    for (std::size_t k = rng.below(5); k > 0; --k) g.relations.push_back({rng.below(n), rng.below(n), 1 + rng.below(2)});
  return g;
}

Outcome metric_oracle() {
  Rng rng(9);
  std::size_t bad = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<eval::PredictedGraph> pred, gold;
    Tally te, tr;
    for (std::size_t d = 0, nd = 1 + rng.below(4); d < nd; ++d) {
      pred.push_back(random_graph(rng));
      gold.push_back(rng.uniform() < 0.25 ? pred.back() : random_graph(rng));
      auto ents = [](const eval::PredictedGraph& g) {
        std::vector<Item> v;
        for (const auto& e : g.entities) v.push_back({e.span.start, e.span.end, e.type});
        return v;
      };
      auto rels = [&](const eval::PredictedGraph& g) {
        std::vector<Item> v;
        const auto e = ents(g);
        for (const auto& r : g.relations) {
          Item it = e[r.head];
          it.insert(it.end(), e[r.tail].begin(), e[r.tail].end());
          it.push_back(r.type);
          v.push_back(it);
        }
        return v;
      };
      tally(ents(pred.back()), ents(gold.back()), te);
      tally(rels(pred.back()), rels(gold.back()), tr);
    }
    const auto m = eval::evaluate_graphs(pred, gold);
    auto same = [](const eval::PRF& a, const std::array<double, 3>& b) {
      return a.precision == b[0] && a.recall == b[1] && a.f1 == b[2];
    };
    if (!same(m.entity_micro, micro(te)) || !same(m.entity_macro, macro(te)) || !same(m.relation_micro, micro(tr)) ||
        !same(m.relation_macro, macro(tr)))
      ++bad;
  }
  return {bad == 0, fmt("%.0f of 500 cases differ from the counting oracle", static_cast<double>(bad))};
}

// 10 ------------------------------------------------------------------------

Outcome determinism() {
  corpus::ToySpec spec;
  spec.num_sentences = 16;
  spec.num_dev = 8;
  spec.ambiguity_rate = 0.5;
  spec.kb_dim = 16;
  const auto toy = corpus::generate_toy(spec, 10);
  const auto kbase = kb::KnowledgeBase::from_json(toy.kb);
  ModelConfig c;
  c.epochs = 5;
  c.batch_size = 4;
  c.lr_lower = c.lr_upper = 1e-2;
  c.seed = 10;
  const auto a = train::fit<float>(c, toy.schema, toy.train, toy.dev, &kbase);
  const auto b = train::fit<float>(c, toy.schema, toy.train, toy.dev, &kbase);
  bool curves = a.history.size() == b.history.size();
  for (std::size_t e = 0; curves && e < a.history.size(); ++e) curves = a.history[e].train_loss == b.history[e].train_loss;

  const std::string bytes = train::encode_checkpoint(a.model.params(), train::model_header(a.model));
  const auto restored = train::model_from_checkpoint<float>(train::decode_checkpoint(bytes));
  bool bitwise = restored.params().names() == a.model.params().names();
  for (const auto& [name, t] : a.model.params()) {
    const auto& u = restored.params().get(name);
    bitwise = bitwise && u.shape() == t.shape() &&
              std::memcmp(u.vec().data(), t.vec().data(), t.size() * sizeof(float)) == 0;
  }
  bitwise = bitwise && train::encode_checkpoint(restored.params(), train::model_header(restored)) == bytes;
  return {curves && bitwise, std::string("loss curves ") + (curves ? "identical" : "differ") + ", checkpoint " +
                                 (bitwise ? "bitwise identical" : "differs")};
}

}  // namespace

int main() {
  report(1, "gradient integrity", gradient_integrity);
  report(2, "capacity / overfit", capacity);
  report(3, "knowledge benefit", knowledge_benefit);
  report(4, "collective inference", collective_benefit);
  report(5, "attention pattern", attention_pattern);
  report(6, "pruning law", pruning_law);
  report(7, "normalization", normalization);
  report(8, "loss arithmetic", loss_arithmetic);
  report(9, "metric oracle", metric_oracle);
  report(10, "determinism & persistence", determinism);
  std::printf("%d of 10 checks failed\n", failures);
  return failures == 0 ? 0 : 1;
}
