#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "keci/keci.hpp"

namespace keci::cli {

namespace fs = std::filesystem;
using nlohmann::json;

struct Options {
  std::string verb;
  std::string config, train, dev, test, kb, out, model, ablation, spec;
  std::optional<std::uint64_t> seed;
  std::size_t folds = 0;
  std::size_t threads = 1;
  bool attn = false;
};

inline std::shared_ptr<spdlog::logger> logger() {
  static auto log = [] {
    auto l = spdlog::stderr_color_mt("keci");
    const char* env = std::getenv("KECI_LOG");
    const std::string level = env ? env : "info";
    if (level == "error") {
      l->set_level(spdlog::level::err);
    } else if (level == "debug") {
      l->set_level(spdlog::level::debug);
    } else {
      l->set_level(spdlog::level::info);
    }
    l->set_pattern("[%l] %v");
    return l;
  }();
  return log;
}

inline void require(const std::string& value, const char* flag, const std::string& verb) {
  if (value.empty()) throw ArgumentError(verb + " requires " + flag);
}

/// schema.json next to a dataset file.
inline corpus::TaskSchema sibling_schema(const std::string& data_path) {
  const fs::path p = fs::path(data_path).parent_path() / "schema.json";
  if (!fs::exists(p)) throw ArgumentError("no schema.json next to " + data_path);
  return corpus::load_schema(p.string());
}

inline ModelConfig load_run_config(const Options& o) {
  ModelConfig c = o.config.empty() ? ModelConfig{} : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  return c;
}

inline std::optional<kb::KnowledgeBase> maybe_kb(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return kb::load_kb(path);
}

inline train::Variant single_variant(const Options& o) {
  return o.ablation.empty() ? train::Variant::kFull : train::parse_variant(o.ablation);
}

inline std::vector<train::Variant> variant_list(const std::string& s) {
  if (s.empty()) return {train::Variant::kFull};
  if (s == "all") return train::all_variants();
  std::vector<train::Variant> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(train::parse_variant(item));
  return out;
}

inline std::optional<encoder::EmbeddingFile> maybe_embeddings(const ModelConfig& c) {
  if (c.embedding_path.empty()) return std::nullopt;
  return encoder::read_embedding_file(c.embedding_path);
}

/// Loads a checkpoint and the dataset at `data` with the checkpoint schema.
/// A schema.json next to the data must agree with it.
inline std::vector<corpus::Document> load_for_model(const train::KeciModel<float>& model, const std::string& data) {
  const fs::path p = fs::path(data).parent_path() / "schema.json";
  if (fs::exists(p) && !(corpus::load_schema(p.string()) == model.schema())) {
    throw ValidationError("schema of " + data + " does not match the checkpoint schema");
  }
  return corpus::load_dataset(data, model.schema());
}

inline int cmd_train(const Options& o, std::ostream& out) {
  require(o.train, "--train", "train");
  require(o.out, "--out", "train");
  const ModelConfig config = load_run_config(o);
  const auto variant = single_variant(o);
  if (train::uses_kb(variant)) require(o.kb, "--kb", "train");
  const auto schema = sibling_schema(o.train);
  const auto train_docs = corpus::load_dataset(o.train, schema);
  const auto dev_docs = o.dev.empty() ? std::vector<corpus::Document>{} : corpus::load_dataset(o.dev, schema);
  const auto kb = maybe_kb(o.kb);
  const auto emb = maybe_embeddings(config);
  logger()->info("training {} on {} documents ({} dev)", train::to_string(variant), train_docs.size(), dev_docs.size());
  train::FitOptions opts;
  opts.variant = variant;
  opts.threads = o.threads;
  opts.pretrained = emb ? &*emb : nullptr;
  opts.on_epoch = [&](const train::EpochRecord& r) {
    json line = {{"epoch", r.epoch}, {"loss", r.train_loss}};
    if (r.dev) {
      line["dev_entity_f1"] = r.dev->entity_micro.f1;
      line["dev_relation_f1"] = r.dev->relation_micro.f1;
    }
    out << line.dump() << '\n';
  };
  const auto fitted = train::fit<float>(config, schema, train_docs, dev_docs, kb ? &*kb : nullptr, opts);
  if (fitted.missing_grads > 0) logger()->debug("{} parameter updates skipped without gradients", fitted.missing_grads);
  train::save_model(fitted.model, o.out);
  logger()->info("best epoch {}; checkpoint written to {}", fitted.best_epoch, o.out);
  return 0;
}

inline void print_metrics(const eval::MetricsReport& m, std::ostream& out) {
  out << m.table();
  out << m.to_json().dump() << '\n';
}

inline eval::MetricsReport mean_metrics(const std::vector<eval::MetricsReport>& runs) {
  eval::MetricsReport avg;
  auto acc = [&](eval::PRF eval::MetricsReport::*field) {
    eval::PRF& a = avg.*field;
    for (const auto& r : runs) {
      const eval::PRF& p = r.*field;
      a.precision += p.precision / runs.size();
      a.recall += p.recall / runs.size();
      a.f1 += p.f1 / runs.size();
      a.tp += p.tp;
      a.fp += p.fp;
      a.fn += p.fn;
    }
  };
  acc(&eval::MetricsReport::entity_micro);
  acc(&eval::MetricsReport::entity_macro);
  acc(&eval::MetricsReport::relation_micro);
  acc(&eval::MetricsReport::relation_macro);
  return avg;
}

/// Trains and scores every requested variant, either on a fixed split or
/// with k-fold cross-validation over --train.
inline int cmd_eval_train(const Options& o, std::ostream& out) {
  require(o.train, "--train", "eval");
  const ModelConfig config = load_run_config(o);
  const auto variants = variant_list(o.ablation);
  const auto schema = sibling_schema(o.train);
  const auto train_docs = corpus::load_dataset(o.train, schema);
  const auto kb = maybe_kb(o.kb);
  for (auto v : variants)
    if (train::uses_kb(v) && !kb) throw ArgumentError("variant " + train::to_string(v) + " requires --kb");
  const auto emb = maybe_embeddings(config);
  train::FitOptions opts;
  opts.threads = o.threads;
  opts.pretrained = emb ? &*emb : nullptr;
  const kb::KnowledgeBase* kbp = kb ? &*kb : nullptr;
  std::vector<eval::AblationRow> rows;
  if (o.folds > 0) {
    const auto folds = corpus::kfold_split(train_docs.size(), o.folds, config.seed);
    for (auto v : variants) {
      std::vector<eval::MetricsReport> runs;
      for (std::size_t f = 0; f < folds.size(); ++f) {
        logger()->info("{} fold {}/{}", train::to_string(v), f + 1, folds.size());
        const auto tr = corpus::select(train_docs, folds[f].train);
        const auto te = corpus::select(train_docs, folds[f].test);
        runs.push_back(eval::run_ablation({v}, config, schema, tr, {}, te, kbp, opts).front().metrics);
      }
      rows.push_back({v, mean_metrics(runs), 0});
    }
  } else {
    require(o.test, "--test", "eval");
    const auto dev_docs = o.dev.empty() ? std::vector<corpus::Document>{} : corpus::load_dataset(o.dev, schema);
    const auto test_docs = corpus::load_dataset(o.test, schema);
    rows = eval::run_ablation(variants, config, schema, train_docs, dev_docs, test_docs, kbp, opts);
  }
  if (rows.size() == 1) {
    print_metrics(rows.front().metrics, out);
  } else {
    out << eval::ablation_table(rows);
    out << eval::ablation_json(rows).dump() << '\n';
  }
  return 0;
}

inline int cmd_eval(const Options& o, std::ostream& out) {
  if (o.model.empty()) return cmd_eval_train(o, out);
  require(o.test, "--test", "eval");
  const auto model = train::load_model<float>(o.model);
  if (train::uses_kb(model.variant())) require(o.kb, "--kb", "eval");
  const auto docs_raw = load_for_model(model, o.test);
  const auto kb = maybe_kb(o.kb);
  const auto docs = eval::prepare_all(model, docs_raw, kb ? &*kb : nullptr);
  print_metrics(eval::evaluate_model(model, docs, o.threads), out);
  return 0;
}

inline int cmd_predict(const Options& o, std::ostream& out) {
  require(o.model, "--model", "predict");
  require(o.test, "--test", "predict");
  const auto model = train::load_model<float>(o.model);
  if (train::uses_kb(model.variant())) require(o.kb, "--kb", "predict");
  const auto kb = maybe_kb(o.kb);
  const auto docs = eval::prepare_all(model, load_for_model(model, o.test), kb ? &*kb : nullptr);
  std::ofstream file;
  if (!o.out.empty()) {
    file.open(o.out);
    if (!file) throw ArgumentError("cannot write " + o.out);
  }
  std::ostream& sink = o.out.empty() ? out : file;
  ad::NoGradScope<float> no_grad;
  for (const auto& d : docs) {
    const auto fwd = model.forward(d);
    const auto graph = eval::decode_forward(fwd, model.config().relation_loss_mode);
    json line = corpus::document_to_json(eval::with_predictions(d.doc, graph), model.schema());
    if (o.attn && fwd.fusion) {
      json attn = json::array();
      const auto kept = fwd.kept_spans();
      for (std::size_t i = 0; i < kept.size(); ++i) {
        json cands = json::array();
        for (std::size_t c = 0; c < fwd.candidates[i].size(); ++c) {
          const auto& node = d.kg.nodes[fwd.candidates[i][c]];
          cands.push_back({{"entity", kb->entities[node.ref].id}, {"weight", fwd.fusion->candidate_weight(i, c)}});
        }
        attn.push_back({{"span", {kept[i].start, kept[i].end}},
                        {"sentinel", fwd.fusion->sentinel_weight(i)},
                        {"candidates", cands}});
      }
      line["attention"] = attn;
    }
    sink << line.dump() << '\n';
  }
  return 0;
}

inline int cmd_gradcheck(const Options& o, std::ostream& out) {
  const ModelConfig config = load_run_config(o);
  const auto check = train::pipeline_gradcheck(config, config.seed);
  out << "max_relative_error " << check.result.max_relative_error << '\n';
  out << "worst_parameter " << check.result.worst_parameter << '[' << check.result.worst_index << "]\n";
  out << "checked " << check.result.checked << " scalars over " << check.documents << " documents, "
      << check.kg_nodes << " kg nodes\n";
  return check.result.max_relative_error < 1e-3 ? 0 : 1;
}

inline int cmd_attention(const Options& o, std::ostream& out) {
  require(o.model, "--model", "analyze-attention");
  require(o.test, "--test", "analyze-attention");
  require(o.kb, "--kb", "analyze-attention");
  const auto model = train::load_model<float>(o.model);
  const auto kb = kb::load_kb(o.kb);
  const auto docs = eval::prepare_all(model, load_for_model(model, o.test), &kb);
  out << eval::attention_report(model, docs, kb).to_json().dump(1) << '\n';
  return 0;
}

inline int cmd_gen_toy(const Options& o, std::ostream& out) {
  require(o.out, "--out", "gen-toy");
  corpus::ToySpec spec;
  if (!o.spec.empty()) {
    std::ifstream in(o.spec);
    if (!in) throw ArgumentError("cannot open spec " + o.spec);
    try {
      spec = corpus::ToySpec::from_json(json::parse(in));
    } catch (const json::parse_error& e) {
      throw ParseError("spec " + o.spec + ": " + e.what());
    }
  }
  const auto toy = corpus::generate_toy(spec, o.seed.value_or(13));
  corpus::write_toy(toy, o.out);
  out << "wrote " << toy.train.size() << " train and " << toy.dev.size() << " dev documents to " << o.out << '\n';
  return 0;
}

inline int cmd_kfold(const Options& o, std::ostream& out) {
  require(o.train, "--train", "kfold");
  require(o.out, "--out", "kfold");
  if (o.folds == 0) throw ArgumentError("kfold requires --folds");
  const auto schema = sibling_schema(o.train);
  const auto docs = corpus::load_dataset(o.train, schema);
  const auto folds = corpus::kfold_split(docs.size(), o.folds, o.seed.value_or(13));
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const fs::path dir = fs::path(o.out) / ("fold" + std::to_string(f));
    fs::create_directories(dir);
    corpus::save_dataset((dir / "train.jsonl").string(), corpus::select(docs, folds[f].train), schema);
    corpus::save_dataset((dir / "test.jsonl").string(), corpus::select(docs, folds[f].test), schema);
    std::ofstream s(dir / "schema.json", std::ios::binary);
    s << schema.to_json().dump(1) << '\n';
  }
  out << "wrote " << folds.size() << " folds to " << o.out << '\n';
  return 0;
}

/// Parses argv and runs one verb. Returns the process exit code:
/// 0 success, 1 usage or validation error, 2 internal error.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Knowledge-enhanced joint entity and relation extraction", "keci"};
  app.require_subcommand(1, 1);
  Options o;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config, "model config JSON");
    cmd->add_option("--train", o.train, "training JSONL");
    cmd->add_option("--dev", o.dev, "dev JSONL");
    cmd->add_option("--test", o.test, "test JSONL");
    cmd->add_option("--kb", o.kb, "knowledge base JSON");
    cmd->add_option("--out", o.out, "output path");
    cmd->add_option("--model", o.model, "checkpoint");
    cmd->add_option("--seed", o.seed, "random seed");
    cmd->add_option("--ablation", o.ablation, "variant name, comma list, or all");
    cmd->add_option("--folds", o.folds, "cross-validation folds");
    cmd->add_option("--threads", o.threads, "evaluation threads")->check(CLI::PositiveNumber);
    cmd->add_flag("--attn", o.attn, "include attention weights in predictions");
    cmd->add_option("--spec", o.spec, "toy corpus spec JSON");
  };
  const std::vector<std::pair<const char*, const char*>> verbs{
      {"train", "train a model and write a checkpoint"},
      {"eval", "score a checkpoint, or train and score variants"},
      {"predict", "write predicted graphs as JSONL"},
      {"gradcheck", "finite-difference check of the full pipeline"},
      {"analyze-attention", "average attention weight per semantic type"},
      {"gen-toy", "write a synthetic corpus and KB"},
      {"kfold", "split a dataset into folds"}};
  for (const auto& [name, help] : verbs) add_common(app.add_subcommand(name, help));
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    return 1;
  }
  o.verb = app.get_subcommands().front()->get_name();
  try {
    if (o.verb == "train") return cmd_train(o, out);
    if (o.verb == "eval") return cmd_eval(o, out);
    if (o.verb == "predict") return cmd_predict(o, out);
    if (o.verb == "gradcheck") return cmd_gradcheck(o, out);
    if (o.verb == "analyze-attention") return cmd_attention(o, out);
    if (o.verb == "gen-toy") return cmd_gen_toy(o, out);
    if (o.verb == "kfold") return cmd_kfold(o, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}

}  // namespace keci::cli
