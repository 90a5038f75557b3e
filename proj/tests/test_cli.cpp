#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "cli.hpp"
#include "test_support.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "keci");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = keci::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliFlow : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    setenv("KECI_LOG", "error", 1);
    dir_ = fs::temp_directory_path() / ("keci_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    auto spec = keci::testing::small_toy_spec();
    json sj = {{"num_sentences", spec.num_sentences}, {"num_dev", spec.num_dev},
               {"generic_rate", spec.generic_rate}, {"ambiguity_rate", spec.ambiguity_rate},
               {"kb_dim", spec.kb_dim}};
    std::ofstream(dir_ / "spec.json") << sj.dump();
    auto c = keci::testing::small_config();
    c.epochs = 2;
    std::ofstream(dir_ / "config.json") << c.to_json().dump();
    keci::corpus::write_toy(keci::corpus::generate_toy(spec, 3), dir_ / "toy");
  }

  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::string p(const std::string& name) { return (dir_ / name).string(); }

  static fs::path dir_;
};

fs::path CliFlow::dir_;

TEST_F(CliFlow, EndToEnd) {
  auto gen = run({"gen-toy", "--spec", p("spec.json"), "--out", p("toy"), "--seed", "3"});  // same files again
  ASSERT_EQ(gen.code, 0) << gen.err;
  for (auto f : {"train.jsonl", "dev.jsonl", "kb.json", "schema.json"}) EXPECT_TRUE(fs::exists(dir_ / "toy" / f)) << f;

  auto train = run({"train", "--config", p("config.json"), "--train", p("toy/train.jsonl"), "--dev",
                    p("toy/dev.jsonl"), "--kb", p("toy/kb.json"), "--out", p("model.bin")});
  ASSERT_EQ(train.code, 0) << train.err;
  std::istringstream lines(train.out);
  std::string line;
  int epochs = 0;
  while (std::getline(lines, line)) {
    auto j = json::parse(line);
    EXPECT_TRUE(j.contains("loss"));
    EXPECT_TRUE(j.contains("dev_entity_f1"));
    ++epochs;
  }
  EXPECT_EQ(epochs, 2);

  auto ev = run({"eval", "--model", p("model.bin"), "--test", p("toy/dev.jsonl"), "--kb", p("toy/kb.json")});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_NE(ev.out.find("entity    micro"), std::string::npos);

  auto pr = run({"predict", "--model", p("model.bin"), "--test", p("toy/dev.jsonl"), "--kb", p("toy/kb.json"),
                 "--attn", "--out", p("pred.jsonl")});
  ASSERT_EQ(pr.code, 0) << pr.err;
  std::ifstream pred(p("pred.jsonl"));
  std::size_t n = 0;
  while (std::getline(pred, line)) {
    auto j = json::parse(line);
    EXPECT_TRUE(j.contains("text"));
    EXPECT_TRUE(j.contains("entities"));
    EXPECT_TRUE(j.contains("attention"));
    ++n;
  }
  EXPECT_EQ(n, keci::testing::small_toy_spec().num_dev);

  auto at = run({"analyze-attention", "--model", p("model.bin"), "--test", p("toy/dev.jsonl"), "--kb",
                 p("toy/kb.json")});
  ASSERT_EQ(at.code, 0) << at.err;
  EXPECT_TRUE(json::parse(at.out).contains("sentinel"));

  // Missing KB for a KB variant.
  EXPECT_EQ(run({"eval", "--model", p("model.bin"), "--test", p("toy/dev.jsonl")}).code, 1);
}

TEST_F(CliFlow, AblationAndKfold) {
  ASSERT_EQ(run({"gen-toy", "--spec", p("spec.json"), "--out", p("toy2")}).code, 0);
  auto ab = run({"eval", "--config", p("config.json"), "--train", p("toy2/train.jsonl"), "--test",
                 p("toy2/dev.jsonl"), "--kb", p("toy2/kb.json"), "--ablation", "full,sent_context_only"});
  ASSERT_EQ(ab.code, 0) << ab.err;
  EXPECT_NE(ab.out.find("sent_context_only"), std::string::npos);

  auto kf = run({"kfold", "--train", p("toy2/train.jsonl"), "--folds", "3", "--out", p("folds")});
  ASSERT_EQ(kf.code, 0) << kf.err;
  EXPECT_TRUE(fs::exists(dir_ / "folds" / "fold2" / "test.jsonl"));
  EXPECT_TRUE(fs::exists(dir_ / "folds" / "fold0" / "schema.json"));

  auto cv = run({"eval", "--config", p("config.json"), "--train", p("toy2/train.jsonl"), "--folds", "2",
                 "--ablation", "sent_context_only"});
  EXPECT_EQ(cv.code, 0) << cv.err;
}

TEST_F(CliFlow, GradcheckPasses) {
  auto g = run({"gradcheck", "--config", p("config.json")});
  EXPECT_EQ(g.code, 0) << g.out << g.err;
  EXPECT_NE(g.out.find("max_relative_error"), std::string::npos);
}

TEST_F(CliFlow, UsageErrorsExitOne) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"train", "--bogus"}).code, 1);
  EXPECT_EQ(run({"fly"}).code, 1);
  EXPECT_EQ(run({"train", "--train", p("toy/train.jsonl")}).code, 1);  // no --out
  EXPECT_EQ(run({"eval", "--model", p("missing.bin"), "--test", p("toy/dev.jsonl")}).code, 1);
  EXPECT_EQ(run({"train", "--train", p("nowhere/train.jsonl"), "--out", p("x.bin")}).code, 1);
  EXPECT_EQ(run({"train", "--config", p("config.json"), "--train", p("toy/train.jsonl"), "--out", p("x.bin"),
                 "--ablation", "half"})
                .code,
            1);
  EXPECT_EQ(run({"predict", "--threads", "0"}).code, 1);
  std::ofstream(dir_ / "junk.bin") << "not a checkpoint";
  EXPECT_EQ(run({"eval", "--model", p("junk.bin"), "--test", p("toy/dev.jsonl")}).code, 1);
  std::ofstream(dir_ / "bad_config.json") << R"({"unknown_key": 1})";
  EXPECT_EQ(run({"gradcheck", "--config", p("bad_config.json")}).code, 1);
  auto help = run({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("gen-toy"), std::string::npos);
}

}  // namespace
