#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <sstream>

#include "qvsum/qvsum.hpp"
#include "schema_check.hpp"
#include "test_util.hpp"

using namespace qvsum;
namespace fs = std::filesystem;

namespace {

Json load_schema(const std::string& name) { return read_json_file(fs::path(QVSUM_SCHEMA_DIR) / name); }

struct Workspace {
  testutil::TempDir dir{"cli"};
  fs::path corpus = dir.path() / "corpus";
  fs::path prepared = dir.path() / "prepared";

  explicit Workspace(SyntheticOptions o = {}) {
    std::ostringstream out, err;
    EXPECT_EQ(cmd_synth(corpus, o, out, err), kExitOk);
    EXPECT_EQ(cmd_prepare({corpus / "manifest.jsonl", {}, prepared}, out, err), kExitOk) << err.str();
  }

  fs::path write_config(const std::string& name, Json model, std::uint64_t seed = 1) {
    Json j{{"prepared_dir", "prepared"}, {"run_dir", "runs/" + name}, {"seed", seed}, {"model", std::move(model)}};
    const auto path = dir.path() / (name + ".json");
    write_text_file(path, j.dump(2));
    return path;
  }
};

Json toy_model(const std::string& variant, double lr = 0.01, int epochs = 3) {
  return Json{{"variant", variant}, {"learning_rate", lr}, {"epochs", epochs}, {"embed_dim", 16}, {"hidden_dim", 16},
              {"ffn_dim", 32}, {"fc_dim", 16}, {"pretrain_learning_rate", 0.01}, {"pretrain_epochs", 2}};
}

int run(const std::function<int(std::ostream&, std::ostream&)>& f, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = f(out, err);
  if (err_text) *err_text = err.str();
  return code;
}

}  // namespace

TEST(CliPrepare, ReportAndIdempotence) {
  Workspace w;
  const Json report = read_json_file(w.prepared / "report.json");
  EXPECT_EQ(report["videos"], 6);
  EXPECT_EQ(report["video_ids"].size(), 6u);
  std::ostringstream out, err;
  EXPECT_EQ(cmd_prepare({w.corpus / "manifest.jsonl", {}, w.prepared}, out, err), kExitOk);
  EXPECT_NE(out.str().find("up to date"), std::string::npos);
  EXPECT_TRUE(fs::exists(w.prepared / "labels.json"));
}

TEST(CliPrepare, MismatchedAnnotationsExitTwoNamingVideo) {
  Workspace w;
  std::string text = read_text_file(w.corpus / "manifest.jsonl");
  const auto pos = text.find("\"annotations\":[[");
  text.insert(pos + 16, "3,");
  write_text_file(w.corpus / "bad.jsonl", text);
  std::string err;
  EXPECT_EQ(run([&](auto& o, auto& e) { return cmd_prepare({w.corpus / "bad.jsonl", w.corpus / "dataset.json", w.dir.path() / "p2"}, o, e); }, &err),
            kExitInput);
  EXPECT_NE(err.find("synth_00"), std::string::npos) << err;
  EXPECT_NE(err.find("line 1"), std::string::npos) << err;
}

TEST(CliTrain, MetricsCsvSnapshotAndDeterminism) {
  Workspace w;
  const auto cfg = w.write_config("a", toy_model("queryvs"));
  EXPECT_EQ(run([&](auto& o, auto& e) { return cmd_train(cfg, o, e); }), kExitOk);
  const auto run_dir = w.dir.path() / "runs/a";
  const std::string csv = read_text_file(run_dir / "metrics.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(csv.rfind("epoch,split,loss,accuracy,f1\n", 0), 0u);
  const Json snapshot = read_json_file(run_dir / "config.json");
  EXPECT_TRUE(schema::validate(load_schema("run_config.schema.json"), snapshot).empty());
  EXPECT_TRUE(schema::validate(load_schema("run_config.schema.json"), read_json_file(cfg)).empty());

  fs::rename(run_dir, w.dir.path() / "runs/a0");
  EXPECT_EQ(run([&](auto& o, auto& e) { return cmd_train(cfg, o, e); }), kExitOk);
  EXPECT_EQ(read_text_file(run_dir / "metrics.csv"), csv);
  EXPECT_EQ(read_text_file(run_dir / "checkpoint.json"), read_text_file(w.dir.path() / "runs/a0/checkpoint.json"));

  fs::rename(run_dir, w.dir.path() / "runs/a1");
  EXPECT_EQ(run([&](auto& o, auto& e) { return cmd_train(w.dir.path() / "runs/a1/config.json", o, e); }), kExitOk);
  EXPECT_EQ(read_text_file(run_dir / "metrics.csv"), csv);
}

TEST(CliTrain, ZeroLearningRateKeepsLoss) {
  Workspace w;
  const auto cfg = w.write_config("z", toy_model("gpt2mvs", 0.0, 2));
  EXPECT_EQ(run([&](auto& o, auto& e) { return cmd_train(cfg, o, e); }), kExitOk);
  const Json s = read_json_file(w.dir.path() / "runs/z/summary.json");
  EXPECT_NEAR(s["final_train_loss"].get<double>(), s["initial_train_loss"].get<double>(), 1e-9);
}

TEST(CliTrain, DivergenceExitsThree) {
  Workspace w;
  const auto cfg = w.write_config("nan", toy_model("queryvs", 1e300, 2));
  std::string err;
  EXPECT_EQ(run([&](auto& o, auto& e) { return cmd_train(cfg, o, e); }, &err), kExitNumeric);
  EXPECT_NE(err.find("non-finite"), std::string::npos) << err;
}

TEST(CliTrain, BadConfigExitsTwo) {
  Workspace w;
  const auto cfg = w.write_config("bad", Json{{"variant", "queryvs"}, {"learning_rte", 0.1}});
  EXPECT_EQ(run([&](auto& o, auto& e) { return cmd_train(cfg, o, e); }), kExitInput);
  EXPECT_EQ(run([&](auto& o, auto& e) { return cmd_train(w.dir.path() / "missing.json", o, e); }), kExitInput);
}

TEST(CliTrain, EveryVariantRuns) {
  Workspace w;
  for (const std::string v : {"gpt2mvs", "conditional", "pseudo_pretrain"}) {
    const auto cfg = w.write_config(v, toy_model(v, 0.003, 2));
    std::string err;
    EXPECT_EQ(run([&](auto& o, auto& e) { return cmd_train(cfg, o, e); }, &err), kExitOk) << v << err;
  }
  EXPECT_TRUE(fs::exists(w.dir.path() / "runs/conditional/interventions.jsonl"));
  const Json s = read_json_file(w.dir.path() / "runs/pseudo_pretrain/summary.json");
  EXPECT_EQ(s["pretrain_losses"].size(), 2u);
}

TEST(CliIntervene, WritesRecordsAndPerturbedFrames) {
  SyntheticOptions o;
  o.train_videos = 10;
  o.frames = 10;
  Workspace w(o);
  const auto cfg = w.write_config("iv", toy_model("conditional"), 4);
  EXPECT_EQ(run([&](auto& out, auto& e) { return cmd_intervene(cfg, out, e); }), kExitOk);
  const auto records = load_interventions(w.dir.path() / "runs/iv/interventions.jsonl");
  EXPECT_EQ(records.size(), 10u);
  for (const auto& r : records) {
    const auto flagged = static_cast<std::size_t>(std::count(r.frame_mask.begin(), r.frame_mask.end(), true));
    EXPECT_EQ(flagged, r.t ? 3u : 0u);
    if (r.t) EXPECT_TRUE(fs::exists(w.dir.path() / "runs/iv/perturbed" / r.video_id));
  }
  const std::string first = read_text_file(w.dir.path() / "runs/iv/interventions.jsonl");
  EXPECT_EQ(run([&](auto& out, auto& e) { return cmd_intervene(cfg, out, e); }), kExitOk);
  EXPECT_EQ(read_text_file(w.dir.path() / "runs/iv/interventions.jsonl"), first);
}

TEST(CliEval, GoldInjectionSchemaAndMissingSplit) {
  Workspace w;
  const auto cfg = w.write_config("e", toy_model("queryvs"));
  ASSERT_EQ(run([&](auto& o, auto& e) { return cmd_train(cfg, o, e); }), kExitOk);
  const auto ckpt = w.dir.path() / "runs/e/checkpoint.json";
  EXPECT_EQ(run([&](auto& o, auto& e) { return cmd_eval({ckpt, "train", {}, true}, o, e); }), kExitOk);
  const Json report = read_json_file(w.dir.path() / "runs/e/eval-train/report.json");
  EXPECT_NEAR(report["accuracy"].get<double>(), 1.0, 1e-12);
  EXPECT_NEAR(report["temporal_f1"].get<double>(), 1.0, 1e-12);
  const auto errors = schema::validate(load_schema("eval_report.schema.json"), report);
  EXPECT_TRUE(errors.empty()) << (errors.empty() ? "" : errors.front());
  EXPECT_TRUE(fs::exists(w.dir.path() / "runs/e/eval-train/report.csv"));
  EXPECT_EQ(run([&](auto& o, auto& e) { return cmd_eval({ckpt, "train", {}, false}, o, e); }), kExitOk);
  EXPECT_TRUE(schema::validate(load_schema("eval_report.schema.json"),
                               read_json_file(w.dir.path() / "runs/e/eval-train/report.json")).empty());
  EXPECT_EQ(run([&](auto& o, auto& e) { return cmd_eval({ckpt, "test", {}, false}, o, e); }), kExitInput);
  EXPECT_EQ(run([&](auto& o, auto& e) { return cmd_eval({ckpt, "dev", {}, false}, o, e); }), kExitInput);
}

TEST(CliSummarize, DeterministicSaturatingAndUnknownVideo) {
  Workspace w;
  const auto cfg = w.write_config("s", toy_model("queryvs", 0.01, 20));
  ASSERT_EQ(run([&](auto& o, auto& e) { return cmd_train(cfg, o, e); }), kExitOk);
  const auto ckpt = w.dir.path() / "runs/s/checkpoint.json";
  auto summarize = [&](const std::string& vid, const std::string& q, std::size_t k, int* code = nullptr) {
    std::ostringstream out, err;
    const int c = cmd_summarize({ckpt, vid, q, k, {}}, out, err);
    if (code) *code = c;
    return out.str();
  };
  const std::string a = summarize("synth_00", "dog beach", 0);
  EXPECT_EQ(a, summarize("synth_00", "dog beach", 0));
  const Json j = Json::parse(a);
  EXPECT_EQ(j["scores"].size(), 32u);
  EXPECT_EQ(j["k"], 5);
  const Json all = Json::parse(summarize("synth_00", "dog beach", 1000));
  std::vector<std::size_t> relevant;
  for (std::size_t i = 0; i < 32; ++i)
    if (all["scores"][i].get<int>() >= 2) relevant.push_back(i);
  EXPECT_EQ(all["selected_frames"].get<std::vector<std::size_t>>(), relevant);
  int code = 0;
  summarize("nope", "dog", 0, &code);
  EXPECT_EQ(code, kExitInput);
  summarize("synth_00", "zebra", 0, &code);
  EXPECT_EQ(code, kExitOk);
}

TEST(CliBinary, ExitCodes) {
  const std::string exe = QVSUM_CLI_PATH;
  auto status = [](const std::string& cmd) {
    const int raw = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  EXPECT_EQ(status(exe + " --help"), 0);
  EXPECT_EQ(status(exe + " frobnicate"), 2);
  EXPECT_EQ(status(exe + " train /nonexistent/config.json"), 2);
  testutil::TempDir dir("bin");
  EXPECT_EQ(status(exe + " synth --out " + (dir.path() / "c").string()), 0);
  EXPECT_EQ(status(exe + " prepare --manifest " + (dir.path() / "c/manifest.jsonl").string() + " --out " +
                   (dir.path() / "p").string()), 0);
}
