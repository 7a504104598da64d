#include "qvsum/qvsum.hpp"

#include "CLI11.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Query-driven video summarization toolkit"};
  app.require_subcommand(1);

  qvsum::PrepareArgs prep;
  auto* prepare = app.add_subcommand("prepare", "validate a manifest, decode frames and fill the feature cache");
  prepare->add_option("--manifest", prep.manifest, "manifest (JSON lines)")->required();
  prepare->add_option("--dataset-config", prep.dataset_config, "dataset config (default: dataset.json beside the manifest)");
  prepare->add_option("--out", prep.out_dir, "prepared dataset directory")->required();

  std::string intervene_cfg;
  auto* intervene = app.add_subcommand("intervene", "build the intervention corpus for a run");
  intervene->add_option("--config", intervene_cfg, "run config")->required();

  std::string train_cfg;
  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", train_cfg, "run config")->required();

  qvsum::EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  eval->add_option("--checkpoint", ev.checkpoint)->required();
  eval->add_option("--split", ev.split, "train, val or test")->capture_default_str();
  eval->add_option("--out", ev.out_dir, "report directory");
  eval->add_flag("--gold-as-prediction", ev.gold_as_prediction, "score the gold labels themselves");

  qvsum::SummarizeArgs sum;
  auto* summarize = app.add_subcommand("summarize", "summarize one video for a query");
  summarize->add_option("--checkpoint", sum.checkpoint)->required();
  summarize->add_option("--video-id", sum.video_id)->required();
  summarize->add_option("--query", sum.query)->required();
  summarize->add_option("--k", sum.k, "summary budget (default: 15% of the video)");
  summarize->add_option("--out", sum.out, "also write the JSON here");

  std::string synth_dir;
  qvsum::SyntheticOptions so;
  auto* synth = app.add_subcommand("synth", "write the synthetic toy corpus");
  synth->add_option("--out", synth_dir)->required();
  synth->add_option("--val", so.val_videos)->capture_default_str();
  synth->add_option("--test", so.test_videos)->capture_default_str();
  synth->add_option("--seed", so.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : qvsum::kExitInput;
  }

  auto& out = std::cout;
  auto& err = std::cerr;
  if (*prepare) return qvsum::cmd_prepare(prep, out, err);
  if (*intervene) return qvsum::cmd_intervene(intervene_cfg, out, err);
  if (*train) return qvsum::cmd_train(train_cfg, out, err);
  if (*eval) return qvsum::cmd_eval(ev, out, err);
  if (*summarize) return qvsum::cmd_summarize(sum, out, err);
  if (*synth) return qvsum::cmd_synth(synth_dir, so, out, err);
  return qvsum::kExitInput;
}
