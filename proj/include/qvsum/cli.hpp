#pragma once

// Command implementations behind the qvsum executable. Each returns the
// process exit status: 0 success, 2 input or validation error, 3 numeric
// failure.

#include "qvsum/dataset.hpp"
#include "qvsum/run_config.hpp"
#include "qvsum/synthetic.hpp"

#include <iostream>

namespace qvsum {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumeric = 3;

template <class F>
int run_guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const CapabilityError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  }
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// prepare

struct PrepareArgs {
  std::filesystem::path manifest;
  std::filesystem::path dataset_config;  // empty: dataset.json next to the manifest
  std::filesystem::path out_dir;
};

inline int cmd_prepare(const PrepareArgs& a, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const auto manifest_path = std::filesystem::absolute(a.manifest);
    const auto cfg_path = a.dataset_config.empty() ? manifest_path.parent_path() / "dataset.json" : a.dataset_config;
    if (!std::filesystem::exists(cfg_path)) throw InputError("dataset config not found: " + cfg_path.string());
    const DatasetConfig cfg = dataset_config_from_json(read_json_file(cfg_path));
    Manifest m = load_manifest(manifest_path);
    validate_manifest(m, cfg);

    const auto out_dir = std::filesystem::absolute(a.out_dir);
    const auto cache_root = std::filesystem::absolute(default_cache_root(out_dir));
    const std::string canonical = serialize_manifest(m);
    const std::string hash = hex64(
        fnv1a(canonical + "\n" + to_json(cfg).dump() + "\n" + m.base_dir.string() + "\n" + cache_root.string()));

    const auto meta_path = out_dir / "prepared.json";
    if (std::filesystem::exists(meta_path)) {
      const Json old = read_json_file(meta_path);
      if (old.value("input_hash", "") == hash && std::filesystem::exists(out_dir / "labels.json")) {
        out << "prepare: up to date (" << m.entries.size() << " videos, input hash " << hash << ")\n";
        return kExitOk;
      }
    }

    const FeatureCache cache(cache_root);
    OrderedJson labels = OrderedJson::object();
    std::map<std::string, std::size_t> counts;
    std::size_t hits = 0;
    for (const auto& e : m.entries) {
      (void)load_clip(m, e, cfg);
      bool hit = false;
      (void)clip_features(e.video_id, e.length(), cfg.fps, cfg.frame_features, cfg.segment_features, &cache, &hit);
      hits += hit;
      const auto gold = aggregate_majority(class_annotations(e, cfg.name));
      labels[e.video_id] = segment_labels_to_json(gen_segment_pseudo_labels(gold, cfg.fps));
      ++counts[to_string(e.split)];
    }

    OrderedJson report;
    report["videos"] = m.entries.size();
    OrderedJson splits = OrderedJson::object();
    for (Split s : kAllSplits) splits[to_string(s)] = counts[to_string(s)];
    report["splits"] = splits;
    if (auto exp = expected_split_sizes(cfg.name)) {
      report["expected_splits"] = {{"train", exp->train}, {"val", exp->val}, {"test", exp->test}};
    }
    report["feature_cache_hits"] = hits;
    OrderedJson ids = OrderedJson::array();
    for (const auto& e : m.entries) ids.push_back(e.video_id);
    report["video_ids"] = ids;

    OrderedJson meta;
    meta["input_hash"] = hash;
    meta["frames_root"] = m.base_dir.string();
    meta["cache_root"] = cache_root.string();
    meta["dataset"] = to_json(cfg);
    write_text_file(out_dir / "manifest.jsonl", canonical);
    write_text_file(out_dir / "labels.json", labels.dump(2) + "\n");
    write_text_file(out_dir / "report.json", report.dump(2) + "\n");
    write_text_file(meta_path, meta.dump(2) + "\n");
    out << "prepare: " << m.entries.size() << " videos (train " << counts["train"] << ", val " << counts["val"]
        << ", test " << counts["test"] << ") -> " << out_dir.string() << '\n';
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// intervene

inline std::vector<InterventionRecord> load_interventions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  std::vector<InterventionRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(intervention_from_json(Json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path.string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<InterventionRecord> interventions_for(const RunConfig& rc, const PreparedDataset& p) {
  return build_intervention_dataset(p.manifest, p.config.max_frames, rc.seed, rc.intervention);
}

inline int cmd_intervene(const std::filesystem::path& config_path, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const RunConfig rc = load_run_config(config_path);
    const PreparedDataset p = load_prepared(rc.prepared_dir);
    const auto records = interventions_for(rc, p);
    write_text_file(rc.run_dir / "interventions.jsonl", serialize_interventions(records));
    std::size_t flagged = 0, written = 0;
    for (const auto& r : records) {
      flagged += r.t;
      written += write_perturbed_frames(p.manifest, p.entry(r.video_id), p.config, r, rc.intervention,
                                        rc.run_dir / "perturbed");
    }
    out << "intervene: " << records.size() << " records, " << flagged << " with t=1, " << written
        << " perturbed frames -> " << (rc.run_dir / "interventions.jsonl").string() << '\n';
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// train

struct TrainOutcome {
  TrainResult result;
  std::filesystem::path checkpoint;
};

inline TrainOutcome run_training(const RunConfig& rc, std::ostream& out) {
  const PreparedDataset p = load_prepared(rc.prepared_dir);
  write_text_file(rc.run_dir / "config.json", to_json(rc).dump(2) + "\n");
  std::vector<InterventionRecord> records;
  const std::vector<InterventionRecord>* rec_ptr = nullptr;
  if (rc.model.variant == Variant::conditional) {
    const auto path = rc.run_dir / "interventions.jsonl";
    if (std::filesystem::exists(path)) {
      records = load_interventions(path);
    } else {
      records = interventions_for(rc, p);
      write_text_file(path, serialize_interventions(records));
    }
    rec_ptr = &records;
  }
  const auto train_set = make_split_inputs(p, Split::train, rec_ptr, rc.intervention);
  const auto val_set = make_split_inputs(p, Split::val);
  if (train_set.empty()) throw InputError("prepared dataset has no training videos");
  Model model(rc.model, training_vocab(p.manifest), train_set.front().frames.cols(),
              train_set.front().segments.cols(), rc.seed);

  TrainSettings s{rc.seed, rc.eval.beta, rc.eval.budget_fraction, p.config.gold_aggregation};
  TrainResult r = train(model, train_set, val_set, s, [&](const EpochMetrics& m) {
    out << "epoch " << m.epoch << ' ' << m.split << " loss " << m.loss << " acc " << m.accuracy << " f1 " << m.f1
        << '\n';
  });

  CheckpointMeta meta{rc.model.epochs, rc.seed, r.rng_state, std::filesystem::absolute(rc.prepared_dir).string(),
                      rc.eval.beta, rc.eval.budget_fraction};
  save_checkpoint(rc.run_dir / "last.json", model, meta);
  r.best.restore(model.params());
  meta.epoch = r.best_epoch;
  save_checkpoint(rc.run_dir / "checkpoint.json", model, meta);
  write_text_file(rc.run_dir / "metrics.csv", metrics_csv(r.history));

  OrderedJson summary;
  summary["variant"] = to_string(rc.model.variant);
  summary["initial_train_loss"] = r.initial_train_loss;
  summary["final_train_loss"] = r.final_train_loss;
  summary["best_epoch"] = r.best_epoch;
  summary["best_score"] = r.best_score;
  summary["pretrain_losses"] = r.pretrain_losses;
  const EpochMetrics& last = r.history.back();
  summary["final"] = {{"split", last.split}, {"loss", last.loss}, {"accuracy", last.accuracy}, {"f1", last.f1}};
  write_text_file(rc.run_dir / "summary.json", summary.dump(2) + "\n");
  out << "train: final " << last.split << " loss " << last.loss << " accuracy " << last.accuracy << " f1 " << last.f1
      << "; best epoch " << r.best_epoch << " -> " << (rc.run_dir / "checkpoint.json").string() << '\n';
  return {std::move(r), rc.run_dir / "checkpoint.json"};
}

inline int cmd_train(const std::filesystem::path& config_path, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    run_training(load_run_config(config_path), out);
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::filesystem::path checkpoint;
  std::string split = "test";
  std::filesystem::path out_dir;  // empty: <checkpoint dir>/eval-<split>
  bool gold_as_prediction = false;
};

inline int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const Split split = parse_split(a.split);
    const LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
    const PreparedDataset p = load_prepared(ck.meta.prepared_dir);
    const auto videos = make_split_inputs(p, split);
    if (videos.empty()) throw InputError("split '" + a.split + "' has no videos");
    std::vector<VideoPrediction> preds;
    for (const auto& v : videos) {
      std::vector<int> pred = v.gold;
      if (!a.gold_as_prediction) {
        pred = ck.model->predict(v).predicted();
        pred.resize(v.original_len);
      }
      preds.push_back({v.video_id, std::move(pred), v.gold, v.annotator_gold});
    }
    const EvalReport rep = evaluate(preds, a.split, ck.meta.beta, ck.meta.budget_fraction, p.config.gold_aggregation);
    const auto dir = a.out_dir.empty() ? a.checkpoint.parent_path() / ("eval-" + a.split) : a.out_dir;
    write_text_file(dir / "report.json", to_json(rep).dump(2) + "\n");
    write_text_file(dir / "report.csv", to_csv(rep));
    write_text_file(dir / "summaries.json", summaries_to_json(rep).dump(2) + "\n");
    out << "eval " << a.split << ": accuracy " << rep.accuracy << " f_beta " << rep.f_beta << " temporal_f1 "
        << rep.temporal.f1 << " -> " << dir.string() << '\n';
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// summarize

struct SummarizeArgs {
  std::filesystem::path checkpoint;
  std::string video_id;
  std::string query;
  std::size_t k = 0;  // 0: budget fraction of the video length
  std::filesystem::path out;  // optional file
};

inline OrderedJson summarize_video(const Model& model, const PreparedDataset& p, const std::string& video_id,
                                   const std::string& query, std::size_t k, double budget_fraction) {
  VideoInput v = make_video_input(p, p.entry(video_id));
  v.query = tokenize(query);
  if (v.query.empty()) throw InputError("empty query");
  const Matrix logits = model.predict(v).logits;
  auto scores = argmax_rows(logits);
  scores.resize(v.original_len);
  const std::size_t budget = k == 0 ? default_budget(v.original_len, budget_fraction) : k;
  OrderedJson j;
  j["video_id"] = video_id;
  j["query"] = query;
  j["k"] = budget;
  j["selected_frames"] = generate_summary(scores, v.original_len, budget);
  j["scores"] = scores;
  return j;
}

inline int cmd_summarize(const SummarizeArgs& a, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
    const PreparedDataset p = load_prepared(ck.meta.prepared_dir);
    const OrderedJson j = summarize_video(*ck.model, p, a.video_id, a.query, a.k, ck.meta.budget_fraction);
    if (!a.out.empty()) write_text_file(a.out, j.dump(2) + "\n");
    out << j.dump() << '\n';
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// synth

inline int cmd_synth(const std::filesystem::path& dir, const SyntheticOptions& o, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const Manifest m = write_synthetic_corpus(dir, o);
    out << "synth: " << m.entries.size() << " videos x " << o.frames << " frames -> "
        << (dir / "manifest.jsonl").string() << '\n';
    return kExitOk;
  });
}

}  // namespace qvsum
