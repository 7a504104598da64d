#pragma once

#include "qvsum/intervene.hpp"
#include "qvsum/model.hpp"

namespace qvsum {

struct EvalSettings {
  double beta = 1.0;
  double budget_fraction = 0.15;
};

// Everything that affects results. Relative paths resolve against the
// directory of the config file.
struct RunConfig {
  std::filesystem::path prepared_dir;
  std::filesystem::path run_dir;
  std::uint64_t seed = 0;
  ModelConfig model;
  InterventionOptions intervention;
  EvalSettings eval;
};

inline InterventionOptions intervention_options_from_json(const Json& j) {
  const std::string ctx = "intervention config";
  require_known_keys(j, {"selection_rate", "frame_fraction", "salt_pepper_density", "blur_kernel", "dropped_words"}, ctx);
  InterventionOptions o;
  o.selection_rate = get_field_or(j, "selection_rate", o.selection_rate, ctx);
  o.frame_fraction = get_field_or(j, "frame_fraction", o.frame_fraction, ctx);
  o.salt_pepper_density = get_field_or(j, "salt_pepper_density", o.salt_pepper_density, ctx);
  o.blur_kernel = get_field_or(j, "blur_kernel", o.blur_kernel, ctx);
  o.dropped_words = get_field_or(j, "dropped_words", o.dropped_words, ctx);
  for (double v : {o.selection_rate, o.frame_fraction, o.salt_pepper_density})
    if (!(v >= 0.0 && v <= 1.0)) throw InputError(ctx + ": rates must lie in [0, 1]");
  if (o.blur_kernel < 1 || o.blur_kernel % 2 == 0) throw InputError(ctx + ": blur_kernel must be odd and positive");
  return o;
}

inline OrderedJson to_json(const InterventionOptions& o) {
  OrderedJson j;
  j["selection_rate"] = o.selection_rate;
  j["frame_fraction"] = o.frame_fraction;
  j["salt_pepper_density"] = o.salt_pepper_density;
  j["blur_kernel"] = o.blur_kernel;
  j["dropped_words"] = o.dropped_words;
  return j;
}

inline RunConfig run_config_from_json(const Json& j, const std::filesystem::path& base_dir = {}) {
  const std::string ctx = "run config";
  require_known_keys(j, {"prepared_dir", "run_dir", "seed", "model", "intervention", "eval"}, ctx);
  RunConfig c;
  auto resolve = [&](const std::string& s) {
    std::filesystem::path p(s);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  };
  c.prepared_dir = resolve(get_field<std::string>(j, "prepared_dir", ctx));
  c.run_dir = resolve(get_field<std::string>(j, "run_dir", ctx));
  c.seed = get_field_or<std::uint64_t>(j, "seed", 0, ctx);
  c.model = model_config_from_json(j.contains("model") ? j.at("model") : Json::object());
  if (j.contains("intervention")) c.intervention = intervention_options_from_json(j.at("intervention"));
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    require_known_keys(e, {"beta", "budget_fraction"}, ctx + ".eval");
    c.eval.beta = get_field_or(e, "beta", c.eval.beta, ctx);
    c.eval.budget_fraction = get_field_or(e, "budget_fraction", c.eval.budget_fraction, ctx);
    if (!(c.eval.beta > 0.0)) throw InputError(ctx + ".eval: beta must be positive");
    if (!(c.eval.budget_fraction > 0.0 && c.eval.budget_fraction <= 1.0))
      throw InputError(ctx + ".eval: budget_fraction must lie in (0, 1]");
  }
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  return run_config_from_json(read_json_file(path), std::filesystem::absolute(path).parent_path());
}

// Fully resolved snapshot; loading it reproduces the run.
inline OrderedJson to_json(const RunConfig& c) {
  OrderedJson j;
  j["prepared_dir"] = std::filesystem::absolute(c.prepared_dir).lexically_normal().string();
  j["run_dir"] = std::filesystem::absolute(c.run_dir).lexically_normal().string();
  j["seed"] = c.seed;
  j["model"] = to_json(c.model);
  j["intervention"] = to_json(c.intervention);
  j["eval"] = {{"beta", c.eval.beta}, {"budget_fraction", c.eval.budget_fraction}};
  return j;
}

}  // namespace qvsum
