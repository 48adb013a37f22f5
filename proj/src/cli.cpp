#include "layoutdiff/cli.hpp"

#include <cmath>
#include <iostream>
#include <map>

#include "layoutdiff/diagnostics.hpp"
#include "layoutdiff/selftest.hpp"
#include "layoutdiff/serialize.hpp"

namespace layoutdiff {

using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw InvalidInput(where + ": unknown key \"" + item.key() + "\"");
    }
  }
}

double get_number(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw InvalidInput(std::string("config: ") + key + " must be a number");
  return j[key].get<double>();
}

int get_int(const json& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer()) {
    throw InvalidInput(std::string("config: ") + key + " must be an integer");
  }
  return j[key].get<int>();
}

bool get_bool(const json& j, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_boolean()) {
    throw InvalidInput(std::string("config: ") + key + " must be a boolean");
  }
  return j[key].get<bool>();
}

}  // namespace

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) {
    throw InvalidInput("config: document must be a JSON object");
  }
  reject_unknown_keys(j, {"schema_version", "seed", "params", "model", "ablation"}, "config");
  if (j.contains("schema_version") && j["schema_version"] != kSchemaVersion) {
    throw InvalidInput("config: unsupported schema_version");
  }

  RunConfig config;
  if (j.contains("seed")) {
    if (!j["seed"].is_number_integer()) throw InvalidInput("config: seed must be an integer");
    config.seed = j["seed"].get<std::uint64_t>();
  }

  if (j.contains("params")) {
    const json& p = j["params"];
    reject_unknown_keys(p, {"w_cross", "w_self", "p", "t_low", "t_high", "steps"},
                        "config.params");
    config.params.w_cross = get_number(p, "w_cross", config.params.w_cross);
    config.params.w_self = get_number(p, "w_self", config.params.w_self);
    config.params.p = get_number(p, "p", config.params.p);
    config.params.t_low = get_number(p, "t_low", config.params.t_low);
    config.params.t_high = get_number(p, "t_high", config.params.t_high);
    config.params.steps = get_int(p, "steps", config.params.steps);
  }

  if (j.contains("model")) {
    const json& m = j["model"];
    reject_unknown_keys(
        m, {"latent_side", "channels", "text_dim", "heads", "weight_seed", "blocks"},
        "config.model");
    config.model.latent_side = get_int(m, "latent_side", config.model.latent_side);
    config.model.channels = get_int(m, "channels", config.model.channels);
    config.model.text_dim = get_int(m, "text_dim", config.model.text_dim);
    config.model.heads = get_int(m, "heads", config.model.heads);
    if (m.contains("weight_seed")) {
      if (!m["weight_seed"].is_number_integer()) {
        throw InvalidInput("config: weight_seed must be an integer");
      }
      config.model.weight_seed = m["weight_seed"].get<std::uint64_t>();
    }
    if (m.contains("blocks")) {
      if (!m["blocks"].is_array()) throw InvalidInput("config: blocks must be an array");
      config.model.blocks.clear();
      for (const json& b : m["blocks"]) {
        reject_unknown_keys(b, {"resolution", "self_attention", "cross_attention"},
                            "config.model.blocks");
        BlockSpec block;
        block.resolution = get_int(b, "resolution", block.resolution);
        block.self_attention = get_bool(b, "self_attention", block.self_attention);
        block.cross_attention = get_bool(b, "cross_attention", block.cross_attention);
        config.model.blocks.push_back(block);
      }
    }
  }

  if (j.contains("ablation")) {
    const json& a = j["ablation"];
    reject_unknown_keys(
        a, {"disable_cross", "disable_self", "disable_value_range", "disable_area"},
        "config.ablation");
    config.ablation.disable_cross = get_bool(a, "disable_cross", false);
    config.ablation.disable_self = get_bool(a, "disable_self", false);
    config.ablation.disable_value_range = get_bool(a, "disable_value_range", false);
    config.ablation.disable_area = get_bool(a, "disable_area", false);
  }

  config.params.validate();
  config.model.validate();
  return config;
}

json config_to_json(const RunConfig& config) {
  json blocks = json::array();
  for (const BlockSpec& b : config.model.blocks) {
    blocks.push_back(json{{"resolution", b.resolution},
                          {"self_attention", b.self_attention},
                          {"cross_attention", b.cross_attention}});
  }
  return json{
      {"schema_version", kSchemaVersion},
      {"seed", config.seed},
      {"params",
       {{"w_cross", config.params.w_cross},
        {"w_self", config.params.w_self},
        {"p", config.params.p},
        {"t_low", config.params.t_low},
        {"t_high", config.params.t_high},
        {"steps", config.params.steps}}},
      {"model",
       {{"latent_side", config.model.latent_side},
        {"channels", config.model.channels},
        {"text_dim", config.model.text_dim},
        {"heads", config.model.heads},
        {"weight_seed", config.model.weight_seed},
        {"blocks", std::move(blocks)}}},
      {"ablation",
       {{"disable_cross", config.ablation.disable_cross},
        {"disable_self", config.ablation.disable_self},
        {"disable_value_range", config.ablation.disable_value_range},
        {"disable_area", config.ablation.disable_area}}}};
}

json record_to_json(const AttentionRecord& rec) {
  return json{{"step", rec.step},
              {"t", rec.t},
              {"layer", rec.layer},
              {"head", rec.head},
              {"kind", to_string(rec.kind)},
              {"resolution", rec.resolution},
              {"raw", matrix_to_json(rec.raw)},
              {"modulated", matrix_to_json(rec.modulated)}};
}

namespace {

json vec_to_json(const Vec& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out.push_back(std::isfinite(v(i)) ? json(v(i)) : json(nullptr));
  }
  return out;
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json stats_to_json(const AttentionStats& s) {
  return json{{"matched_mean", number_or_null(s.matched_mean)},
              {"unmatched_mean", number_or_null(s.unmatched_mean)},
              {"matched_max_mean", number_or_null(s.matched_max_mean)},
              {"unmatched_max_mean", number_or_null(s.unmatched_max_mean)},
              {"matched_count", s.matched_count},
              {"unmatched_count", s.unmatched_count}};
}

RunConfig config_of(const SampleRun& run) {
  RunConfig config;
  config.params = run.params;
  config.model = run.model;
  config.seed = run.seed;
  config.ablation = {run.options.disable_cross, run.options.disable_self,
                     run.options.disable_value_range, run.options.disable_area};
  return config;
}

json scores_to_json(const LayoutScore& score, const MatchedUnmatchedStats& stats) {
  return json{{"mean_concentration", number_or_null(score.mean_concentration)},
              {"mean_iou", number_or_null(score.mean_iou)},
              {"cross_gap",
               number_or_null(stats.cross.matched_mean - stats.cross.unmatched_mean)},
              {"self_gap", number_or_null(stats.self.matched_mean - stats.self.unmatched_mean)}};
}

}  // namespace

json run_report(const SampleRun& run, bool include_records) {
  const TokenSegmentMap& k = run.token_map;
  const bool has_window =
      std::count(run.step_in_window.begin(), run.step_in_window.end(), true) > 0;

  json steps = json::array();
  {
    std::map<int, ResolvedLayout> memo;
    for (std::size_t i = 0; i < run.step_timesteps.size(); ++i) {
      double sum = 0.0;
      int count = 0;
      for (const AttentionRecord& rec : run.records) {
        if (rec.step != static_cast<int>(i) || rec.kind != AttentionKind::Cross) continue;
        auto it = memo.find(rec.resolution);
        if (it == memo.end()) {
          it = memo.emplace(rec.resolution, resolve_layout(run.condition, rec.resolution)).first;
        }
        const double c = finite_mean(concentration(rec.modulated, it->second, k));
        if (std::isfinite(c)) {
          sum += c;
          ++count;
        }
      }
      steps.push_back(json{{"step", i},
                           {"timestep", run.step_timesteps[i]},
                           {"t", run.step_t[i]},
                           {"in_window", static_cast<bool>(run.step_in_window[i])},
                           {"mean_concentration",
                            count > 0 ? json(sum / count) : json(nullptr)}});
    }
  }

  json diagnostics;
  if (has_window && !run.records.empty()) {
    const MatchedUnmatchedStats stats = matched_unmatched_stats(run, run.condition, k);
    const LayoutScore score = layout_score(run, run.condition, k);
    const std::vector<int> labels =
        attention_segmentation(run, run.condition, k, score.resolution);
    diagnostics = json{
        {"attention_stats", {{"cross", stats_to_json(stats.cross)},
                             {"self", stats_to_json(stats.self)}}},
        {"concentration", {{"per_segment", vec_to_json(score.per_segment_concentration)},
                           {"mean", number_or_null(score.mean_concentration)}}},
        {"iou", {{"resolution", score.resolution},
                 {"per_segment", vec_to_json(score.iou_per_segment)},
                 {"mean", number_or_null(score.mean_iou)},
                 {"labels", labels}}},
        {"final_scores", scores_to_json(score, stats)}};
  } else {
    diagnostics = json{{"note", "no window steps or no attention records"}};
  }

  json report{{"schema_version", kSchemaVersion},
              {"config", config_to_json(config_of(run))},
              {"layout", layout_to_json(run.condition)},
              {"tokens", run.tokens},
              {"token_segments", k.k},
              {"training_steps", run.training_steps},
              {"steps", std::move(steps)},
              {"diagnostics", std::move(diagnostics)}};
  if (include_records) {
    json records = json::array();
    for (const AttentionRecord& rec : run.records) {
      records.push_back(record_to_json(rec));
    }
    report["records"] = std::move(records);
  }
  return report;
}

namespace {

template <typename Body>
int guarded(Body&& body) {
  try {
    return body();
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

RunConfig load_config(const std::string& config_path) {
  if (config_path.empty()) return RunConfig{};
  return config_from_json(parse_json(read_file(config_path), "config"));
}

SampleOptions options_from(const AblationFlags& flags) {
  SampleOptions opts;
  opts.disable_cross = flags.disable_cross;
  opts.disable_self = flags.disable_self;
  opts.disable_value_range = flags.disable_value_range;
  opts.disable_area = flags.disable_area;
  return opts;
}

void apply_overrides(RunConfig& config, const CliOverrides& overrides) {
  if (overrides.seed) config.seed = *overrides.seed;
  config.ablation.disable_cross |= overrides.disable_cross;
  config.ablation.disable_self |= overrides.disable_self;
  config.ablation.disable_value_range |= overrides.disable_value_range;
  config.ablation.disable_area |= overrides.disable_area;
}

}  // namespace

int cmd_sample(const std::string& layout_path, const std::string& config_path,
               const std::string& out_path, const CliOverrides& overrides) {
  return guarded([&] {
    const LayoutCondition cond = parse_layout(read_file(layout_path));
    RunConfig config = load_config(config_path);
    apply_overrides(config, overrides);
    const SampleRun run =
        sample(cond, config.params, config.model, config.seed, options_from(config.ablation));
    write_file(out_path, run_report(run, overrides.include_records).dump(2) + "\n");
    return 0;
  });
}

int cmd_modulate(const std::string& logits_path, const std::string& r_path,
                 const std::string& s_path, double lambda, double scale,
                 const std::string& out_path) {
  return guarded([&] {
    const Mat logits = matrix_from_json(parse_json(read_file(logits_path), "logits"));
    const Mat r = matrix_from_json(parse_json(read_file(r_path), "r"));
    const Mat s = matrix_from_json(parse_json(read_file(s_path), "s"));
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      if (r.data()[i] != 0.0 && r.data()[i] != 1.0) {
        throw InvalidInput("r: condition map entries must be 0 or 1");
      }
    }
    const ModulationResult res = modulate(logits, r, s, lambda, scale);
    const json out{{"schema_version", kSchemaVersion},
                   {"lambda", lambda},
                   {"scale", scale},
                   {"m", matrix_to_json(res.mats.m)},
                   {"a_prime", matrix_to_json(res.a_prime)}};
    write_file(out_path, out.dump(2) + "\n");
    return 0;
  });
}

int cmd_ablate(const std::string& layout_path, const std::string& config_path,
               const std::string& out_path, const CliOverrides& overrides) {
  return guarded([&] {
    const LayoutCondition cond = parse_layout(read_file(layout_path));
    RunConfig config = load_config(config_path);
    apply_overrides(config, overrides);

    struct Variant {
      const char* name;
      AblationFlags flags;
    };
    const Variant variants[] = {
        {"full", {}},
        {"no_cross_modulation", {.disable_cross = true}},
        {"no_self_modulation", {.disable_self = true}},
        {"no_value_range", {.disable_value_range = true}},
        {"no_area", {.disable_area = true}},
    };

    json rows = json::array();
    json deltas = json::object();
    LayoutScore full_score;
    MatchedUnmatchedStats full_stats;
    for (const Variant& v : variants) {
      const SampleRun run =
          sample(cond, config.params, config.model, config.seed, options_from(v.flags));
      const LayoutScore score = layout_score(run, cond, run.token_map);
      const MatchedUnmatchedStats stats = matched_unmatched_stats(run, cond, run.token_map);
      if (rows.empty()) {
        full_score = score;
        full_stats = stats;
      } else {
        deltas[v.name] = json{
            {"mean_concentration",
             number_or_null(full_score.mean_concentration - score.mean_concentration)},
            {"mean_iou", number_or_null(full_score.mean_iou - score.mean_iou)}};
      }
      rows.push_back(json{{"name", v.name},
                          {"flags",
                           {{"disable_cross", v.flags.disable_cross},
                            {"disable_self", v.flags.disable_self},
                            {"disable_value_range", v.flags.disable_value_range},
                            {"disable_area", v.flags.disable_area}}},
                          {"scores", scores_to_json(score, stats)}});
      std::cout << v.name << ": concentration="
                << (std::isfinite(score.mean_concentration)
                        ? std::to_string(score.mean_concentration)
                        : "n/a")
                << " iou=" << score.mean_iou << "\n";
    }

    const json report{{"schema_version", kSchemaVersion},
                      {"config", config_to_json(config)},
                      {"layout", layout_to_json(cond)},
                      {"rows", std::move(rows)},
                      {"deltas_vs_full", std::move(deltas)}};
    write_file(out_path, report.dump(2) + "\n");
    return 0;
  });
}

int cmd_selftest(bool print_trajectory) {
  if (print_trajectory) {
    const SampleRun run = sample(selftest_layout(), ModulationParams{}, selftest_model(),
                                 selftest_seed(), SampleOptions{});
    std::cout.precision(17);
    for (double v : trajectory_checksum(run)) {
      std::cout << v << "\n";
    }
    return 0;
  }
  const std::vector<SelfTestResult> results = run_selftest();
  int failures = 0;
  for (const SelfTestResult& r : results) {
    if (r.passed) {
      std::cout << "ok " << r.name << "\n";
    } else {
      ++failures;
      std::cout << "FAIL " << r.name << (r.detail.empty() ? "" : ": " + r.detail) << "\n";
    }
  }
  std::cout << (results.size() - failures) << "/" << results.size() << " checks passed\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace layoutdiff
