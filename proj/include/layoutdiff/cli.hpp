#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"
#include "layoutdiff/modulation.hpp"
#include "layoutdiff/sampler.hpp"

namespace layoutdiff {

/// The four ablation switches, one per removable component:
/// (a) cross-attention modulation, (b) self-attention modulation,
/// (c) value-range adaptation, (d) mask-area adaptation.
struct AblationFlags {
  bool disable_cross = false;
  bool disable_self = false;
  bool disable_value_range = false;
  bool disable_area = false;

  bool operator==(const AblationFlags&) const = default;
};

struct RunConfig {
  ModulationParams params;
  ToyModelSpec model;
  std::uint64_t seed = 0;
  AblationFlags ablation;

  bool operator==(const RunConfig&) const = default;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& config);

nlohmann::json record_to_json(const AttentionRecord& rec);

/// The full run report: config echo, layout echo, per-step diagnostics,
/// aggregate scores, optional attention records.
nlohmann::json run_report(const SampleRun& run, bool include_records = false);

/// Command-line overrides applied on top of the config file.
struct CliOverrides {
  std::optional<std::uint64_t> seed;
  bool disable_cross = false;
  bool disable_self = false;
  bool disable_value_range = false;
  bool disable_area = false;
  bool include_records = false;
};

/// Exit codes shared by every command: 0 success, 1 selftest failure,
/// 2 validation error, 3 I/O error.
int cmd_sample(const std::string& layout_path, const std::string& config_path,
               const std::string& out_path, const CliOverrides& overrides = {});

int cmd_modulate(const std::string& logits_path, const std::string& r_path,
                 const std::string& s_path, double lambda, double scale,
                 const std::string& out_path);

int cmd_ablate(const std::string& layout_path, const std::string& config_path,
               const std::string& out_path, const CliOverrides& overrides = {});

int cmd_selftest(bool print_trajectory = false);

}  // namespace layoutdiff
