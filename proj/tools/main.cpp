#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "layoutdiff/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"layout-conditioned attention modulation with a deterministic toy sampler"};
  app.require_subcommand(1);

  std::string layout_path, config_path, out_path;
  std::optional<std::uint64_t> seed;
  layoutdiff::CliOverrides overrides;

  auto add_run_options = [&](CLI::App* cmd) {
    cmd->add_option("--layout", layout_path, "layout condition JSON")->required();
    cmd->add_option("--config", config_path, "run config JSON (defaults when omitted)");
    cmd->add_option("--out", out_path, "output report path")->required();
    cmd->add_option("--seed", seed, "override the config seed");
    cmd->add_flag("--disable-cross", overrides.disable_cross,
                  "skip modulation at cross-attention layers");
    cmd->add_flag("--disable-self", overrides.disable_self,
                  "skip modulation at self-attention layers");
    cmd->add_flag("--disable-value-range", overrides.disable_value_range,
                  "replace the value-range matrices with all-ones");
    cmd->add_flag("--disable-area", overrides.disable_area,
                  "replace the area matrix with zeros");
  };

  CLI::App* cmd_sample = app.add_subcommand("sample", "run the sampler and write a run report");
  add_run_options(cmd_sample);
  cmd_sample->add_flag("--records", overrides.include_records,
                       "embed the per-layer attention records in the report");

  std::string logits_path, r_path, s_path;
  double lambda = 0.0, scale = 1.0;
  CLI::App* cmd_modulate =
      app.add_subcommand("modulate", "modulate a single attention map from matrix files");
  cmd_modulate->add_option("--logits", logits_path, "raw logits matrix JSON")->required();
  cmd_modulate->add_option("--r", r_path, "binary condition map matrix JSON")->required();
  cmd_modulate->add_option("--s", s_path, "area matrix JSON")->required();
  cmd_modulate->add_option("--lambda", lambda, "modulation strength")->required();
  cmd_modulate->add_option("--scale", scale, "softmax scale (sqrt of head width)")
      ->capture_default_str();
  cmd_modulate->add_option("--out", out_path, "output path")->required();

  CLI::App* cmd_ablate =
      app.add_subcommand("ablate", "run the full method plus single-component ablations");
  add_run_options(cmd_ablate);

  bool print_trajectory = false;
  CLI::App* cmd_selftest =
      app.add_subcommand("selftest", "verify bundled golden vectors and quick properties");
  cmd_selftest->add_flag("--print-trajectory", print_trajectory,
                         "print the current trajectory checksum and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  overrides.seed = seed;
  if (cmd_sample->parsed()) {
    return layoutdiff::cmd_sample(layout_path, config_path, out_path, overrides);
  }
  if (cmd_modulate->parsed()) {
    return layoutdiff::cmd_modulate(logits_path, r_path, s_path, lambda, scale, out_path);
  }
  if (cmd_ablate->parsed()) {
    return layoutdiff::cmd_ablate(layout_path, config_path, out_path, overrides);
  }
  if (cmd_selftest->parsed()) {
    return layoutdiff::cmd_selftest(print_trajectory);
  }
  std::cerr << "error: no subcommand\n";
  return 2;
}
