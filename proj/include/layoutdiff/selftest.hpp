#pragma once

#include <string>
#include <vector>

#include "layoutdiff/kernel.hpp"
#include "layoutdiff/layout.hpp"
#include "layoutdiff/sampler.hpp"

namespace layoutdiff {

struct SelfTestResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Runs the bundled golden vectors (splitmix64/FNV-1a reference outputs, the
/// worked 1x2 modulation example, a fixed-seed 8x8 trajectory checksum) and a
/// quick property suite.
std::vector<SelfTestResult> run_selftest();

/// Random layout on a base_side x base_side grid (base_side a multiple of 4).
/// Every segment fully owns one dedicated quarter-resolution block, so it
/// survives pooling down to h = 4, and may grow ragged extensions that
/// exercise the multi-claim rules. Captions are built from a word bank so the
/// phrase alignment always succeeds.
LayoutCondition random_layout_condition(SplitMix64& rng, int base_side = 16,
                                        int max_segments = 4);

/// The fixed 8x8 layout, model, and seed behind the trajectory golden.
LayoutCondition selftest_layout();
ToyModelSpec selftest_model();
std::uint64_t selftest_seed();

/// Per-latent mean absolute value along the trajectory (fixed summation
/// order), z_T first.
std::vector<double> trajectory_checksum(const SampleRun& run);

/// The frozen checksum for the selftest configuration.
const std::vector<double>& trajectory_golden();

}  // namespace layoutdiff
