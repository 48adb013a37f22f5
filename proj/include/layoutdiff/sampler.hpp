#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "layoutdiff/kernel.hpp"
#include "layoutdiff/layout.hpp"
#include "layoutdiff/modulation.hpp"

namespace layoutdiff {

/// One attention stage of the toy denoiser: operate at `resolution`
/// (grid pooled down when it is below the latent side).
struct BlockSpec {
  int resolution = 16;
  bool self_attention = true;
  bool cross_attention = true;

  bool operator==(const BlockSpec&) const = default;
};

/// Desk-scale stand-in for a pre-trained denoiser. Weights come from
/// splitmix64 streams keyed by (weight_seed, layer index, tensor role), so a
/// spec value pins the whole network.
struct ToyModelSpec {
  int latent_side = 16;
  int channels = 8;
  int text_dim = 8;
  std::vector<BlockSpec> blocks = {{16, true, true}, {8, true, true}};
  int heads = 1;
  std::uint64_t weight_seed = 0x5EED;

  void validate() const;
  int num_attention_layers() const;

  bool operator==(const ToyModelSpec&) const = default;
};

/// Linear-beta noise schedule with cumulative products, plus the decimated
/// timestep grid used by the deterministic sampler.
struct DiffusionSchedule {
  int training_steps = 0;
  Vec betas;       // 1e-4 ramping to 0.02
  Vec alpha_bars;  // strictly decreasing, in (0, 1)
  int ddim_steps = 0;

  static DiffusionSchedule linear(int training_steps = 1000, int ddim_steps = 50);

  /// alpha_bar at timestep t; t = -1 denotes the fully denoised endpoint 1.
  double alpha_bar(int t) const;

  /// Descending integer timesteps visited by the sampler.
  std::vector<int> timesteps() const;
};

/// One attention map observed during a run: the plain softmax map and the
/// map actually used after the hook (identical outside the window).
struct AttentionRecord {
  int step = 0;
  double t = 0.0;
  int layer = 0;
  int head = 0;
  AttentionKind kind = AttentionKind::Cross;
  int resolution = 0;
  Mat raw;
  Mat modulated;
};

struct LayerContext {
  AttentionKind kind = AttentionKind::Cross;
  int layer = 0;
  int head = 0;
  int resolution = 0;
  double t = 0.0;
};

/// Given the raw logits and scale, returns the attention map the layer should
/// use. An empty function means plain softmax.
using AttentionHook = std::function<Mat(const Mat& logits, double scale, const LayerContext&)>;

/// Mean-pools a (side^2 x channels) token grid down to (to_side^2 x channels).
Mat pool_mean(const Mat& x, int from_side, int to_side);

/// Nearest upsample: every coarse row is replicated over its patch.
Mat upsample_repeat(const Mat& x, int from_side, int to_side);

/// Deterministic text encoder stand-in: row j is driven by a splitmix64
/// stream seeded from fnv1a64(token_j) folded with the position j, each
/// component mapped to [-1, 1).
Mat encode_text(const TokenList& tokens, int text_dim);

/// Replaces the rows of segment spans with separately encoded per-segment
/// rows; unassigned rows pass through. Throws InvalidInput when a segment's
/// row count does not match its span length.
Mat splice_segment_features(const Mat& full, const std::vector<Mat>& per_segment,
                            const TokenSegmentMap& k);

/// DDIM update with explicit cumulative noise levels (eta = 0):
///   x0 = (z - sqrt(1 - ab_t) * eps) / sqrt(ab_t)
///   z' = sqrt(ab_prev) * x0 + sqrt(1 - ab_prev) * eps
Mat ddim_update(const Mat& z, const Mat& eps, double alpha_bar_t, double alpha_bar_prev);

/// Schedule-indexed wrapper; t_prev = -1 steps to the clean endpoint.
Mat ddim_step(const Mat& z, const Mat& eps, int t, int t_prev, const DiffusionSchedule& sched);

/// The toy denoiser: per block, pool the latent grid to the block resolution,
/// run self- then cross-attention with residual connections (logits pass
/// through the hook before value aggregation), then a final linear head emits
/// the noise prediction.
class ToyDenoiser {
 public:
  explicit ToyDenoiser(const ToyModelSpec& spec);

  /// Forward pass; appends one AttentionRecord per (layer, head) when
  /// `records` is given. `step` only labels the records.
  Mat predict(const Mat& z, const Mat& text_features, double t,
              const AttentionHook& hook = {}, std::vector<AttentionRecord>* records = nullptr,
              int step = 0) const;

  const ToyModelSpec& spec() const { return spec_; }

 private:
  struct LayerWeights {
    Mat wq, wk, wv;
  };

  Mat attend(const Mat& queries_src, const Mat& context, const LayerWeights& w,
             AttentionKind kind, int layer, int resolution, double t,
             const AttentionHook& hook, std::vector<AttentionRecord>* records,
             int step) const;

  ToyModelSpec spec_;
  std::vector<LayerWeights> layers_;
  Mat head_;
};

/// Runtime switches for a sampling run. The disable_* flags mirror the
/// ablation components: (a) cross modulation, (b) self modulation, (c)
/// value-range adaptation, (d) area adaptation. modulation_enabled = false
/// short-circuits the hook entirely (plain softmax everywhere).
struct SampleOptions {
  bool disable_cross = false;
  bool disable_self = false;
  bool disable_value_range = false;
  bool disable_area = false;
  bool modulation_enabled = true;
  bool background_as_segment_self = true;
  bool record_attention = true;

  bool operator==(const SampleOptions&) const = default;
};

/// Everything a run produced, with enough of the configuration to replay it.
struct SampleRun {
  LayoutCondition condition;
  ModulationParams params;
  ToyModelSpec model;
  SampleOptions options;
  std::uint64_t seed = 0;
  int training_steps = 0;

  TokenList tokens;
  TokenSegmentMap token_map;

  std::vector<int> step_timesteps;   // descending
  std::vector<double> step_t;        // timestep / training_steps
  std::vector<bool> step_in_window;
  std::vector<Mat> latents;          // latents[0] = z_T, one entry per step after
  std::vector<AttentionRecord> records;
};

/// Runs the full pipeline: tokenize and align the caption, splice per-segment
/// text features, resolve the layout at every block resolution, draw z_T from
/// the seeded stream, then walk the DDIM grid applying the modulation hook
/// inside the [t_low, t_high] window. Identical inputs give bit-identical
/// runs.
SampleRun sample(const LayoutCondition& cond, const ModulationParams& params,
                 const ToyModelSpec& spec, std::uint64_t seed, const SampleOptions& opts = {});

}  // namespace layoutdiff
