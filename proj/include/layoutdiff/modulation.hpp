#pragma once

#include "layoutdiff/kernel.hpp"
#include "layoutdiff/layout.hpp"

namespace layoutdiff {

/// Modulation hyperparameters. Defaults: w_cross=1, w_self=0.3, p=5, window
/// [0.7, 1.0] in normalized time, 50 denoising steps.
struct ModulationParams {
  double w_cross = 1.0;
  double w_self = 0.3;
  double p = 5.0;
  double t_low = 0.7;
  double t_high = 1.0;
  int steps = 50;

  void validate() const;
  bool in_window(double t) const { return t >= t_low && t <= t_high; }

  bool operator==(const ModulationParams&) const = default;
};

enum class AttentionKind { Cross, Self };

const char* to_string(AttentionKind kind);

/// Binary query-key condition map: 1 marks pairs whose score is raised,
/// 0 pairs whose score is lowered.
struct ConditionMap {
  Mat r;
  AttentionKind kind = AttentionKind::Cross;
};

/// Modulation strength at normalized timestep t: w * t^p. Strongest at the
/// start of denoising (t near 1), off at t=0. Throws InvalidInput when t is
/// outside [0, 1].
double compute_lambda(double t, double w, double p);

/// Cross-attention condition map (|queries| x |tokens|): column j is the
/// resolved mask of segment k[j], or all zeros when token j is unassigned.
/// Background ownership never populates columns. Throws InvalidInput when k
/// references a segment the layout does not have.
ConditionMap build_r_cross(const TokenSegmentMap& k, const ResolvedLayout& layout);

/// Self-attention condition map (h^2 x h^2, symmetric): entry (i, j) is 1
/// iff cells i and j share an owner segment. With background_as_segment the
/// background cells count as one segment of their own; without it only
/// explicit segments connect cells.
ConditionMap build_r_self(const ResolvedLayout& layout, bool background_as_segment = true);

struct ValueRange {
  Mat m_pos;  // row max minus logit, >= 0
  Mat m_neg;  // logit minus row min, >= 0
};

/// Distance of every raw logit to its row's max (m_pos) and min (m_neg),
/// broadcast along the key axis. Keeping adjustments proportional to these
/// distances confines modulated logits to the original per-row value range.
ValueRange value_range_matrices(const Mat& logits);

/// Row i holds (replicated across `keys` columns) the area fraction of the
/// segment owning query cell i; background queries get the background area.
Mat area_matrix(const ResolvedLayout& layout, Eigen::Index keys);

/// Ablation switches: constant_value_range replaces m_pos/m_neg with all-ones
/// (a constant bonus that keeps the direction but drops the adaptive
/// magnitude); zero_area replaces S with zeros.
struct ModulateOptions {
  bool constant_value_range = false;
  bool zero_area = false;
};

/// The assembled additive term and its factors:
///   m = lambda * r . m_pos . (1 - s)  -  lambda * (1 - r) . m_neg . (1 - s)
struct ModulationMatrices {
  Mat m_pos;
  Mat m_neg;
  Mat s;
  double lambda_t = 0.0;
  Mat m;
};

ModulationMatrices assemble_modulation(const Mat& logits, const Mat& r, const Mat& s,
                                       double lambda_t, const ModulateOptions& opts = {});

struct ModulationResult {
  Mat a_prime;  // row_softmax(logits + m, scale)
  ModulationMatrices mats;
};

/// Applies the modulated attention map: a_prime = row_softmax(logits + m,
/// scale) with m assembled from the value-range matrices of the raw logits.
/// lambda_t = 0 reproduces row_softmax(logits, scale) exactly on the same
/// code path. Throws InvalidInput on shape mismatches, negative lambda_t, or
/// nonpositive scale.
ModulationResult modulate(const Mat& logits, const Mat& r, const Mat& s, double lambda_t,
                          double scale, const ModulateOptions& opts = {});

ModulationResult modulate(const Mat& logits, const ConditionMap& r, const Mat& s,
                          double lambda_t, double scale, const ModulateOptions& opts = {});

}  // namespace layoutdiff
