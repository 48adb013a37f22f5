#pragma once

#include <vector>

#include "layoutdiff/layout.hpp"
#include "layoutdiff/modulation.hpp"
#include "layoutdiff/sampler.hpp"

namespace layoutdiff {

/// Matched/unmatched attention score statistics for one layer kind. A cross
/// pair (query i, key j) is matched when token j belongs to the segment that
/// owns cell i; a self pair is matched when both cells share an owner
/// segment. Means are NaN when a class is empty.
struct AttentionStats {
  double matched_mean = 0.0;
  double unmatched_mean = 0.0;
  double matched_max_mean = 0.0;    // per-query max over matched keys, averaged
  double unmatched_max_mean = 0.0;  // per-query max over unmatched keys, averaged
  long long matched_count = 0;
  long long unmatched_count = 0;
};

struct MatchedUnmatchedStats {
  AttentionStats cross;
  AttentionStats self;
};

/// Accumulates one attention map into matched/unmatched statistics.
class StatsAccumulator {
 public:
  void add(const Mat& attn, AttentionKind kind, const ResolvedLayout& layout,
           const TokenSegmentMap& k);
  AttentionStats finalize() const;

 private:
  double matched_sum_ = 0.0, unmatched_sum_ = 0.0;
  double matched_max_sum_ = 0.0, unmatched_max_sum_ = 0.0;
  long long matched_n_ = 0, unmatched_n_ = 0;
  long long matched_rows_ = 0, unmatched_rows_ = 0;
};

/// Aggregates the modulated maps of all window-step records by layer kind.
/// Throws InvalidInput when the run has no window-step records of some kind.
MatchedUnmatchedStats matched_unmatched_stats(const SampleRun& run, const LayoutCondition& cond,
                                              const TokenSegmentMap& k);

/// Per-segment in-mask matched attention mass: sum of attn(i, j) over cells i
/// owned by the segment and tokens j assigned to it.
Vec matched_mass_in_mask(const Mat& attn, const ResolvedLayout& layout,
                         const TokenSegmentMap& k);

/// Per-segment concentration: the fraction of the total attention mass on a
/// segment's tokens that lands inside the segment's mask. Entries are NaN for
/// segments with no tokens or no mass.
Vec concentration(const Mat& attn, const ResolvedLayout& layout, const TokenSegmentMap& k);

/// Mean of the finite entries of v; NaN when none are finite.
double finite_mean(const Vec& v);

/// Run-level concentration: per segment, the mean over window-step cross
/// records, then averaged over segments.
Vec run_concentration(const SampleRun& run, const LayoutCondition& cond,
                      const TokenSegmentMap& k);

/// Labels every query cell of the h x h grid with the segment receiving the
/// most attention mass (mean over window-step cross records at that
/// resolution), or 0 when the winner does not beat the uniform baseline
/// span/keys.
std::vector<int> attention_segmentation(const SampleRun& run, const LayoutCondition& cond,
                                        const TokenSegmentMap& k, int resolution);

/// Intersection-over-union of one label id between two label grids.
double binary_iou(const std::vector<int>& a, const std::vector<int>& b, int id);

struct IoUScore {
  Vec per_segment;
  double mean = 0.0;
  std::vector<bool> empty_union;  // flagged segments where IoU fell back to 0
};

/// Per-segment IoU of a predicted label grid against the resolved condition.
IoUScore iou(const std::vector<int>& predicted, const ResolvedLayout& condition);

struct LayoutScore {
  Vec per_segment_concentration;
  double mean_concentration = 0.0;
  Vec iou_per_segment;
  double mean_iou = 0.0;
  int resolution = 0;
};

/// Concentration plus attention-derived IoU at the finest cross-attention
/// resolution of the run.
LayoutScore layout_score(const SampleRun& run, const LayoutCondition& cond,
                         const TokenSegmentMap& k);

struct MetricComparison {
  double a = 0.0;
  double b = 0.0;
  double delta = 0.0;  // a - b
  int winner = 0;      // +1 first run, -1 second, 0 tie
};

struct RunComparison {
  MetricComparison mean_concentration;
  MetricComparison mean_iou;
  MetricComparison cross_gap;  // matched_mean - unmatched_mean, cross layers
  MetricComparison self_gap;
};

/// Pairs two runs of the same condition and seed. Throws InvalidInput when
/// the runs disagree on either.
RunComparison compare_runs(const SampleRun& a, const SampleRun& b, const LayoutCondition& cond,
                           const TokenSegmentMap& k);

}  // namespace layoutdiff
