#include "layoutdiff/diagnostics.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <string>

namespace layoutdiff {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const ResolvedLayout& resolved_at(std::map<int, ResolvedLayout>& memo,
                                  const LayoutCondition& cond, int resolution) {
  auto it = memo.find(resolution);
  if (it == memo.end()) {
    it = memo.emplace(resolution, resolve_layout(cond, resolution)).first;
  }
  return it->second;
}

bool pair_matched(AttentionKind kind, int owner_i, int key_j, const std::vector<int>& owners,
                  const TokenSegmentMap& k) {
  if (kind == AttentionKind::Cross) {
    return owner_i >= 1 && k.k[static_cast<std::size_t>(key_j)] == owner_i;
  }
  return owner_i >= 1 && owners[static_cast<std::size_t>(key_j)] == owner_i;
}

}  // namespace

void StatsAccumulator::add(const Mat& attn, AttentionKind kind, const ResolvedLayout& layout,
                           const TokenSegmentMap& k) {
  const std::vector<int>& owners = layout.query_segment;
  if (attn.rows() != static_cast<Eigen::Index>(owners.size())) {
    throw InvalidInput("stats: attention rows do not match the layout");
  }
  if (kind == AttentionKind::Cross &&
      attn.cols() != static_cast<Eigen::Index>(k.k.size())) {
    throw InvalidInput("stats: attention cols do not match the token map");
  }
  for (Eigen::Index i = 0; i < attn.rows(); ++i) {
    const int owner = owners[static_cast<std::size_t>(i)];
    double m_max = -1.0, u_max = -1.0;
    for (Eigen::Index j = 0; j < attn.cols(); ++j) {
      const double v = attn(i, j);
      if (pair_matched(kind, owner, static_cast<int>(j), owners, k)) {
        matched_sum_ += v;
        ++matched_n_;
        if (v > m_max) m_max = v;
      } else {
        unmatched_sum_ += v;
        ++unmatched_n_;
        if (v > u_max) u_max = v;
      }
    }
    if (m_max >= 0.0) {
      matched_max_sum_ += m_max;
      ++matched_rows_;
    }
    if (u_max >= 0.0) {
      unmatched_max_sum_ += u_max;
      ++unmatched_rows_;
    }
  }
}

AttentionStats StatsAccumulator::finalize() const {
  AttentionStats s;
  s.matched_count = matched_n_;
  s.unmatched_count = unmatched_n_;
  s.matched_mean = matched_n_ > 0 ? matched_sum_ / matched_n_ : kNaN;
  s.unmatched_mean = unmatched_n_ > 0 ? unmatched_sum_ / unmatched_n_ : kNaN;
  s.matched_max_mean = matched_rows_ > 0 ? matched_max_sum_ / matched_rows_ : kNaN;
  s.unmatched_max_mean = unmatched_rows_ > 0 ? unmatched_max_sum_ / unmatched_rows_ : kNaN;
  return s;
}

MatchedUnmatchedStats matched_unmatched_stats(const SampleRun& run, const LayoutCondition& cond,
                                              const TokenSegmentMap& k) {
  std::map<int, ResolvedLayout> memo;
  StatsAccumulator cross, self;
  long long n_cross = 0, n_self = 0;
  for (const AttentionRecord& rec : run.records) {
    if (!run.step_in_window[static_cast<std::size_t>(rec.step)]) continue;
    const ResolvedLayout& layout = resolved_at(memo, cond, rec.resolution);
    if (rec.kind == AttentionKind::Cross) {
      cross.add(rec.modulated, rec.kind, layout, k);
      ++n_cross;
    } else {
      self.add(rec.modulated, rec.kind, layout, k);
      ++n_self;
    }
  }
  if (n_cross == 0 || n_self == 0) {
    throw InvalidInput("stats: run has no window-step records of kind " +
                       std::string(n_cross == 0 ? "cross" : "self"));
  }
  return {cross.finalize(), self.finalize()};
}

Vec matched_mass_in_mask(const Mat& attn, const ResolvedLayout& layout,
                         const TokenSegmentMap& k) {
  const int n_seg = layout.num_segments();
  Vec mass = Vec::Zero(n_seg);
  for (Eigen::Index i = 0; i < attn.rows(); ++i) {
    const int owner = layout.query_segment[static_cast<std::size_t>(i)];
    if (owner == 0) continue;
    double acc = 0.0;
    for (Eigen::Index j = 0; j < attn.cols(); ++j) {
      if (k.k[static_cast<std::size_t>(j)] == owner) acc += attn(i, j);
    }
    mass(owner - 1) += acc;
  }
  return mass;
}

Vec concentration(const Mat& attn, const ResolvedLayout& layout, const TokenSegmentMap& k) {
  const int n_seg = layout.num_segments();
  if (attn.rows() != static_cast<Eigen::Index>(layout.query_segment.size()) ||
      attn.cols() != static_cast<Eigen::Index>(k.k.size())) {
    throw InvalidInput("concentration: attention shape does not match layout/tokens");
  }
  Vec inside = Vec::Zero(n_seg);
  Vec total = Vec::Zero(n_seg);
  for (Eigen::Index i = 0; i < attn.rows(); ++i) {
    const int owner = layout.query_segment[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < attn.cols(); ++j) {
      const int id = k.k[static_cast<std::size_t>(j)];
      if (id == 0) continue;
      total(id - 1) += attn(i, j);
      if (owner == id) inside(id - 1) += attn(i, j);
    }
  }
  Vec c(n_seg);
  for (int n = 0; n < n_seg; ++n) {
    c(n) = total(n) > 0.0 ? inside(n) / total(n) : kNaN;
  }
  return c;
}

double finite_mean(const Vec& v) {
  double sum = 0.0;
  int n = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(v(i))) {
      sum += v(i);
      ++n;
    }
  }
  return n > 0 ? sum / n : kNaN;
}

Vec run_concentration(const SampleRun& run, const LayoutCondition& cond,
                      const TokenSegmentMap& k) {
  std::map<int, ResolvedLayout> memo;
  const int n_seg = static_cast<int>(cond.segments.size());
  Vec sum = Vec::Zero(n_seg);
  Eigen::VectorXi count = Eigen::VectorXi::Zero(n_seg);
  for (const AttentionRecord& rec : run.records) {
    if (rec.kind != AttentionKind::Cross) continue;
    if (!run.step_in_window[static_cast<std::size_t>(rec.step)]) continue;
    const Vec c = concentration(rec.modulated, resolved_at(memo, cond, rec.resolution), k);
    for (int n = 0; n < n_seg; ++n) {
      if (std::isfinite(c(n))) {
        sum(n) += c(n);
        count(n) += 1;
      }
    }
  }
  Vec mean(n_seg);
  for (int n = 0; n < n_seg; ++n) {
    mean(n) = count(n) > 0 ? sum(n) / count(n) : kNaN;
  }
  return mean;
}

std::vector<int> attention_segmentation(const SampleRun& run, const LayoutCondition& cond,
                                        const TokenSegmentMap& k, int resolution) {
  const int cells = resolution * resolution;
  const int n_seg = static_cast<int>(cond.segments.size());
  const Eigen::Index keys = static_cast<Eigen::Index>(k.k.size());

  Vec span = Vec::Zero(n_seg);
  for (int id : k.k) {
    if (id >= 1) span(id - 1) += 1.0;
  }

  Mat score = Mat::Zero(cells, n_seg);
  int n_records = 0;
  for (const AttentionRecord& rec : run.records) {
    if (rec.kind != AttentionKind::Cross || rec.resolution != resolution) continue;
    if (!run.step_in_window[static_cast<std::size_t>(rec.step)]) continue;
    ++n_records;
    for (Eigen::Index i = 0; i < rec.modulated.rows(); ++i) {
      for (Eigen::Index j = 0; j < keys; ++j) {
        const int id = k.k[static_cast<std::size_t>(j)];
        if (id >= 1) score(i, id - 1) += rec.modulated(i, j);
      }
    }
  }
  if (n_records == 0) {
    throw InvalidInput("segmentation: no window-step cross records at resolution " +
                       std::to_string(resolution));
  }
  score /= static_cast<double>(n_records);

  std::vector<int> labels(static_cast<std::size_t>(cells), 0);
  for (int i = 0; i < cells; ++i) {
    int best = 0;
    for (int n = 1; n < n_seg; ++n) {
      if (score(i, n) > score(i, best)) best = n;
    }
    const double baseline = span(best) / static_cast<double>(keys);
    // At or below the uniform baseline the attention carries no layout signal.
    if (score(i, best) > baseline * (1.0 + 1e-12) + 1e-12) {
      labels[static_cast<std::size_t>(i)] = best + 1;
    }
  }
  return labels;
}

double binary_iou(const std::vector<int>& a, const std::vector<int>& b, int id) {
  if (a.size() != b.size()) {
    throw InvalidInput("iou: label grids differ in size");
  }
  long long inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool in_a = a[i] == id;
    const bool in_b = b[i] == id;
    if (in_a && in_b) ++inter;
    if (in_a || in_b) ++uni;
  }
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

IoUScore iou(const std::vector<int>& predicted, const ResolvedLayout& condition) {
  if (predicted.size() != condition.query_segment.size()) {
    throw InvalidInput("iou: prediction resolution does not match the condition");
  }
  const int n_seg = condition.num_segments();
  IoUScore out;
  out.per_segment.resize(n_seg);
  out.empty_union.assign(static_cast<std::size_t>(n_seg), false);
  double sum = 0.0;
  for (int n = 0; n < n_seg; ++n) {
    long long uni = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
      if (predicted[i] == n + 1 || condition.query_segment[i] == n + 1) ++uni;
    }
    if (uni == 0) out.empty_union[static_cast<std::size_t>(n)] = true;
    out.per_segment(n) = binary_iou(predicted, condition.query_segment, n + 1);
    sum += out.per_segment(n);
  }
  out.mean = n_seg > 0 ? sum / n_seg : 0.0;
  return out;
}

namespace {

int finest_cross_resolution(const SampleRun& run) {
  int best = 0;
  for (const AttentionRecord& rec : run.records) {
    if (rec.kind == AttentionKind::Cross && rec.resolution > best) best = rec.resolution;
  }
  if (best == 0) {
    throw InvalidInput("layout_score: run has no cross-attention records");
  }
  return best;
}

}  // namespace

LayoutScore layout_score(const SampleRun& run, const LayoutCondition& cond,
                         const TokenSegmentMap& k) {
  LayoutScore score;
  score.resolution = finest_cross_resolution(run);
  score.per_segment_concentration = run_concentration(run, cond, k);
  score.mean_concentration = finite_mean(score.per_segment_concentration);
  const ResolvedLayout resolved = resolve_layout(cond, score.resolution);
  const std::vector<int> labels = attention_segmentation(run, cond, k, score.resolution);
  IoUScore i = iou(labels, resolved);
  score.iou_per_segment = std::move(i.per_segment);
  score.mean_iou = i.mean;
  return score;
}

namespace {

MetricComparison compare_metric(double a, double b) {
  MetricComparison m;
  m.a = a;
  m.b = b;
  m.delta = a - b;
  m.winner = m.delta > 0.0 ? 1 : (m.delta < 0.0 ? -1 : 0);
  return m;
}

}  // namespace

RunComparison compare_runs(const SampleRun& a, const SampleRun& b, const LayoutCondition& cond,
                           const TokenSegmentMap& k) {
  if (a.seed != b.seed) {
    throw InvalidInput("compare_runs: seeds differ");
  }
  if (!(a.condition == b.condition) || !(a.condition == cond)) {
    throw InvalidInput("compare_runs: conditions differ");
  }
  const LayoutScore sa = layout_score(a, cond, k);
  const LayoutScore sb = layout_score(b, cond, k);
  const MatchedUnmatchedStats ma = matched_unmatched_stats(a, cond, k);
  const MatchedUnmatchedStats mb = matched_unmatched_stats(b, cond, k);

  RunComparison cmp;
  cmp.mean_concentration = compare_metric(sa.mean_concentration, sb.mean_concentration);
  cmp.mean_iou = compare_metric(sa.mean_iou, sb.mean_iou);
  cmp.cross_gap = compare_metric(ma.cross.matched_mean - ma.cross.unmatched_mean,
                                 mb.cross.matched_mean - mb.cross.unmatched_mean);
  cmp.self_gap = compare_metric(ma.self.matched_mean - ma.self.unmatched_mean,
                                mb.self.matched_mean - mb.self.unmatched_mean);
  return cmp;
}

}  // namespace layoutdiff
