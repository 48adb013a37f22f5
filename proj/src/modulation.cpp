#include "layoutdiff/modulation.hpp"

#include <cmath>
#include <string>

namespace layoutdiff {

void ModulationParams::validate() const {
  if (w_cross < 0.0 || w_self < 0.0) {
    throw InvalidInput("params: w_cross and w_self must be nonnegative");
  }
  if (!(p > 0.0)) {
    throw InvalidInput("params: p must be positive");
  }
  if (!(t_low >= 0.0 && t_low <= t_high && t_high <= 1.0)) {
    throw InvalidInput("params: need 0 <= t_low <= t_high <= 1");
  }
  if (steps < 1) {
    throw InvalidInput("params: steps must be at least 1");
  }
}

const char* to_string(AttentionKind kind) {
  return kind == AttentionKind::Cross ? "cross" : "self";
}

double compute_lambda(double t, double w, double p) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw InvalidInput("compute_lambda: t = " + std::to_string(t) + " outside [0, 1]");
  }
  return w * std::pow(t, p);
}

ConditionMap build_r_cross(const TokenSegmentMap& k, const ResolvedLayout& layout) {
  const Eigen::Index queries = static_cast<Eigen::Index>(layout.query_segment.size());
  const Eigen::Index tokens = static_cast<Eigen::Index>(k.k.size());
  Mat r = Mat::Zero(queries, tokens);
  for (Eigen::Index j = 0; j < tokens; ++j) {
    const int id = k.k[static_cast<std::size_t>(j)];
    if (id == 0) continue;
    if (id < 0 || id > layout.num_segments()) {
      throw InvalidInput("build_r_cross: token " + std::to_string(j) +
                         " references segment " + std::to_string(id) +
                         " absent from the layout");
    }
    r.col(j) = layout.masks[static_cast<std::size_t>(id - 1)];
  }
  return ConditionMap{std::move(r), AttentionKind::Cross};
}

ConditionMap build_r_self(const ResolvedLayout& layout, bool background_as_segment) {
  const Eigen::Index n = static_cast<Eigen::Index>(layout.query_segment.size());
  Mat r = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int oi = layout.query_segment[static_cast<std::size_t>(i)];
    if (oi == 0 && !background_as_segment) continue;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (layout.query_segment[static_cast<std::size_t>(j)] == oi) {
        r(i, j) = 1.0;
      }
    }
  }
  return ConditionMap{std::move(r), AttentionKind::Self};
}

ValueRange value_range_matrices(const Mat& logits) {
  if (logits.cols() < 1) {
    throw InvalidInput("value_range_matrices: matrix has no columns");
  }
  const RowExtrema ex = row_extrema(logits);
  ValueRange vr;
  vr.m_pos = ((-logits).colwise() + ex.max).eval();
  vr.m_neg = (logits.colwise() - ex.min).eval();
  return vr;
}

Mat area_matrix(const ResolvedLayout& layout, Eigen::Index keys) {
  if (keys < 1) {
    throw InvalidInput("area_matrix: keys must be at least 1");
  }
  const Eigen::Index queries = static_cast<Eigen::Index>(layout.query_segment.size());
  Mat s(queries, keys);
  for (Eigen::Index i = 0; i < queries; ++i) {
    const int id = layout.query_segment[static_cast<std::size_t>(i)];
    s.row(i).setConstant(layout.areas[static_cast<std::size_t>(id)]);
  }
  return s;
}

namespace {

void check_same_shape(const Mat& a, const Mat& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidInput(std::string("modulate: ") + what + " shape " +
                       std::to_string(b.rows()) + "x" + std::to_string(b.cols()) +
                       " does not match logits " + std::to_string(a.rows()) + "x" +
                       std::to_string(a.cols()));
  }
}

}  // namespace

ModulationMatrices assemble_modulation(const Mat& logits, const Mat& r, const Mat& s,
                                       double lambda_t, const ModulateOptions& opts) {
  check_same_shape(logits, r, "condition map");
  check_same_shape(logits, s, "area matrix");
  if (lambda_t < 0.0) {
    throw InvalidInput("modulate: lambda_t must be nonnegative");
  }

  ModulationMatrices mm;
  if (opts.constant_value_range) {
    mm.m_pos = Mat::Ones(logits.rows(), logits.cols());
    mm.m_neg = Mat::Ones(logits.rows(), logits.cols());
  } else {
    ValueRange vr = value_range_matrices(logits);
    mm.m_pos = std::move(vr.m_pos);
    mm.m_neg = std::move(vr.m_neg);
  }
  mm.s = opts.zero_area ? Mat::Zero(logits.rows(), logits.cols()).eval() : s;
  mm.lambda_t = lambda_t;

  const auto damp = (1.0 - mm.s.array());
  mm.m = (lambda_t * r.array() * mm.m_pos.array() * damp -
          lambda_t * (1.0 - r.array()) * mm.m_neg.array() * damp)
             .matrix();
  return mm;
}

ModulationResult modulate(const Mat& logits, const Mat& r, const Mat& s, double lambda_t,
                          double scale, const ModulateOptions& opts) {
  ModulationMatrices mm = assemble_modulation(logits, r, s, lambda_t, opts);
  ModulationResult out;
  out.a_prime = row_softmax(logits + mm.m, scale);
  out.mats = std::move(mm);
  return out;
}

ModulationResult modulate(const Mat& logits, const ConditionMap& r, const Mat& s,
                          double lambda_t, double scale, const ModulateOptions& opts) {
  return modulate(logits, r.r, s, lambda_t, scale, opts);
}

}  // namespace layoutdiff
