#include "layoutdiff/kernel.hpp"

#include <cmath>
#include <string>

namespace layoutdiff {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

[[noreturn]] void throw_non_finite(const char* op, Eigen::Index row, Eigen::Index col) {
  throw InvalidInput(std::string(op) + ": non-finite entry at row " +
                     std::to_string(row) + ", col " + std::to_string(col));
}

}  // namespace

Mat row_softmax(const Mat& logits, double scale) {
  if (!(scale > 0.0)) {
    throw InvalidInput("row_softmax: scale must be positive, got " + std::to_string(scale));
  }
  if (logits.rows() > 0 && logits.cols() == 0) {
    throw InvalidInput("row_softmax: matrix has no columns");
  }
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      if (!std::isfinite(logits(i, j))) throw_non_finite("row_softmax", i, j);
    }
  }

  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double m = logits(i, 0);
    for (Eigen::Index j = 1; j < logits.cols(); ++j) {
      if (logits(i, j) > m) m = logits(i, j);
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      double e = std::exp((logits(i, j) - m) / scale);
      out(i, j) = e;
      sum += e;
    }
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      out(i, j) /= sum;
    }
  }
  return out;
}

RowExtrema row_extrema(const Mat& m) {
  if (m.cols() < 1) {
    throw InvalidInput("row_extrema: matrix has no columns");
  }
  RowExtrema ex;
  ex.max.resize(m.rows());
  ex.min.resize(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double hi = m(i, 0);
    double lo = m(i, 0);
    for (Eigen::Index j = 1; j < m.cols(); ++j) {
      if (m(i, j) > hi) hi = m(i, j);
      if (m(i, j) < lo) lo = m(i, j);
    }
    ex.max(i) = hi;
    ex.min(i) = lo;
  }
  return ex;
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) {
    throw InvalidInput("matmul: shape mismatch, " + std::to_string(a.rows()) + "x" +
                       std::to_string(a.cols()) + " * " + std::to_string(b.rows()) + "x" +
                       std::to_string(b.cols()));
  }
  Mat out = Mat::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < a.cols(); ++k) {
        acc += a(i, k) * b(k, j);
      }
      out(i, j) = acc;
    }
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::uint64_t fold_in(std::uint64_t key, std::uint64_t data) {
  SplitMix64 s(key ^ (0x9E3779B97F4A7C15ULL * (data + 1)));
  return s.next();
}

void fill_gaussian(SplitMix64& rng, Mat& out) {
  const Eigen::Index n = out.size();
  double* data = out.data();
  Eigen::Index i = 0;
  while (i < n) {
    const double angle = kTwoPi * to_unit(rng.next());
    // Radius uniform lives in (0, 1]: shift the 53-bit mantissa by one step.
    const double u = static_cast<double>((rng.next() >> 11) + 1) * 0x1.0p-53;
    const double radius = std::sqrt(-2.0 * std::log(u));
    data[i++] = radius * std::cos(angle);
    if (i < n) data[i++] = radius * std::sin(angle);
  }
}

}  // namespace layoutdiff
