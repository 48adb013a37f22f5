#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string_view>

#include "layoutdiff/error.hpp"

namespace layoutdiff {

/// Dense double matrix, row-major so the storage order matches the
/// serialized row-major layout of masks and attention maps.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

/// Numerically stable row-wise softmax of logits/scale: each row of the
/// result is nonnegative and sums to 1. The per-row maximum is subtracted
/// before exponentiation and the sum runs left to right over the columns, so
/// results are identical across builds and platforms.
///
/// Throws InvalidInput if scale <= 0 or any entry is non-finite (the message
/// names the offending row and column).
Mat row_softmax(const Mat& logits, double scale);

struct RowExtrema {
  Vec max;
  Vec min;
};

/// Per-row maximum and minimum. Throws InvalidInput on a matrix with no
/// columns.
RowExtrema row_extrema(const Mat& m);

/// Plain dense product with a fixed left-to-right accumulation order over the
/// inner index. Not fast, but bit-reproducible everywhere.
Mat matmul(const Mat& a, const Mat& b);

/// splitmix64 pseudo-random stream. State advances by the golden-gamma
/// constant and the output is a bijective mix of the state, so identical
/// seeds give identical sequences on every platform. Reference vector:
/// seed 0 yields 0xE220A8397B1DCDAF first.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

/// FNV-1a over raw bytes, 64-bit variant. fnv1a64("") is the offset basis
/// 0xCBF29CE484222325; fnv1a64("a") is 0xAF63DC4C8601EC8C.
std::uint64_t fnv1a64(std::string_view bytes);

/// Derives a child seed from (key, data) with one splitmix64 scramble. Used
/// to key independent streams (per-layer weights, per-token text rows) off a
/// single base seed.
std::uint64_t fold_in(std::uint64_t key, std::uint64_t data);

/// Top 53 bits of u mapped to [0, 1).
inline double to_unit(std::uint64_t u) {
  return static_cast<double>(u >> 11) * 0x1.0p-53;
}

/// [-1, 1): to_unit(u) * 2 - 1.
inline double to_signed_unit(std::uint64_t u) { return to_unit(u) * 2.0 - 1.0; }

/// Fills `out` row-major with standard normal draws via Box-Muller. Uniform
/// pair order is fixed: the first word of each pair is the angle, the second
/// the radius (mapped to (0, 1] so the log never sees zero).
void fill_gaussian(SplitMix64& rng, Mat& out);

}  // namespace layoutdiff
