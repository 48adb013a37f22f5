#include "layoutdiff/selftest.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "layoutdiff/diagnostics.hpp"
#include "layoutdiff/modulation.hpp"

namespace layoutdiff {

namespace {

Mat random_mat(SplitMix64& rng, Eigen::Index rows, Eigen::Index cols, double span = 4.0) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = to_signed_unit(rng.next()) * span;
  }
  return m;
}

bool bit_equal(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.size() == 0 ||
          std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0);
}

std::string fmt(double x) {
  std::ostringstream out;
  out.precision(17);
  out << x;
  return out.str();
}

}  // namespace

LayoutCondition random_layout_condition(SplitMix64& rng, int base_side, int max_segments) {
  static const char* kNouns[] = {"fox",    "lake",   "tower", "meadow",
                                 "boulder", "lantern", "canal", "orchard"};
  static const char* kAdjs[] = {"crimson", "pale",  "gilded", "mossy",
                                "quiet",   "striped", "foggy", "amber"};
  const int n_words = 8;
  if (base_side % 4 != 0 || base_side < 4) {
    throw InvalidInput("random_layout_condition: base_side must be a positive multiple of 4");
  }
  if (max_segments < 1 || max_segments > 4) {
    throw InvalidInput("random_layout_condition: max_segments must be in [1, 4]");
  }

  const int block = base_side / 4;  // side of one quarter-resolution block
  const int n_seg = 1 + static_cast<int>(rng.next() % static_cast<std::uint64_t>(max_segments));

  // Distinct dedicated blocks and distinct words per segment.
  int blocks[16];
  for (int i = 0; i < 16; ++i) blocks[i] = i;
  for (int i = 15; i > 0; --i) {
    const int j = static_cast<int>(rng.next() % static_cast<std::uint64_t>(i + 1));
    std::swap(blocks[i], blocks[j]);
  }
  int nouns[n_words], adjs[n_words];
  for (int i = 0; i < n_words; ++i) nouns[i] = adjs[i] = i;
  for (int i = n_words - 1; i > 0; --i) {
    int j = static_cast<int>(rng.next() % static_cast<std::uint64_t>(i + 1));
    std::swap(nouns[i], nouns[j]);
    j = static_cast<int>(rng.next() % static_cast<std::uint64_t>(i + 1));
    std::swap(adjs[i], adjs[j]);
  }

  LayoutCondition cond;
  cond.width = base_side;
  cond.height = base_side;
  std::vector<int> owner(static_cast<std::size_t>(base_side) * base_side, 0);

  std::string caption;
  for (int n = 0; n < n_seg; ++n) {
    LayoutCondition::Segment seg;
    seg.text = std::string("a ") + kAdjs[adjs[n]] + " " + kNouns[nouns[n]];
    seg.mask.assign(static_cast<std::size_t>(base_side) * base_side, 0);

    const int br = (blocks[n] / 4) * block;
    const int bc = (blocks[n] % 4) * block;
    std::vector<int> cells;  // owned cells, for extension starts
    for (int r = br; r < br + block; ++r) {
      for (int c = bc; c < bc + block; ++c) {
        const int cell = r * base_side + c;
        seg.mask[static_cast<std::size_t>(cell)] = 1;
        owner[static_cast<std::size_t>(cell)] = n + 1;
        cells.push_back(cell);
      }
    }

    // Ragged growth into free cells; the dedicated block keeps the segment
    // alive through pooling no matter what the neighbours claim.
    const int extensions = static_cast<int>(rng.next() % static_cast<std::uint64_t>(2 * block * block));
    for (int e = 0; e < extensions; ++e) {
      const int from = cells[static_cast<std::size_t>(rng.next() % cells.size())];
      const int dir = static_cast<int>(rng.next() % 4);
      int r = from / base_side;
      int c = from % base_side;
      r += dir == 0 ? -1 : (dir == 1 ? 1 : 0);
      c += dir == 2 ? -1 : (dir == 3 ? 1 : 0);
      if (r < 0 || r >= base_side || c < 0 || c >= base_side) continue;
      const int cell = r * base_side + c;
      if (owner[static_cast<std::size_t>(cell)] != 0) continue;
      seg.mask[static_cast<std::size_t>(cell)] = 1;
      owner[static_cast<std::size_t>(cell)] = n + 1;
      cells.push_back(cell);
    }

    if (n > 0) caption += " and ";
    caption += seg.text;
    cond.segments.push_back(std::move(seg));
  }
  cond.caption = caption + " under an open sky";
  return cond;
}

LayoutCondition selftest_layout() {
  LayoutCondition cond;
  cond.caption = "a dark tower beside a bright pool on flat ground";
  cond.width = 8;
  cond.height = 8;
  LayoutCondition::Segment s1, s2;
  s1.text = "a dark tower";
  s2.text = "a bright pool";
  s1.mask.assign(64, 0);
  s2.mask.assign(64, 0);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      s1.mask[static_cast<std::size_t>(r) * 8 + c] = 1;
      s2.mask[static_cast<std::size_t>(r + 4) * 8 + (c + 4)] = 1;
    }
  }
  cond.segments = {std::move(s1), std::move(s2)};
  return cond;
}

ToyModelSpec selftest_model() {
  ToyModelSpec spec;
  spec.latent_side = 8;
  spec.blocks = {{8, true, true}, {4, true, true}};
  return spec;
}

std::uint64_t selftest_seed() { return 42; }

std::vector<double> trajectory_checksum(const SampleRun& run) {
  std::vector<double> out;
  out.reserve(run.latents.size());
  for (const Mat& z : run.latents) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      sum += std::abs(z.data()[i]);
    }
    out.push_back(sum / static_cast<double>(z.size()));
  }
  return out;
}

const std::vector<double>& trajectory_golden() {
  // Frozen from the selftest configuration; regenerate with
  // `layoutdiff selftest --print-trajectory` if the model ever changes.
  static const std::vector<double> golden = {
      0.78081655823568985,      0.96310930251523907,      1.1894077501582418,
      1.4749875857750669,      1.8304223274161002,      2.2775159151165556,
      2.8470487441956651,      3.5747186950629648,      4.5068738208541177,
      5.7180964235347833,      7.2596202678250989,      9.1806870867215054,
      11.639331350797621,      14.855848754345459,      18.863415923751351,
      23.764543843899883,      29.649472449031503,      36.67449447160589,
      44.549912984843154,      53.9344787036284,        65.054739326719712,
      78.063270090185483,      93.460574763931959,      111.52618030376966,
      132.69655827284697,      157.35002925525242,      185.93367003888466,
      218.7097472235499,       255.5868173234567,       296.92374529536892,
      343.1205426686027,       393.30758641791266,      446.83107956767037,
      504.55521884824958,      563.26094453134249,      623.60242139911009,
      686.76180131813283,      752.1035563854407,       819.73955227502836,
      890.88199746535918,      964.14195109094567,      1037.9400247247222,
      1112.6637099272109,      1190.2337889308208,      1269.1014979672566,
      1348.4020117492969,      1428.0350513982062,      1508.3351756005777,
      1587.6176159397969,      1668.621436958796,       1680.1724539003585,
  };
  return golden;
}

namespace {

using Check = SelfTestResult;

Check check_splitmix_vector() {
  SplitMix64 s(0);
  const std::uint64_t v = s.next();
  return {"splitmix64-seed0-vector", v == 0xE220A8397B1DCDAFULL,
          v == 0xE220A8397B1DCDAFULL ? "" : "got different first output"};
}

Check check_splitmix_determinism() {
  SplitMix64 a(12345), b(12345);
  for (int i = 0; i < 64; ++i) {
    if (a.next() != b.next()) {
      return {"splitmix64-determinism", false, "sequences diverged"};
    }
  }
  return {"splitmix64-determinism", true, ""};
}

Check check_splitmix_separation() {
  SplitMix64 a(1), b(2);
  return {"splitmix64-seed-separation", a.next() != b.next(), ""};
}

Check check_fnv_basis() {
  return {"fnv1a64-empty-basis", fnv1a64("") == 0xCBF29CE484222325ULL, ""};
}

Check check_fnv_vector() {
  return {"fnv1a64-a-vector", fnv1a64("a") == 0xAF63DC4C8601EC8CULL, ""};
}

Check check_fnv_separation() {
  return {"fnv1a64-separation", fnv1a64("a") != fnv1a64("b"), ""};
}

Check check_worked_example() {
  Mat logits(1, 2), r(1, 2), s(1, 2);
  logits << 0.0, 1.0;
  r << 1.0, 0.0;
  s << 0.5, 0.5;
  const ModulationResult res = modulate(logits, r, s, 1.0, 1.0);
  const bool m_ok = std::abs(res.mats.m(0, 0) - 0.5) < 1e-12 &&
                    std::abs(res.mats.m(0, 1) + 0.5) < 1e-12;
  const bool a_ok = std::abs(res.a_prime(0, 0) - 0.5) < 1e-12 &&
                    std::abs(res.a_prime(0, 1) - 0.5) < 1e-12;
  return {"modulation-worked-example", m_ok && a_ok,
          m_ok && a_ok ? "" : "m=[" + fmt(res.mats.m(0, 0)) + "," + fmt(res.mats.m(0, 1)) +
                                  "] a'=[" + fmt(res.a_prime(0, 0)) + "," +
                                  fmt(res.a_prime(0, 1)) + "]"};
}

Check check_softmax_rows() {
  SplitMix64 rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index rows = 1 + static_cast<Eigen::Index>(rng.next() % 8);
    const Eigen::Index cols = 1 + static_cast<Eigen::Index>(rng.next() % 16);
    const Mat a = row_softmax(random_mat(rng, rows, cols), 1.0 + to_unit(rng.next()) * 3.0);
    for (Eigen::Index i = 0; i < rows; ++i) {
      double sum = 0.0;
      for (Eigen::Index j = 0; j < cols; ++j) {
        if (a(i, j) < 0.0 || a(i, j) > 1.0) {
          return {"softmax-row-sums", false, "entry outside [0,1]"};
        }
        sum += a(i, j);
      }
      if (std::abs(sum - 1.0) > 1e-9) {
        return {"softmax-row-sums", false, "row sum off by " + fmt(sum - 1.0)};
      }
    }
  }
  return {"softmax-row-sums", true, ""};
}

Check check_softmax_shift() {
  SplitMix64 rng(202);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat logits = random_mat(rng, 4, 9);
    Mat shifted = logits;
    for (Eigen::Index i = 0; i < shifted.rows(); ++i) {
      shifted.row(i).array() += to_signed_unit(rng.next()) * 10.0;
    }
    const Mat a = row_softmax(logits, 1.5);
    const Mat b = row_softmax(shifted, 1.5);
    if (((a - b).array().abs() > 1e-12).any()) {
      return {"softmax-shift-invariance", false, "shifted rows diverged"};
    }
  }
  return {"softmax-shift-invariance", true, ""};
}

Check check_lambda_zero_identity() {
  SplitMix64 rng(303);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat logits = random_mat(rng, 6, 7);
    Mat r(6, 7), s(6, 7);
    for (Eigen::Index i = 0; i < 6; ++i) {
      const double area = 0.05 + to_unit(rng.next()) * 0.9;
      for (Eigen::Index j = 0; j < 7; ++j) {
        r(i, j) = rng.next() & 1 ? 1.0 : 0.0;
        s(i, j) = area;
      }
    }
    const Mat direct = row_softmax(logits, 2.0);
    const Mat via = modulate(logits, r, s, 0.0, 2.0).a_prime;
    if (!bit_equal(direct, via)) {
      return {"lambda-zero-identity", false, "lambda=0 path differs from plain softmax"};
    }
  }
  return {"lambda-zero-identity", true, ""};
}

Check check_layout_partitions() {
  SplitMix64 rng(404);
  for (int trial = 0; trial < 20; ++trial) {
    const LayoutCondition cond = random_layout_condition(rng);
    for (int h : {16, 8, 4}) {
      const ResolvedLayout layout = resolve_layout(cond, h);
      Vec sum = layout.background_mask;
      for (const Vec& m : layout.masks) {
        if (m.sum() < 1.0) return {"layout-partition-quick", false, "segment lost cells"};
        sum += m;
      }
      if ((sum.array() != 1.0).any()) {
        return {"layout-partition-quick", false, "ownership is not a partition"};
      }
      double area = 0.0;
      for (double a : layout.areas) area += a;
      if (std::abs(area - 1.0) > 1e-12) {
        return {"layout-partition-quick", false, "areas sum to " + fmt(area)};
      }
    }
  }
  return {"layout-partition-quick", true, ""};
}

Check check_mass_monotonicity() {
  SplitMix64 rng(505);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index cols = 4 + static_cast<Eigen::Index>(rng.next() % 12);
    const Mat logits = random_mat(rng, 1, cols);
    Mat r = Mat::Zero(1, cols), s(1, cols);
    const double area = 0.1 + to_unit(rng.next()) * 0.8;
    s.setConstant(area);
    const Eigen::Index ones = 1 + static_cast<Eigen::Index>(rng.next() % (cols - 1));
    for (Eigen::Index j = 0; j < ones; ++j) r(0, j) = 1.0;

    double prev = -1.0;
    for (const double lambda : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      const Mat a = modulate(logits, r, s, lambda, 1.0).a_prime;
      double mass = 0.0;
      for (Eigen::Index j = 0; j < ones; ++j) mass += a(0, j);
      if (prev >= 0.0 && mass < prev - 1e-12) {
        return {"mass-monotonicity-quick", false, "mass decreased along the lambda sweep"};
      }
      prev = mass;
    }
  }
  return {"mass-monotonicity-quick", true, ""};
}

Check check_trajectory() {
  const std::vector<double>& golden = trajectory_golden();
  if (golden.empty()) {
    return {"trajectory-checksum-8x8", false, "golden vector not initialized"};
  }
  SampleRun run = sample(selftest_layout(), ModulationParams{}, selftest_model(),
                         selftest_seed(), SampleOptions{});
  const std::vector<double> got = trajectory_checksum(run);
  if (got.size() != golden.size()) {
    return {"trajectory-checksum-8x8", false,
            "checksum length " + std::to_string(got.size()) + ", expected " +
                std::to_string(golden.size())};
  }
  for (std::size_t i = 0; i < got.size(); ++i) {
    if (std::abs(got[i] - golden[i]) > 1e-12) {
      return {"trajectory-checksum-8x8", false,
              "step " + std::to_string(i) + ": got " + fmt(got[i]) + ", expected " +
                  fmt(golden[i])};
    }
  }
  return {"trajectory-checksum-8x8", true, ""};
}

}  // namespace

std::vector<SelfTestResult> run_selftest() {
  return {
      check_splitmix_vector(),    check_splitmix_determinism(), check_splitmix_separation(),
      check_fnv_basis(),          check_fnv_vector(),           check_fnv_separation(),
      check_worked_example(),     check_softmax_rows(),         check_softmax_shift(),
      check_lambda_zero_identity(), check_layout_partitions(),  check_mass_monotonicity(),
      check_trajectory(),
  };
}

}  // namespace layoutdiff
