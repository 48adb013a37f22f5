#include "layoutdiff/sampler.hpp"

#include <cmath>
#include <cstdlib>
#include <map>
#include <string>
#include <utility>

namespace layoutdiff {

namespace {

bool is_power_of_two(int x) { return x > 0 && (x & (x - 1)) == 0; }

Mat init_weight(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, int layer, int role,
                double diag_gain) {
  SplitMix64 stream(fold_in(fold_in(seed, static_cast<std::uint64_t>(layer)),
                            static_cast<std::uint64_t>(role)));
  const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
  Mat w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    w.data()[i] = to_signed_unit(stream.next()) * scale;
  }
  for (Eigen::Index i = 0; i < std::min(rows, cols); ++i) {
    w(i, i) += diag_gain;
  }
  return w;
}

}  // namespace

void ToyModelSpec::validate() const {
  if (!is_power_of_two(latent_side) || latent_side < 2) {
    throw InvalidInput("model: latent_side must be a power of two >= 2");
  }
  if (channels < 1 || text_dim < 1) {
    throw InvalidInput("model: channels and text_dim must be at least 1");
  }
  if (heads < 1 || channels % heads != 0) {
    throw InvalidInput("model: heads must divide channels");
  }
  if (blocks.empty()) {
    throw InvalidInput("model: at least one block is required");
  }
  for (const BlockSpec& b : blocks) {
    if (!is_power_of_two(b.resolution) || b.resolution < 2 || b.resolution > latent_side) {
      throw InvalidInput("model: block resolution " + std::to_string(b.resolution) +
                         " must be a power of two in [2, latent_side]");
    }
  }
}

int ToyModelSpec::num_attention_layers() const {
  int n = 0;
  for (const BlockSpec& b : blocks) {
    n += (b.self_attention ? 1 : 0) + (b.cross_attention ? 1 : 0);
  }
  return n;
}

DiffusionSchedule DiffusionSchedule::linear(int training_steps, int ddim_steps) {
  if (training_steps < 2) {
    throw InvalidInput("schedule: training_steps must be at least 2");
  }
  if (ddim_steps < 1 || ddim_steps > training_steps) {
    throw InvalidInput("schedule: ddim_steps must be in [1, training_steps]");
  }
  DiffusionSchedule s;
  s.training_steps = training_steps;
  s.ddim_steps = ddim_steps;
  s.betas.resize(training_steps);
  s.alpha_bars.resize(training_steps);
  const double beta_lo = 1e-4;
  const double beta_hi = 0.02;
  double prod = 1.0;
  for (int t = 0; t < training_steps; ++t) {
    const double beta = beta_lo + (beta_hi - beta_lo) * t / (training_steps - 1);
    s.betas(t) = beta;
    prod *= 1.0 - beta;
    s.alpha_bars(t) = prod;
  }
  return s;
}

double DiffusionSchedule::alpha_bar(int t) const {
  if (t == -1) return 1.0;
  if (t < 0 || t >= training_steps) {
    throw InvalidInput("schedule: timestep " + std::to_string(t) + " out of range");
  }
  return alpha_bars(t);
}

std::vector<int> DiffusionSchedule::timesteps() const {
  const int stride = training_steps / ddim_steps;
  std::vector<int> out;
  out.reserve(ddim_steps);
  for (int i = ddim_steps - 1; i >= 0; --i) {
    out.push_back(i * stride);
  }
  return out;
}

Mat pool_mean(const Mat& x, int from_side, int to_side) {
  if (from_side == to_side) return x;
  if (from_side % to_side != 0) {
    throw InvalidInput("pool_mean: " + std::to_string(to_side) + " does not divide " +
                       std::to_string(from_side));
  }
  const int f = from_side / to_side;
  Mat out = Mat::Zero(static_cast<Eigen::Index>(to_side) * to_side, x.cols());
  for (int r = 0; r < to_side; ++r) {
    for (int c = 0; c < to_side; ++c) {
      const Eigen::Index coarse = static_cast<Eigen::Index>(r) * to_side + c;
      for (int dr = 0; dr < f; ++dr) {
        for (int dc = 0; dc < f; ++dc) {
          const Eigen::Index base =
              static_cast<Eigen::Index>(r * f + dr) * from_side + (c * f + dc);
          out.row(coarse) += x.row(base);
        }
      }
      out.row(coarse) /= static_cast<double>(f) * f;
    }
  }
  return out;
}

Mat upsample_repeat(const Mat& x, int from_side, int to_side) {
  if (from_side == to_side) return x;
  if (to_side % from_side != 0) {
    throw InvalidInput("upsample_repeat: " + std::to_string(from_side) + " does not divide " +
                       std::to_string(to_side));
  }
  const int f = to_side / from_side;
  Mat out(static_cast<Eigen::Index>(to_side) * to_side, x.cols());
  for (int r = 0; r < to_side; ++r) {
    for (int c = 0; c < to_side; ++c) {
      const Eigen::Index coarse = static_cast<Eigen::Index>(r / f) * from_side + (c / f);
      out.row(static_cast<Eigen::Index>(r) * to_side + c) = x.row(coarse);
    }
  }
  return out;
}

Mat encode_text(const TokenList& tokens, int text_dim) {
  if (tokens.empty()) {
    throw InvalidInput("encode_text: token list is empty");
  }
  if (text_dim < 1) {
    throw InvalidInput("encode_text: text_dim must be at least 1");
  }
  Mat out(static_cast<Eigen::Index>(tokens.size()), text_dim);
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    SplitMix64 stream(fold_in(fnv1a64(tokens[j]), static_cast<std::uint64_t>(j)));
    for (int d = 0; d < text_dim; ++d) {
      out(static_cast<Eigen::Index>(j), d) = to_signed_unit(stream.next());
    }
  }
  return out;
}

Mat splice_segment_features(const Mat& full, const std::vector<Mat>& per_segment,
                            const TokenSegmentMap& k) {
  if (static_cast<std::size_t>(full.rows()) != k.k.size()) {
    throw InvalidInput("splice: feature rows do not match the token map length");
  }
  Mat out = full;
  for (std::size_t n = 0; n < per_segment.size(); ++n) {
    Eigen::Index row = 0;
    const int id = static_cast<int>(n + 1);
    Eigen::Index span = 0;
    for (std::size_t j = 0; j < k.k.size(); ++j) {
      if (k.k[j] == id) ++span;
    }
    if (span != per_segment[n].rows()) {
      throw InvalidInput("splice: segment " + std::to_string(id) + " has " +
                         std::to_string(per_segment[n].rows()) + " rows for a span of " +
                         std::to_string(span));
    }
    if (span > 0 && per_segment[n].cols() != full.cols()) {
      throw InvalidInput("splice: segment " + std::to_string(id) + " feature width mismatch");
    }
    for (std::size_t j = 0; j < k.k.size(); ++j) {
      if (k.k[j] == id) {
        out.row(static_cast<Eigen::Index>(j)) = per_segment[n].row(row++);
      }
    }
  }
  return out;
}

Mat ddim_update(const Mat& z, const Mat& eps, double alpha_bar_t, double alpha_bar_prev) {
  if (z.rows() != eps.rows() || z.cols() != eps.cols()) {
    throw InvalidInput("ddim_update: latent and noise shapes differ");
  }
  const double sq_t = std::sqrt(alpha_bar_t);
  const double sq1m_t = std::sqrt(1.0 - alpha_bar_t);
  const double sq_p = std::sqrt(alpha_bar_prev);
  const double sq1m_p = std::sqrt(1.0 - alpha_bar_prev);
  Mat x0 = (z - sq1m_t * eps) / sq_t;
  return sq_p * x0 + sq1m_p * eps;
}

Mat ddim_step(const Mat& z, const Mat& eps, int t, int t_prev, const DiffusionSchedule& sched) {
  return ddim_update(z, eps, sched.alpha_bar(t), sched.alpha_bar(t_prev));
}

ToyDenoiser::ToyDenoiser(const ToyModelSpec& spec) : spec_(spec) {
  spec_.validate();
  const int c = spec_.channels;
  const double g = []{ const char* e = std::getenv("DIAG_GAIN"); return e ? std::atof(e) : 0.0; }();
  int layer = 0;
  for (const BlockSpec& b : spec_.blocks) {
    if (b.self_attention) {
      layers_.push_back({init_weight(c, c, spec_.weight_seed, layer, 0, g),
                         init_weight(c, c, spec_.weight_seed, layer, 1, g),
                         init_weight(c, c, spec_.weight_seed, layer, 2, g)});
      ++layer;
    }
    if (b.cross_attention) {
      layers_.push_back({init_weight(c, c, spec_.weight_seed, layer, 0, g),
                         init_weight(spec_.text_dim, c, spec_.weight_seed, layer, 1, g),
                         init_weight(spec_.text_dim, c, spec_.weight_seed, layer, 2, g)});
      ++layer;
    }
  }
  const double hg = []{ const char* e = std::getenv("HEAD_GAIN"); return e ? std::atof(e) : 0.0; }();
  head_ = init_weight(c, c, spec_.weight_seed, layer, 0, hg);
}

namespace {

// Row-wise RMS normalization; keeps attention inputs at unit scale while the
// residual stream carries the raw magnitudes.
Mat rms_normalize(const Mat& x) {
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double ss = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      ss += x(i, j) * x(i, j);
    }
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(x.cols()) + 1e-12);
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      out(i, j) = x(i, j) * inv;
    }
  }
  return out;
}

}  // namespace

Mat ToyDenoiser::attend(const Mat& queries_src, const Mat& context, const LayerWeights& w,
                        AttentionKind kind, int layer, int resolution, double t,
                        const AttentionHook& hook, std::vector<AttentionRecord>* records,
                        int step) const {
  const Mat qn = rms_normalize(queries_src);
  const Mat cn = rms_normalize(context);
  const Mat q = matmul(qn, w.wq);
  const Mat kk = matmul(cn, w.wk);
  const Mat v = matmul(cn, w.wv);
  const int d = spec_.channels / spec_.heads;
  const double scale = std::sqrt(static_cast<double>(d));

  Mat out(queries_src.rows(), spec_.channels);
  for (int h = 0; h < spec_.heads; ++h) {
    const Mat qh = q.middleCols(static_cast<Eigen::Index>(h) * d, d);
    const Mat kh = kk.middleCols(static_cast<Eigen::Index>(h) * d, d).transpose();
    const Mat vh = v.middleCols(static_cast<Eigen::Index>(h) * d, d);
    const Mat logits = matmul(qh, kh);
    Mat raw = row_softmax(logits, scale);
    Mat used = hook ? hook(logits, scale, LayerContext{kind, layer, h, resolution, t}) : raw;
    out.middleCols(static_cast<Eigen::Index>(h) * d, d) = matmul(used, vh);
    if (records) {
      records->push_back(
          {step, t, layer, h, kind, resolution, std::move(raw), std::move(used)});
    }
  }
  return out;
}

Mat ToyDenoiser::predict(const Mat& z, const Mat& text_features, double t,
                         const AttentionHook& hook, std::vector<AttentionRecord>* records,
                         int step) const {
  const int side = spec_.latent_side;
  if (z.rows() != static_cast<Eigen::Index>(side) * side || z.cols() != spec_.channels) {
    throw InvalidInput("predict: latent shape does not match the model spec");
  }
  if (text_features.cols() != spec_.text_dim || text_features.rows() < 1) {
    throw InvalidInput("predict: text feature shape does not match the model spec");
  }

  Mat x = z;
  int layer = 0;
  for (const BlockSpec& b : spec_.blocks) {
    Mat xb = pool_mean(x, side, b.resolution);
    const Mat x_in = xb;
    if (b.self_attention) {
      xb = xb + attend(xb, xb, layers_[static_cast<std::size_t>(layer)], AttentionKind::Self,
                       layer, b.resolution, t, hook, records, step);
      ++layer;
    }
    if (b.cross_attention) {
      xb = xb + attend(xb, text_features, layers_[static_cast<std::size_t>(layer)],
                       AttentionKind::Cross, layer, b.resolution, t, hook, records, step);
      ++layer;
    }
    if (b.resolution == side) {
      x = std::move(xb);
    } else {
      // Carry the block's contribution back to full resolution.
      x = x + upsample_repeat(xb - x_in, b.resolution, side);
    }
  }
  return matmul(rms_normalize(x), head_);
}

SampleRun sample(const LayoutCondition& cond, const ModulationParams& params,
                 const ToyModelSpec& spec, std::uint64_t seed, const SampleOptions& opts) {
  params.validate();
  spec.validate();

  SampleRun run;
  run.condition = cond;
  run.params = params;
  run.model = spec;
  run.options = opts;
  run.seed = seed;

  run.tokens = tokenize(cond.caption);
  std::vector<TokenList> seg_tokens;
  seg_tokens.reserve(cond.segments.size());
  for (const auto& seg : cond.segments) {
    seg_tokens.push_back(tokenize(seg.text));
  }
  run.token_map = map_tokens_to_segments(run.tokens, seg_tokens);

  // Per-segment phrases are encoded separately and spliced over their spans.
  const Mat full_text = encode_text(run.tokens, spec.text_dim);
  std::vector<Mat> seg_features;
  seg_features.reserve(seg_tokens.size());
  for (const TokenList& toks : seg_tokens) {
    seg_features.push_back(encode_text(toks, spec.text_dim));
  }
  const Mat text = splice_segment_features(full_text, seg_features, run.token_map);

  // Layout, condition maps, and area matrices per distinct block resolution.
  struct ResolutionData {
    ResolvedLayout layout;
    Mat r_cross, r_self, s_cross, s_self;
  };
  std::map<int, ResolutionData> per_res;
  const Eigen::Index n_tokens = static_cast<Eigen::Index>(run.tokens.size());
  for (const BlockSpec& b : spec.blocks) {
    if (per_res.count(b.resolution)) continue;
    ResolutionData rd;
    rd.layout = resolve_layout(cond, b.resolution);
    rd.r_cross = build_r_cross(run.token_map, rd.layout).r;
    rd.r_self = build_r_self(rd.layout, opts.background_as_segment_self).r;
    rd.s_cross = area_matrix(rd.layout, n_tokens);
    rd.s_self = area_matrix(rd.layout, static_cast<Eigen::Index>(b.resolution) * b.resolution);
    per_res.emplace(b.resolution, std::move(rd));
  }

  const DiffusionSchedule sched = DiffusionSchedule::linear(1000, params.steps);
  run.training_steps = sched.training_steps;

  Mat z(static_cast<Eigen::Index>(spec.latent_side) * spec.latent_side, spec.channels);
  SplitMix64 noise(seed);
  fill_gaussian(noise, z);
  run.latents.push_back(z);

  const ToyDenoiser denoiser(spec);
  const ModulateOptions mod_opts{opts.disable_value_range, opts.disable_area};
  const std::vector<int> taus = sched.timesteps();

  for (std::size_t i = 0; i < taus.size(); ++i) {
    const int tau = taus[i];
    const double t = static_cast<double>(tau) / sched.training_steps;
    const bool in_window = params.in_window(t);
    run.step_timesteps.push_back(tau);
    run.step_t.push_back(t);
    run.step_in_window.push_back(in_window);

    AttentionHook hook;
    if (opts.modulation_enabled) {
      hook = [&](const Mat& logits, double scale, const LayerContext& ctx) -> Mat {
        const bool disabled = ctx.kind == AttentionKind::Cross ? opts.disable_cross
                                                               : opts.disable_self;
        if (!in_window || disabled) {
          return row_softmax(logits, scale);
        }
        const ResolutionData& rd = per_res.at(ctx.resolution);
        const double w = ctx.kind == AttentionKind::Cross ? params.w_cross : params.w_self;
        const double lambda = compute_lambda(ctx.t, w, params.p);
        const Mat& r = ctx.kind == AttentionKind::Cross ? rd.r_cross : rd.r_self;
        const Mat& s = ctx.kind == AttentionKind::Cross ? rd.s_cross : rd.s_self;
        return modulate(logits, r, s, lambda, scale, mod_opts).a_prime;
      };
    }

    const Mat eps = denoiser.predict(z, text, t, hook,
                                     opts.record_attention ? &run.records : nullptr,
                                     static_cast<int>(i));
    const int tau_prev = i + 1 < taus.size() ? taus[i + 1] : -1;
    z = ddim_step(z, eps, tau, tau_prev, sched);
    run.latents.push_back(z);
  }
  return run;
}

}  // namespace layoutdiff
