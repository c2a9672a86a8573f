#include "calib/regularizers.hpp"

#include <cmath>
#include <optional>


namespace calib {

OnManifoldMetric on_metric_from_string(const std::string& s) {
  if (s == "cosine-distance") return OnManifoldMetric::CosineDistance;
  if (s == "cosine-similarity") return OnManifoldMetric::CosineSimilarity;
  fail("unknown on-manifold metric '", s,
       "' (expected cosine-distance|cosine-similarity)");
}

void validate(const ManifoldSmoothingConfig& cfg) {
  require(cfg.lambda_on >= 0.0 && cfg.lambda_off >= 0.0,
          "smoothing: lambda_on/lambda_off must be >= 0");
  if (cfg.lambda_on > 0.0)
    require(cfg.delta_on > 0.0, "smoothing: delta_on must be > 0 when lambda_on > 0");
  if (cfg.lambda_off > 0.0)
    require(cfg.delta_off > 0.0, "smoothing: delta_off must be > 0 when lambda_off > 0");
  require(cfg.delta_y >= 0.0 && cfg.delta_y <= 1.0,
          "smoothing: delta_y must be in [0, 1], got ", cfg.delta_y);
  require(cfg.inner_steps >= 1, "smoothing: inner_steps must be >= 1");
}

namespace {

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

Vec project_ball(const Vec& center, const Vec& candidate, double radius) {
  Vec out(center.size());
  for (std::size_t i = 0; i < center.size(); ++i) {
    double d = candidate[i] - center[i];
    d = std::clamp(d, -radius, radius);
    out[i] = center[i] + d;
  }
  return out;
}

Vec project_sphere(const Vec& center, const Vec& candidate, double radius) {
  Vec offset(center.size());
  double max_abs = -1.0;
  std::size_t max_idx = 0;
  for (std::size_t i = 0; i < center.size(); ++i) {
    double d = std::clamp(candidate[i] - center[i], -radius, radius);
    offset[i] = d;
    if (std::fabs(d) > max_abs) {
      max_abs = std::fabs(d);
      max_idx = i;
    }
  }
  if (max_abs < radius)
    offset[max_idx] = offset[max_idx] >= 0.0 ? radius : -radius;
  Vec out(center.size());
  for (std::size_t i = 0; i < center.size(); ++i) out[i] = center[i] + offset[i];
  return out;
}

namespace {

template <class T, class PerAnchor>
std::vector<T> generate_samples(std::size_t n, Rng& rng, Exec exec,
                                const char* what, PerAnchor&& per_anchor) {
  require(n > 0, what, ": empty batch");
  // Sub-seeds are drawn up front so Serial and Parallel agree exactly.
  std::vector<std::uint64_t> seeds(n);
  for (auto& s : seeds) s = rng.next_u64();

  std::vector<std::optional<T>> raw(n);
  parallel_for(n, exec, [&](std::size_t i) { raw[i] = per_anchor(i, seeds[i]); });

  std::vector<T> out;
  out.reserve(n);
  std::size_t skipped = 0;
  for (auto& s : raw) {
    if (s)
      out.push_back(std::move(*s));
    else
      ++skipped;
  }
  if (skipped > 0)
    warn(what, ": skipped ", skipped, " sample(s) with zero-norm features");
  return out;
}

}  // namespace

std::vector<OnManifoldSample> generate_on_manifold(
    const MlpModel& m, std::span<const Vec> xs, std::span<const Vec> ys,
    const ManifoldSmoothingConfig& cfg, Rng& rng, Exec exec) {
  require(xs.size() == ys.size(), "generate_on_manifold: ", xs.size(),
          " inputs vs ", ys.size(), " labels");
  validate(cfg);
  const double d_on = cfg.delta_on;

  auto per_anchor = [&](std::size_t i, std::uint64_t seed) -> std::optional<OnManifoldSample> {
    Rng local(seed);
    const Vec& x = xs[i];
    const std::size_t partner = local.uniform_index(xs.size());

    Vec xp = x;
    if (!cfg.zero_init)
      for (double& v : xp) v += local.uniform(-d_on, d_on);

    ForwardResult partner_fwd = forward(m, xs[partner], RunMode::Eval);
    if (norm2(partner_fwd.features) == 0.0) return std::nullopt;

    for (int step = 0; step < cfg.inner_steps; ++step) {
      ForwardResult f = forward(m, xp, RunMode::Eval);
      if (norm2(f.features) == 0.0) return std::nullopt;
      Vec dfeat = cfg.on_metric == OnManifoldMetric::CosineDistance
                      ? cosine_distance_grad_a(f.features, partner_fwd.features)
                      : cosine_similarity_grad_a(f.features, partner_fwd.features);
      Vec gx = input_grad_from_feature_grad(m, f.cache, dfeat);
      for (std::size_t k = 0; k < xp.size(); ++k) xp[k] -= d_on * sign_of(gx[k]);
      xp = project_ball(x, xp, d_on);
    }

    OnManifoldSample s;
    s.x_prime = std::move(xp);
    s.y_prime.resize(ys[i].size());
    for (std::size_t k = 0; k < ys[i].size(); ++k)
      s.y_prime[k] = (1.0 - cfg.delta_y) * ys[i][k] + cfg.delta_y * ys[partner][k];
    s.anchor_index = i;
    s.partner_index = partner;
    return s;
  };
  return generate_samples<OnManifoldSample>(xs.size(), rng, exec,
                                            "on-manifold generation", per_anchor);
}

std::vector<OffManifoldSample> generate_off_manifold(
    const MlpModel& m, std::span<const Vec> xs, std::span<const Vec> ys,
    const ManifoldSmoothingConfig& cfg, Rng& rng, Exec exec) {
  require(xs.size() == ys.size(), "generate_off_manifold: ", xs.size(),
          " inputs vs ", ys.size(), " labels");
  validate(cfg);
  const double d_off = cfg.delta_off;

  auto per_anchor = [&](std::size_t i, std::uint64_t seed) -> std::optional<OffManifoldSample> {
    Rng local(seed);
    const Vec& x = xs[i];
    Vec xq = x;
    if (!cfg.zero_init)
      for (double& v : xq) v += local.uniform(-d_off, d_off);

    for (int step = 0; step < cfg.inner_steps; ++step) {
      ForwardResult f = forward(m, xq, RunMode::Eval);
      GradientTape tape = backward(m, f.cache, cross_entropy_grad(ys[i], f.output));
      for (std::size_t k = 0; k < xq.size(); ++k)
        xq[k] += d_off * sign_of(tape.input_grad[k]);
      xq = project_sphere(x, xq, d_off);
    }

    OffManifoldSample s;
    s.x_dprime = std::move(xq);
    s.anchor_index = i;
    return s;
  };
  return generate_samples<OffManifoldSample>(xs.size(), rng, exec,
                                             "off-manifold generation", per_anchor);
}

BatchGrad r_on(const MlpModel& m, std::span<const OnManifoldSample> samples,
               RunMode mode, std::uint64_t seed_base, Exec exec) {
  std::vector<Vec> xs(samples.size()), ys(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    xs[i] = samples[i].x_prime;
    ys[i] = samples[i].y_prime;
  }
  return batch_loss_grad(m, xs, ys, {LossKind::KlFromTarget}, mode, seed_base, exec);
}

BatchGrad r_off(const MlpModel& m, std::span<const OffManifoldSample> samples,
                RunMode mode, std::uint64_t seed_base, Exec exec) {
  std::vector<Vec> xs(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) xs[i] = samples[i].x_dprime;
  return batch_loss_grad(m, xs, {}, {LossKind::NegEntropy}, mode, seed_base, exec);
}

}  // namespace calib
