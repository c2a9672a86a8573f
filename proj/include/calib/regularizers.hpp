#pragma once

#include "calib/batch_ops.hpp"

namespace calib {

// Which feature-space objective the on-manifold inner step descends.
// CosineDistance (1 - normalized inner product) moves features toward the
// partner; CosineSimilarity descends the raw inner product instead.
enum class OnManifoldMetric { CosineDistance, CosineSimilarity };

OnManifoldMetric on_metric_from_string(const std::string& s);

struct ManifoldSmoothingConfig {
  double lambda_on = 1.0;
  double lambda_off = 1.0;
  double delta_on = 1e-2;    // l-inf ball radius for on-manifold samples
  double delta_off = 1e-1;   // l-inf sphere radius for off-manifold samples
  double delta_y = 0.1;      // label interpolation weight
  int inner_steps = 1;
  OnManifoldMetric on_metric = OnManifoldMetric::CosineDistance;
  bool zero_init = false;    // diagnostic: start inner steps at the anchor
};

void validate(const ManifoldSmoothingConfig& cfg);

struct OnManifoldSample {
  Vec x_prime;
  Vec y_prime;
  std::size_t anchor_index = 0;
  std::size_t partner_index = 0;
};

struct OffManifoldSample {
  Vec x_dprime;
  std::size_t anchor_index = 0;
};

// Exact projection onto {v : |v - center|_inf <= radius}.
Vec project_ball(const Vec& center, const Vec& candidate, double radius);

// Clamp onto the ball, then push the largest-magnitude offset coordinate
// (lowest index on ties) out to +-radius so |v - center|_inf == radius.
Vec project_sphere(const Vec& center, const Vec& candidate, double radius);

// One pseudo sample per anchor: draw a partner uniformly from the batch,
// start at anchor + UNIF[-delta_on, delta_on]^d, take inner_steps projected
// sign-gradient descent steps on the feature metric toward the partner, and
// interpolate the labels. Anchors whose features (or whose partner's
// features) have zero norm are skipped with a warning. Forward passes run
// in eval mode and no parameter gradients are produced.
std::vector<OnManifoldSample> generate_on_manifold(
    const MlpModel& m, std::span<const Vec> xs, std::span<const Vec> ys,
    const ManifoldSmoothingConfig& cfg, Rng& rng, Exec exec = Exec::Parallel);

// One pseudo sample per anchor: start at anchor + UNIF[-delta_off,
// delta_off]^d and take inner_steps projected sign-gradient ascent steps on
// the classification loss, landing exactly on the l-inf sphere.
std::vector<OffManifoldSample> generate_off_manifold(
    const MlpModel& m, std::span<const Vec> xs, std::span<const Vec> ys,
    const ManifoldSmoothingConfig& cfg, Rng& rng, Exec exec = Exec::Parallel);

// Mean KL(y' || model(x')) over the samples, with parameter gradients.
// Samples are constants; no gradient flows into x'.
BatchGrad r_on(const MlpModel& m, std::span<const OnManifoldSample> samples,
               RunMode mode, std::uint64_t seed_base, Exec exec = Exec::Parallel);

// Mean negative entropy of model(x'') over the samples, in [-log K, 0].
BatchGrad r_off(const MlpModel& m, std::span<const OffManifoldSample> samples,
                RunMode mode, std::uint64_t seed_base, Exec exec = Exec::Parallel);

}  // namespace calib
