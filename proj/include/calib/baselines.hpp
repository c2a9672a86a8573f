#pragma once

#include "calib/batch_ops.hpp"

namespace calib {

enum class BaselineKind {
  Vanilla,
  TemperatureScaling,
  McDropout,
  LabelSmoothing,
  EntropyRegularized,
  Mixup,
  ManifoldMixup,
};

BaselineKind baseline_from_string(const std::string& s);
std::string to_string(BaselineKind k);

struct BaselineSpec {
  BaselineKind kind = BaselineKind::Vanilla;
  double smoothing_epsilon = 0.1;  // label smoothing
  double erl_weight = 0.1;         // entropy penalty weight
  double mixup_alpha = 0.2;        // Beta(alpha, alpha)
  int mixup_layer = -1;            // hidden interpolation layer; -1 = split_index
  int mcdp_passes = 10;            // stochastic forward passes at test time
};

void validate(const BaselineSpec& spec);

// Fits T > 0 minimizing dev-set NLL of softmax(logits / T): coarse
// geometric grid over [0.05, 10] (factor 1.1), then golden-section
// refinement to |dT| < 1e-4. A single-class dev set warns and returns 1.
double fit_temperature(std::span<const Vec> dev_logits, std::span<const int> dev_labels);

// softmax(logits / T); errors on T <= 0. Argmax is preserved.
Vec apply_temperature(const Vec& logits, double temperature);

// Mean of `passes` train-mode forward outputs (dropout live). Warns and
// falls back to a deterministic forward when the model has no dropout.
Vec mc_dropout_predict(const MlpModel& m, const Vec& x, int passes, Rng& rng);

// True class keeps 1 - eps, the rest share eps equally. eps in [0, 1).
Vec smooth_labels(const Vec& one_hot_y, double epsilon);

// cross_entropy(y, output) - weight * entropy(output)
double erl_loss(const Vec& output, const Vec& y, double weight);

// One interpolation weight per pair, partner drawn by permuting the batch.
struct DrawnPair {
  std::size_t a = 0;
  std::size_t b = 0;
  double lambda = 1.0;
};

std::vector<DrawnPair> draw_mixup_pairs(std::size_t batch_size, double alpha, Rng& rng);

Vec mix_vectors(const Vec& a, const Vec& b, double lambda);

enum class MixupSpace { Input, Hidden };

// An interpolated training point: an input vector (Input space) or the
// activation entering `layer` (Hidden space), with its soft label.
struct MixedExample {
  Vec point;
  Vec y;
  double lambda = 1.0;
  std::size_t layer = 0;  // 0 for input space
};

// Errors when the batch has fewer than two elements. Hidden mode runs
// eval-mode forwards to the designated layer and mixes those activations.
std::vector<MixedExample> mixup_batch(const MlpModel& m, std::span<const Vec> xs,
                                      std::span<const Vec> ys, double alpha,
                                      MixupSpace space, std::size_t layer, Rng& rng);

}  // namespace calib
