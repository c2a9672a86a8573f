#pragma once

#include "calib/mlp.hpp"

namespace calib {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment buffers mirroring the model, plus the step counter.
struct AdamState {
  AdamConfig cfg;
  std::vector<LayerGrad> m;  // first moments
  std::vector<LayerGrad> v;  // second moments
  std::uint64_t t = 0;
};

AdamState make_adam(const MlpModel& model, const AdamConfig& cfg);

// Canonical bias-corrected update, in place. Errors on shape mismatch.
void adam_step(MlpModel& model, const GradientTape& tape, AdamState& state);

}  // namespace calib
