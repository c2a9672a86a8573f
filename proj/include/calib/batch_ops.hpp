#pragma once

#include <span>

#include "calib/mlp.hpp"
#include "calib/numerics.hpp"
#include "calib/parallel_for.hpp"

namespace calib {

// Every batch-level kernel comes in two flavours selected by Exec: a plain
// serial loop (the reference) and an OpenMP loop over samples. Per-sample
// work is seeded independently via mix_seed and partial results are reduced
// in index order, so both flavours produce bit-identical output and the
// parallel one is invariant to the thread count.
Exec exec_from_string(const std::string& s);

enum class LossKind {
  CrossEntropy,   // -sum y log p
  KlFromTarget,   // KL(y || p)
  NegEntropy,     // -H(p), target ignored
  EntropyPenalizedCe,  // CE - weight * H(p)
};

struct LossSpec {
  LossKind kind = LossKind::CrossEntropy;
  double entropy_weight = 0.0;  // EntropyPenalizedCe only
};

double loss_value(const LossSpec& spec, const Vec& target, const Vec& probs);
Vec loss_grad(const LossSpec& spec, const Vec& target, const Vec& probs);

struct BatchGrad {
  double loss = 0.0;   // mean over the batch
  GradientTape tape;   // d(mean loss)/d(theta)
};

// Mean loss and gradient over a batch. Sample i runs under
// Rng(mix_seed(seed_base, i)) when mode == Train and dropout is active.
// For LossKind::NegEntropy, `targets` may be empty.
BatchGrad batch_loss_grad(const MlpModel& m, std::span<const Vec> xs,
                          std::span<const Vec> targets, const LossSpec& spec,
                          RunMode mode, std::uint64_t seed_base,
                          Exec exec = Exec::Parallel);

// Eval-mode class probabilities for every input.
std::vector<Vec> predict_probs(const MlpModel& m, std::span<const Vec> xs,
                               Exec exec = Exec::Parallel);

// Eval-mode pre-softmax logits for every input.
std::vector<Vec> predict_logits(const MlpModel& m, std::span<const Vec> xs,
                                Exec exec = Exec::Parallel);

// Hidden-space interpolation pair: mix the layer inputs of batch elements
// a and b at `layer` with weight lambda, finish the forward pass, and let
// gradients flow back through both branches.
struct MixPair {
  std::size_t a = 0;
  std::size_t b = 0;
  double lambda = 1.0;
  Vec y_mix;
};

BatchGrad hidden_mixup_grad(const MlpModel& m, std::span<const Vec> xs,
                            std::span<const MixPair> pairs, std::size_t layer,
                            RunMode mode, std::uint64_t seed_base,
                            Exec exec = Exec::Parallel);

}  // namespace calib
