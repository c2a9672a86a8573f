#include "calib/batch_ops.hpp"

namespace calib {

Exec exec_from_string(const std::string& s) {
  if (s == "serial") return Exec::Serial;
  if (s == "parallel") return Exec::Parallel;
  fail("unknown exec mode '", s, "' (expected serial|parallel)");
}

double loss_value(const LossSpec& spec, const Vec& target, const Vec& probs) {
  switch (spec.kind) {
    case LossKind::CrossEntropy:
      return cross_entropy(target, probs);
    case LossKind::KlFromTarget:
      return kl_divergence(target, probs);
    case LossKind::NegEntropy:
      return -entropy(probs);
    case LossKind::EntropyPenalizedCe:
      return cross_entropy(target, probs) - spec.entropy_weight * entropy(probs);
  }
  fail("loss_value: bad kind");
}

Vec loss_grad(const LossSpec& spec, const Vec& target, const Vec& probs) {
  switch (spec.kind) {
    case LossKind::CrossEntropy:
      return cross_entropy_grad(target, probs);
    case LossKind::KlFromTarget:
      return kl_divergence_grad_q(target, probs);
    case LossKind::NegEntropy:
      return neg_entropy_grad(probs);
    case LossKind::EntropyPenalizedCe: {
      Vec g = cross_entropy_grad(target, probs);
      axpy(spec.entropy_weight, neg_entropy_grad(probs), g);
      return g;
    }
  }
  fail("loss_grad: bad kind");
}

namespace {

// Per-sample contributions are computed into private buffers and merged in
// index order, which keeps Serial and Parallel bit-identical. Blocks bound
// the scratch memory for large batches.
constexpr std::size_t kBlock = 64;

struct SampleGrad {
  double loss = 0.0;
  GradientTape tape;
};

template <class PerSample>
void run_blocked(std::size_t n, Exec exec, BatchGrad& acc, double inv_n,
                 PerSample&& per_sample) {
  std::vector<SampleGrad> scratch;
  for (std::size_t base = 0; base < n; base += kBlock) {
    const std::size_t count = std::min(kBlock, n - base);
    if (exec == Exec::Parallel) {
      scratch.resize(count);
      parallel_for(count, exec,
                   [&](std::size_t j) { scratch[j] = per_sample(base + j); });
      for (std::size_t j = 0; j < count; ++j) {
        acc.loss += inv_n * scratch[j].loss;
        acc.tape.axpy(inv_n, scratch[j].tape);
      }
    } else {
      for (std::size_t j = 0; j < count; ++j) {
        SampleGrad s = per_sample(base + j);
        acc.loss += inv_n * s.loss;
        acc.tape.axpy(inv_n, s.tape);
      }
    }
  }
}

}  // namespace

BatchGrad batch_loss_grad(const MlpModel& m, std::span<const Vec> xs,
                          std::span<const Vec> targets, const LossSpec& spec,
                          RunMode mode, std::uint64_t seed_base, Exec exec) {
  const bool needs_target = spec.kind != LossKind::NegEntropy;
  require(!needs_target || targets.size() == xs.size(),
          "batch_loss_grad: ", targets.size(), " targets for ", xs.size(),
          " inputs");
  BatchGrad out;
  out.tape = make_tape(m);
  if (xs.empty()) return out;

  const double inv_n = 1.0 / static_cast<double>(xs.size());
  static const Vec kNoTarget;
  auto per_sample = [&](std::size_t i) {
    Rng rng(mix_seed(seed_base, i));
    ForwardResult f = forward(m, xs[i], mode, &rng);
    const Vec& y = needs_target ? targets[i] : kNoTarget;
    SampleGrad s;
    s.loss = loss_value(spec, y, f.output);
    s.tape = backward(m, f.cache, loss_grad(spec, y, f.output));
    return s;
  };
  run_blocked(xs.size(), exec, out, inv_n, per_sample);
  return out;
}

std::vector<Vec> predict_probs(const MlpModel& m, std::span<const Vec> xs, Exec exec) {
  std::vector<Vec> out(xs.size());
  parallel_for(xs.size(), exec, [&](std::size_t i) {
    out[i] = forward(m, xs[i], RunMode::Eval).output;
  });
  return out;
}

std::vector<Vec> predict_logits(const MlpModel& m, std::span<const Vec> xs, Exec exec) {
  std::vector<Vec> out(xs.size());
  parallel_for(xs.size(), exec, [&](std::size_t i) {
    ForwardCache c = forward_range(m, xs[i], 0, RunMode::Eval, nullptr);
    out[i] = std::move(c.z.back());
  });
  return out;
}

BatchGrad hidden_mixup_grad(const MlpModel& m, std::span<const Vec> xs,
                            std::span<const MixPair> pairs, std::size_t layer,
                            RunMode mode, std::uint64_t seed_base, Exec exec) {
  require(layer >= 1 && layer < m.layers.size(),
          "hidden_mixup_grad: layer ", layer, " out of range [1, ",
          m.layers.size(), ")");
  BatchGrad out;
  out.tape = make_tape(m);
  if (pairs.empty()) return out;

  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  auto per_sample = [&](std::size_t p) {
    const MixPair& mp = pairs[p];
    require(mp.a < xs.size() && mp.b < xs.size(), "hidden_mixup_grad: pair index out of range");
    Rng rng(mix_seed(seed_base, p));
    ForwardResult fa = forward(m, xs[mp.a], mode, &rng);
    ForwardResult fb = forward(m, xs[mp.b], mode, &rng);
    const Vec& ha = fa.cache.out[layer - 1];
    const Vec& hb = fb.cache.out[layer - 1];
    Vec h(ha.size());
    for (std::size_t k = 0; k < h.size(); ++k)
      h[k] = mp.lambda * ha[k] + (1.0 - mp.lambda) * hb[k];
    ForwardCache top = forward_range(m, h, layer, mode, &rng);

    SampleGrad s;
    s.tape = make_tape(m);
    const Vec& probs = top.out.back();
    s.loss = cross_entropy(mp.y_mix, probs);
    Vec dh = backprop_range(m, top, cross_entropy_grad(mp.y_mix, probs), 1.0, s.tape);
    Vec dha = dh, dhb = dh;
    for (double& v : dha) v *= mp.lambda;
    for (double& v : dhb) v *= 1.0 - mp.lambda;
    backprop_prefix(m, fa.cache, std::move(dha), layer, 1.0, s.tape);
    backprop_prefix(m, fb.cache, std::move(dhb), layer, 1.0, s.tape);
    return s;
  };
  run_blocked(pairs.size(), exec, out, inv_n, per_sample);
  return out;
}

}  // namespace calib
