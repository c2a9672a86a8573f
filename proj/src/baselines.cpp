#include "calib/baselines.hpp"

#include <algorithm>
#include <cmath>

namespace calib {

BaselineKind baseline_from_string(const std::string& s) {
  if (s == "vanilla") return BaselineKind::Vanilla;
  if (s == "temperature-scaling") return BaselineKind::TemperatureScaling;
  if (s == "mc-dropout") return BaselineKind::McDropout;
  if (s == "label-smoothing") return BaselineKind::LabelSmoothing;
  if (s == "entropy-regularized") return BaselineKind::EntropyRegularized;
  if (s == "mixup") return BaselineKind::Mixup;
  if (s == "manifold-mixup") return BaselineKind::ManifoldMixup;
  fail("unknown baseline '", s,
       "' (expected vanilla|temperature-scaling|mc-dropout|label-smoothing|"
       "entropy-regularized|mixup|manifold-mixup)");
}

std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::Vanilla: return "vanilla";
    case BaselineKind::TemperatureScaling: return "temperature-scaling";
    case BaselineKind::McDropout: return "mc-dropout";
    case BaselineKind::LabelSmoothing: return "label-smoothing";
    case BaselineKind::EntropyRegularized: return "entropy-regularized";
    case BaselineKind::Mixup: return "mixup";
    case BaselineKind::ManifoldMixup: return "manifold-mixup";
  }
  return "?";
}

void validate(const BaselineSpec& spec) {
  require(spec.smoothing_epsilon >= 0.0 && spec.smoothing_epsilon < 1.0,
          "baseline: smoothing epsilon must be in [0, 1), got ",
          spec.smoothing_epsilon);
  require(spec.mixup_alpha > 0.0, "baseline: mixup alpha must be > 0, got ",
          spec.mixup_alpha);
  require(spec.mcdp_passes >= 1, "baseline: mc-dropout passes must be >= 1");
  require(spec.erl_weight >= 0.0, "baseline: entropy penalty weight must be >= 0");
}

namespace {

double nll_at_temperature(std::span<const Vec> logits, std::span<const int> labels,
                          double t) {
  double nll = 0.0;
  Vec scaled;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    scaled = logits[i];
    for (double& v : scaled) v /= t;
    Vec p = softmax(scaled);
    nll -= std::log(std::max(p[labels[i]], kProbFloor));
  }
  return nll;
}

}  // namespace

double fit_temperature(std::span<const Vec> dev_logits, std::span<const int> dev_labels) {
  require(!dev_logits.empty(), "fit_temperature: empty dev set");
  require(dev_logits.size() == dev_labels.size(),
          "fit_temperature: ", dev_logits.size(), " logit rows vs ",
          dev_labels.size(), " labels");
  for (std::size_t i = 0; i < dev_labels.size(); ++i)
    require(dev_labels[i] >= 0 &&
                static_cast<std::size_t>(dev_labels[i]) < dev_logits[i].size(),
            "fit_temperature: label ", dev_labels[i], " out of range at row ", i);

  bool single_class = true;
  for (std::size_t i = 1; i < dev_labels.size(); ++i)
    if (dev_labels[i] != dev_labels[0]) {
      single_class = false;
      break;
    }
  if (single_class && dev_logits[0].size() > 1) {
    warn("fit_temperature: dev set contains a single class; returning T = 1");
    return 1.0;
  }

  constexpr double kLo = 0.05, kHi = 10.0;
  double best_t = 1.0, best_nll = nll_at_temperature(dev_logits, dev_labels, 1.0);
  for (double t = kLo; t <= kHi * 1.0000001; t *= 1.1) {
    double nll = nll_at_temperature(dev_logits, dev_labels, t);
    if (nll < best_nll) {
      best_nll = nll;
      best_t = t;
    }
  }

  // golden-section refinement around the best grid point
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = std::max(kLo, best_t / 1.1);
  double b = std::min(kHi, best_t * 1.1);
  double x1 = b - phi * (b - a);
  double x2 = a + phi * (b - a);
  double f1 = nll_at_temperature(dev_logits, dev_labels, x1);
  double f2 = nll_at_temperature(dev_logits, dev_labels, x2);
  while (b - a > 1e-4) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = nll_at_temperature(dev_logits, dev_labels, x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = nll_at_temperature(dev_logits, dev_labels, x2);
    }
  }
  return 0.5 * (a + b);
}

Vec apply_temperature(const Vec& logits, double temperature) {
  require(temperature > 0.0, "apply_temperature: T must be > 0, got ", temperature);
  Vec scaled = logits;
  for (double& v : scaled) v /= temperature;
  return softmax(scaled);
}

Vec mc_dropout_predict(const MlpModel& m, const Vec& x, int passes, Rng& rng) {
  require(passes >= 1, "mc_dropout_predict: passes must be >= 1, got ", passes);
  if (m.dropout_rate <= 0.0) {
    warn("mc_dropout_predict: model has dropout_rate 0; result equals a plain forward");
    return forward(m, x, RunMode::Eval).output;
  }
  Vec mean(m.output_dim(), 0.0);
  for (int p = 0; p < passes; ++p) {
    Rng sub(rng.next_u64());
    ForwardResult f = forward(m, x, RunMode::Train, &sub);
    axpy(1.0 / static_cast<double>(passes), f.output, mean);
  }
  return mean;
}

Vec smooth_labels(const Vec& one_hot_y, double epsilon) {
  require(epsilon >= 0.0 && epsilon < 1.0, "smooth_labels: epsilon must be in [0, 1)");
  require(one_hot_y.size() >= 2, "smooth_labels: need at least 2 classes");
  Vec y = one_hot_y;
  const double off = epsilon / static_cast<double>(y.size() - 1);
  for (double& v : y) v = v == 1.0 ? 1.0 - epsilon : off;
  return y;
}

double erl_loss(const Vec& output, const Vec& y, double weight) {
  require(weight >= 0.0, "erl_loss: weight must be >= 0");
  return cross_entropy(y, output) - weight * entropy(output);
}

std::vector<DrawnPair> draw_mixup_pairs(std::size_t batch_size, double alpha, Rng& rng) {
  require(batch_size >= 2, "mixup: batch size must be >= 2, got ", batch_size);
  require(alpha > 0.0, "mixup: alpha must be > 0");
  std::vector<std::size_t> perm(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) perm[i] = i;
  rng.shuffle(perm);
  std::vector<DrawnPair> pairs(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    pairs[i].a = i;
    pairs[i].b = perm[i];
    pairs[i].lambda = rng.beta(alpha, alpha);
  }
  return pairs;
}

Vec mix_vectors(const Vec& a, const Vec& b, double lambda) {
  require(a.size() == b.size(), "mix: size mismatch ", a.size(), " vs ", b.size());
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = lambda * a[i] + (1.0 - lambda) * b[i];
  return out;
}

std::vector<MixedExample> mixup_batch(const MlpModel& m, std::span<const Vec> xs,
                                      std::span<const Vec> ys, double alpha,
                                      MixupSpace space, std::size_t layer, Rng& rng) {
  require(xs.size() == ys.size(), "mixup_batch: ", xs.size(), " inputs vs ",
          ys.size(), " labels");
  auto pairs = draw_mixup_pairs(xs.size(), alpha, rng);

  std::vector<MixedExample> out(pairs.size());
  if (space == MixupSpace::Input) {
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      out[i].point = mix_vectors(xs[pairs[i].a], xs[pairs[i].b], pairs[i].lambda);
      out[i].y = mix_vectors(ys[pairs[i].a], ys[pairs[i].b], pairs[i].lambda);
      out[i].lambda = pairs[i].lambda;
      out[i].layer = 0;
    }
    return out;
  }

  require(layer >= 1 && layer < m.layers.size(), "mixup_batch: hidden layer ",
          layer, " out of range [1, ", m.layers.size(), ")");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    ForwardResult fa = forward(m, xs[pairs[i].a], RunMode::Eval);
    ForwardResult fb = forward(m, xs[pairs[i].b], RunMode::Eval);
    out[i].point = mix_vectors(fa.cache.out[layer - 1], fb.cache.out[layer - 1],
                               pairs[i].lambda);
    out[i].y = mix_vectors(ys[pairs[i].a], ys[pairs[i].b], pairs[i].lambda);
    out[i].lambda = pairs[i].lambda;
    out[i].layer = layer;
  }
  return out;
}

}  // namespace calib
