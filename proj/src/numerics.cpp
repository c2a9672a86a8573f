#include "calib/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace calib {

namespace {
double clamped(double p) { return std::max(p, kProbFloor); }
}  // namespace

Vec softmax(const Vec& logits) {
  require(!logits.empty(), "softmax: empty logit vector");
  require(all_finite(logits), "softmax: non-finite logits");
  double m = *std::max_element(logits.begin(), logits.end());
  Vec p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

bool is_prob_vector(const Vec& p, double tol) {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0 + tol)) return false;
    s += v;
  }
  return std::fabs(s - 1.0) <= tol;
}

double entropy(const Vec& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(clamped(v));
  return h;
}

Vec neg_entropy_grad(const Vec& p) {
  Vec g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    // derivative of p*log(max(p, floor))
    g[i] = p[i] > kProbFloor ? std::log(p[i]) + 1.0 : std::log(kProbFloor);
  }
  return g;
}

double kl_divergence(const Vec& p, const Vec& q) {
  require(p.size() == q.size(), "kl_divergence: size mismatch ", p.size(),
          " vs ", q.size());
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) d += p[i] * (std::log(clamped(p[i])) - std::log(clamped(q[i])));
  return d;
}

Vec kl_divergence_grad_q(const Vec& p, const Vec& q) {
  Vec g(q.size(), 0.0);
  for (std::size_t i = 0; i < q.size(); ++i)
    if (q[i] > kProbFloor) g[i] = -p[i] / q[i];
  return g;
}

double cross_entropy(const Vec& y, const Vec& q) {
  require(y.size() == q.size(), "cross_entropy: size mismatch ", y.size(),
          " vs ", q.size());
  double c = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] > 0.0) c -= y[i] * std::log(clamped(q[i]));
  return c;
}

Vec cross_entropy_grad(const Vec& y, const Vec& q) {
  Vec g(q.size(), 0.0);
  for (std::size_t i = 0; i < q.size(); ++i)
    if (q[i] > kProbFloor) g[i] = -y[i] / q[i];
  return g;
}

double cosine_similarity(const Vec& a, const Vec& b) {
  require(a.size() == b.size(), "cosine: size mismatch ", a.size(), " vs ",
          b.size());
  double na = norm2(a), nb = norm2(b);
  require(na > 0.0 && nb > 0.0, "cosine: zero-norm input");
  return dot(a, b) / (na * nb);
}

Vec cosine_similarity_grad_a(const Vec& a, const Vec& b) {
  double na = norm2(a), nb = norm2(b);
  require(na > 0.0 && nb > 0.0, "cosine: zero-norm input");
  double s = dot(a, b) / (na * nb);
  Vec g(a.size());
  // d<a/|a|, b/|b|>/da = (b/|b| - s * a/|a|) / |a|
  for (std::size_t i = 0; i < a.size(); ++i)
    g[i] = (b[i] / nb - s * a[i] / na) / na;
  return g;
}

double cosine_distance(const Vec& a, const Vec& b) {
  return 1.0 - cosine_similarity(a, b);
}

Vec cosine_distance_grad_a(const Vec& a, const Vec& b) {
  Vec g = cosine_similarity_grad_a(a, b);
  for (double& v : g) v = -v;
  return g;
}

Vec one_hot(std::size_t k, std::size_t num_classes) {
  require(k < num_classes, "one_hot: class ", k, " out of range [0, ",
          num_classes, ")");
  Vec y(num_classes, 0.0);
  y[k] = 1.0;
  return y;
}

}  // namespace calib
