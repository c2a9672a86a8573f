#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "calib/numerics.hpp"
#include "calib/rng.hpp"
#include "support/fd.hpp"

using namespace calib;

TEST_CASE("softmax basics") {
  Vec p = softmax({0.0, 0.0, 0.0, 0.0});
  for (double v : p) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

  // large logits must not overflow
  Vec q = softmax({1000.0, 0.0});
  CHECK(q[0] == doctest::Approx(1.0));
  CHECK(q[1] == doctest::Approx(0.0));
  CHECK(std::isfinite(q[0]));

  // hand value: e^2 / (e^2 + 1)
  Vec r = softmax({2.0, 0.0});
  CHECK(r[0] == doctest::Approx(0.8807970779778823).epsilon(1e-12));
  CHECK(r[1] == doctest::Approx(0.11920292202211755).epsilon(1e-12));

  CHECK_THROWS_AS(softmax({1.0, std::nan("")}), Error);
}

TEST_CASE("softmax sums to one and is shift invariant") {
  Rng rng(11);
  for (int it = 0; it < 200; ++it) {
    std::size_t k = 2 + rng.uniform_index(6);
    Vec z(k);
    for (double& v : z) v = rng.uniform(-30.0, 30.0);
    Vec p = softmax(z);
    double s = 0.0;
    for (double v : p) s += v;
    CHECK(std::fabs(s - 1.0) <= 1e-9);

    double c = rng.uniform(-50.0, 50.0);
    Vec zc = z;
    for (double& v : zc) v += c;
    Vec pc = softmax(zc);
    for (std::size_t i = 0; i < k; ++i)
      CHECK(pc[i] == doctest::Approx(p[i]).epsilon(1e-9));
  }
}

TEST_CASE("entropy values") {
  CHECK(entropy({1.0, 0.0}) == 0.0);
  CHECK(entropy({0.25, 0.25, 0.25, 0.25}) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(entropy({0.7, 0.3}) == doctest::Approx(0.6108643020548935).epsilon(1e-12));
}

TEST_CASE("kl divergence values") {
  Vec p{0.3, 0.7};
  CHECK(kl_divergence(p, p) == doctest::Approx(0.0));
  CHECK(kl_divergence({1.0, 0.0}, {0.5, 0.5}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(kl_divergence({0.9, 0.1}, {0.5, 0.5}) ==
        doctest::Approx(0.3680642071684971).epsilon(1e-9));
}

TEST_CASE("cross entropy values") {
  CHECK(cross_entropy({1.0, 0.0}, {1.0, 0.0}) == doctest::Approx(0.0));
  CHECK(cross_entropy({0.0, 1.0, 0.0, 0.0}, {0.25, 0.25, 0.25, 0.25}) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(cross_entropy({1.0, 0.0}, {0.8807970779778823, 0.11920292202211755}) ==
        doctest::Approx(0.1269280110429725).epsilon(1e-9));
}

TEST_CASE("entropy, kl and cross entropy satisfy the decomposition") {
  Rng rng(5);
  for (int it = 0; it < 200; ++it) {
    std::size_t k = 2 + rng.uniform_index(5);
    Vec y = softmax(testsupport::random_vec(rng, k, 2.0));
    Vec q = softmax(testsupport::random_vec(rng, k, 2.0));
    CHECK(entropy(y) >= 0.0);
    CHECK(entropy(y) <= std::log(static_cast<double>(k)) + 1e-12);
    CHECK(kl_divergence(y, q) >= -1e-12);
    CHECK(cross_entropy(y, q) >= entropy(y) - 1e-9);
    CHECK(std::fabs(cross_entropy(y, q) - kl_divergence(y, q) - entropy(y)) <= 1e-9);
  }
}

TEST_CASE("cosine distance") {
  CHECK(cosine_distance({1.0, 2.0}, {1.0, 2.0}) == doctest::Approx(0.0));
  CHECK(cosine_distance({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(1.0));
  CHECK(cosine_distance({1.0, 0.0}, {1.0, 1.0}) ==
        doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(cosine_distance({0.0, 0.0}, {1.0, 0.0}), Error);
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(17);
  for (int it = 0; it < 50; ++it) {
    std::size_t k = 2 + rng.uniform_index(4);
    // keep probabilities away from the boundary: the 1/p gradients are too
    // ill-conditioned there for a central-difference comparison
    Vec p = softmax(testsupport::random_vec(rng, k, 1.0));
    Vec y = softmax(testsupport::random_vec(rng, k, 1.0));
    double pmin = 1.0;
    for (double v : p) pmin = std::min(pmin, v);
    for (double v : y) pmin = std::min(pmin, v);
    if (pmin < 0.02) continue;

    Vec g = neg_entropy_grad(p);
    Vec fd = testsupport::fd_input_grad(p, [](const Vec& v) { return -entropy(v); });
    CHECK(testsupport::max_rel_err(g, fd) < 1e-5);

    g = kl_divergence_grad_q(y, p);
    fd = testsupport::fd_input_grad(p, [&](const Vec& v) { return kl_divergence(y, v); });
    CHECK(testsupport::max_rel_err(g, fd) < 1e-5);

    g = cross_entropy_grad(y, p);
    fd = testsupport::fd_input_grad(p, [&](const Vec& v) { return cross_entropy(y, v); });
    CHECK(testsupport::max_rel_err(g, fd) < 1e-5);
  }
}

TEST_CASE("cosine gradients match finite differences") {
  Rng rng(23);
  for (int it = 0; it < 50; ++it) {
    std::size_t d = 2 + rng.uniform_index(5);
    Vec a = testsupport::random_vec(rng, d);
    Vec b = testsupport::random_vec(rng, d);
    if (norm2(a) < 0.1 || norm2(b) < 0.1) continue;
    Vec g = cosine_distance_grad_a(a, b);
    Vec fd = testsupport::fd_input_grad(a, [&](const Vec& v) {
      return cosine_distance(v, b);
    });
    CHECK(testsupport::max_rel_err(g, fd) < 1e-5);

    g = cosine_similarity_grad_a(a, b);
    fd = testsupport::fd_input_grad(a, [&](const Vec& v) {
      return cosine_similarity(v, b);
    });
    CHECK(testsupport::max_rel_err(g, fd) < 1e-5);
  }
}

TEST_CASE("one_hot") {
  Vec y = one_hot(2, 4);
  CHECK(y == Vec{0.0, 0.0, 1.0, 0.0});
  CHECK_THROWS_AS(one_hot(4, 4), Error);
}
