#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "calib/regularizers.hpp"
#include "support/fd.hpp"

using namespace calib;

namespace {

struct Batch {
  std::vector<Vec> xs, ys;
};

Batch random_batch(Rng& rng, std::size_t n, std::size_t d, std::size_t k) {
  Batch b;
  b.xs.resize(n);
  b.ys.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    b.xs[i] = testsupport::random_vec(rng, d);
    b.ys[i] = one_hot(rng.uniform_index(k), k);
  }
  return b;
}

// head-only softmax model with fixed weights; split 0 = identity features
MlpModel linear_head(Mat w, Vec b) {
  MlpModel m;
  m.layers.push_back({std::move(w), std::move(b), Activation::Softmax});
  m.split_index = 0;
  return m;
}

}  // namespace

TEST_CASE("projection onto the ball and the sphere") {
  Vec c{1.0, -2.0, 0.5};
  Vec far{2.0, -2.05, 0.5};
  Vec onb = project_ball(c, far, 0.1);
  CHECK(onb == Vec{1.1, -2.05, 0.5});

  Vec s = project_sphere(c, far, 0.1);
  CHECK(std::fabs(linf_norm(Vec{s[0] - c[0], s[1] - c[1], s[2] - c[2]}) - 0.1) <=
        1e-9 * 0.1);

  // inside the ball: the largest-magnitude coordinate is pushed out
  Vec near{1.02, -1.96, 0.5};
  s = project_sphere(c, near, 0.1);
  CHECK(s[0] == 1.02);
  CHECK(s[1] == -1.9);  // offset +0.04 is the largest, pushed to +0.1
  CHECK(s[2] == 0.5);

  // all-zero offset: first coordinate pushed to +radius
  s = project_sphere(c, c, 0.1);
  CHECK(s == Vec{1.1, -2.0, 0.5});
}

TEST_CASE("ball, sphere and label constraints over random triples") {
  Rng rng(101);
  ManifoldSmoothingConfig cfg;
  cfg.delta_on = 0.05;
  cfg.delta_off = 0.2;
  cfg.delta_y = 0.3;

  for (int it = 0; it < 60; ++it) {
    std::size_t d = 2 + rng.uniform_index(5);
    std::size_t k = 2 + rng.uniform_index(4);
    std::size_t n = 2 + rng.uniform_index(6);
    MlpModel m = testsupport::random_model(rng, d, k);
    Batch b = random_batch(rng, n, d, k);
    Rng gen(rng.next_u64());

    auto on = generate_on_manifold(m, b.xs, b.ys, cfg, gen);
    REQUIRE(on.size() == n);
    for (const auto& s : on) {
      Vec diff(d);
      for (std::size_t j = 0; j < d; ++j)
        diff[j] = s.x_prime[j] - b.xs[s.anchor_index][j];
      CHECK(linf_norm(diff) <= cfg.delta_on + 1e-12);
      CHECK(is_prob_vector(s.y_prime));
      // one-hot inputs: the mass split is exact
      if (s.partner_index != s.anchor_index &&
          b.ys[s.partner_index] != b.ys[s.anchor_index]) {
        std::size_t nonzero = 0;
        for (double v : s.y_prime) nonzero += v != 0.0 ? 1 : 0;
        CHECK(nonzero == 2);
        bool found_main = false, found_partner = false;
        for (double v : s.y_prime) {
          if (v == 1.0 - cfg.delta_y) found_main = true;
          if (v == cfg.delta_y) found_partner = true;
        }
        CHECK(found_main);
        CHECK(found_partner);
      } else {
        CHECK(s.y_prime == b.ys[s.anchor_index]);
      }
    }

    auto off = generate_off_manifold(m, b.xs, b.ys, cfg, gen);
    REQUIRE(off.size() == n);
    for (const auto& s : off) {
      Vec diff(d);
      for (std::size_t j = 0; j < d; ++j)
        diff[j] = s.x_dprime[j] - b.xs[s.anchor_index][j];
      CHECK(std::fabs(linf_norm(diff) - cfg.delta_off) <= 1e-9 * cfg.delta_off);
    }
  }
}

TEST_CASE("delta_y = 0 keeps the anchor label exactly") {
  Rng rng(103);
  MlpModel m = testsupport::random_model(rng, 3, 3);
  Batch b = random_batch(rng, 6, 3, 3);
  ManifoldSmoothingConfig cfg;
  cfg.delta_y = 0.0;
  Rng gen(5);
  auto on = generate_on_manifold(m, b.xs, b.ys, cfg, gen);
  for (const auto& s : on) CHECK(s.y_prime == b.ys[s.anchor_index]);
}

TEST_CASE("generation is deterministic and identical across exec modes") {
  Rng rng(107);
  MlpModel m = testsupport::random_model(rng, 4, 3);
  Batch b = random_batch(rng, 8, 4, 3);
  ManifoldSmoothingConfig cfg;

  Rng g1(77), g2(77), g3(77), g4(77);
  auto a1 = generate_on_manifold(m, b.xs, b.ys, cfg, g1, Exec::Serial);
  auto a2 = generate_on_manifold(m, b.xs, b.ys, cfg, g2, Exec::Parallel);
  REQUIRE(a1.size() == a2.size());
  for (std::size_t i = 0; i < a1.size(); ++i) {
    CHECK(a1[i].x_prime == a2[i].x_prime);
    CHECK(a1[i].y_prime == a2[i].y_prime);
    CHECK(a1[i].partner_index == a2[i].partner_index);
  }
  auto o1 = generate_off_manifold(m, b.xs, b.ys, cfg, g3, Exec::Serial);
  auto o2 = generate_off_manifold(m, b.xs, b.ys, cfg, g4, Exec::Parallel);
  REQUIRE(o1.size() == o2.size());
  for (std::size_t i = 0; i < o1.size(); ++i)
    CHECK(o1[i].x_dprime == o2[i].x_dprime);
}

TEST_CASE("empty batch is an error") {
  Rng rng(109);
  MlpModel m = testsupport::random_model(rng, 3, 2);
  ManifoldSmoothingConfig cfg;
  Rng gen(1);
  CHECK_THROWS_AS(generate_on_manifold(m, {}, {}, cfg, gen), Error);
  CHECK_THROWS_AS(generate_off_manifold(m, {}, {}, cfg, gen), Error);
}

TEST_CASE("zero-norm features skip the sample with a warning") {
  // zero weights + tanh make every feature vector exactly zero
  MlpModel m;
  m.layers.push_back({Mat(3, 2), {0.0, 0.0, 0.0}, Activation::Tanh});
  m.layers.push_back({Mat(2, 3), {0.0, 0.0}, Activation::Softmax});
  m.split_index = 1;
  ManifoldSmoothingConfig cfg;
  Rng gen(3);
  std::vector<Vec> xs{{1.0, 0.0}, {0.0, 1.0}};
  std::vector<Vec> ys{{1.0, 0.0}, {0.0, 1.0}};
  auto on = generate_on_manifold(m, xs, ys, cfg, gen);
  CHECK(on.empty());
}

TEST_CASE("identity feature extractor: one step obeys the ball and shrinks the distance") {
  // f = identity on R^2, softmax head on top
  Mat w(2, 2);
  w(0, 0) = 1.0;
  w(1, 1) = 1.0;
  MlpModel m = linear_head(std::move(w), {0.0, 0.0});

  std::vector<Vec> xs{{1.0, 0.0}, {0.0, 1.0}};
  std::vector<Vec> ys{{1.0, 0.0}, {0.0, 1.0}};
  ManifoldSmoothingConfig cfg;
  cfg.delta_on = 0.1;

  // pick a master seed whose replicated draw pairs anchor 0 with partner 1
  std::uint64_t master_seed = 0;
  std::uint64_t anchor_seed = 0;
  for (std::uint64_t s = 1; s < 64; ++s) {
    Rng probe(s);
    std::uint64_t a0 = probe.next_u64();
    Rng local(a0);
    if (local.uniform_index(2) == 1) {
      master_seed = s;
      anchor_seed = a0;
      break;
    }
  }
  REQUIRE(master_seed != 0);

  Rng gen(master_seed);
  auto on = generate_on_manifold(m, xs, ys, cfg, gen);
  const OnManifoldSample* s0 = nullptr;
  for (const auto& s : on)
    if (s.anchor_index == 0) s0 = &s;
  REQUIRE(s0 != nullptr);
  REQUIRE(s0->partner_index == 1);

  CHECK(std::fabs(s0->x_prime[0] - 1.0) <= 0.1 + 1e-12);
  CHECK(std::fabs(s0->x_prime[1] - 0.0) <= 0.1 + 1e-12);

  // replicate the random init (partner draw, then d uniform offsets)
  Rng local(anchor_seed);
  (void)local.uniform_index(2);
  Vec init{1.0 + local.uniform(-0.1, 0.1), 0.0 + local.uniform(-0.1, 0.1)};
  double d_init = cosine_distance(init, xs[1]);
  double d_final = cosine_distance(s0->x_prime, xs[1]);
  CHECK(d_final < d_init);
}

TEST_CASE("single zero-init step does not increase the feature metric") {
  Rng rng(113);
  ManifoldSmoothingConfig cfg;
  cfg.delta_on = 1e-6;
  cfg.delta_off = 1e-6;
  cfg.zero_init = true;

  for (int it = 0; it < 30; ++it) {
    std::size_t d = 2 + rng.uniform_index(4);
    std::size_t k = 2 + rng.uniform_index(3);
    MlpModel m = testsupport::random_model(rng, d, k);
    Batch b = random_batch(rng, 4, d, k);
    Rng gen(rng.next_u64());

    auto on = generate_on_manifold(m, b.xs, b.ys, cfg, gen);
    for (const auto& s : on) {
      ForwardResult fa = forward(m, b.xs[s.anchor_index], RunMode::Eval);
      Vec f_partner = forward(m, b.xs[s.partner_index], RunMode::Eval).features;
      // skip numerically flat anchors (e.g. self pairs): sign() amplifies
      // fp noise there and only second-order wiggle remains
      Vec gx = input_grad_from_feature_grad(
          m, fa.cache, cosine_distance_grad_a(fa.features, f_partner));
      double g1 = 0.0;
      for (double v : gx) g1 += std::fabs(v);
      if (g1 < 1e-3) continue;
      double before = cosine_distance(fa.features, f_partner);
      double after =
          cosine_distance(forward(m, s.x_prime, RunMode::Eval).features, f_partner);
      CHECK(after < before);
    }

    // symmetric ascent check for the off-manifold loss
    auto off = generate_off_manifold(m, b.xs, b.ys, cfg, gen);
    for (const auto& s : off) {
      ForwardResult fa = forward(m, b.xs[s.anchor_index], RunMode::Eval);
      GradientTape t = backward(
          m, fa.cache, cross_entropy_grad(b.ys[s.anchor_index], fa.output));
      double g1 = 0.0;
      for (double v : t.input_grad) g1 += std::fabs(v);
      if (g1 < 1e-3) continue;
      double before = cross_entropy(b.ys[s.anchor_index], fa.output);
      double after = cross_entropy(b.ys[s.anchor_index],
                                   forward(m, s.x_dprime, RunMode::Eval).output);
      CHECK(after > before);
    }
  }
}

TEST_CASE("one dimensional linear head: the off-manifold step lands on the loss-increasing side") {
  // p = softmax(w1 x, w2 x); for y = class 0 the input gradient of the loss
  // is p1 (w2 - w1), so the sign step moves along sign(w2 - w1)
  Mat w(2, 1);
  w(0, 0) = 0.5;
  w(1, 0) = 2.0;
  MlpModel m = linear_head(std::move(w), {0.0, 0.0});

  std::vector<Vec> xs{{0.3}};
  std::vector<Vec> ys{{1.0, 0.0}};
  ManifoldSmoothingConfig cfg;
  cfg.delta_off = 0.05;

  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng gen(seed);
    auto off = generate_off_manifold(m, xs, ys, cfg, gen);
    REQUIRE(off.size() == 1);
    CHECK(off[0].x_dprime[0] == doctest::Approx(0.3 + 0.05).epsilon(1e-12));
  }
}

TEST_CASE("flat loss: the sample is the sphere projection of the random init") {
  // zero-weight softmax head gives a constant output, so the loss gradient
  // in x vanishes identically
  MlpModel m = linear_head(Mat(2, 2), {0.0, 0.0});
  std::vector<Vec> xs{{0.4, -0.7}};
  std::vector<Vec> ys{{1.0, 0.0}};
  ManifoldSmoothingConfig cfg;
  cfg.delta_off = 0.2;

  std::uint64_t master_seed = 9;
  Rng gen(master_seed);
  auto off = generate_off_manifold(m, xs, ys, cfg, gen);
  REQUIRE(off.size() == 1);

  Rng replay(master_seed);
  Rng local(replay.next_u64());
  Vec init{0.4 + local.uniform(-0.2, 0.2), -0.7 + local.uniform(-0.2, 0.2)};
  Vec expected = project_sphere(xs[0], init, 0.2);
  CHECK(off[0].x_dprime == expected);
}

TEST_CASE("r_on values and gradient") {
  // zero-weight head: output is always (0.5, 0.5)
  MlpModel m = linear_head(Mat(2, 2), {0.0, 0.0});

  std::vector<OnManifoldSample> samples(1);
  samples[0].x_prime = {0.2, 0.1};
  samples[0].y_prime = {1.0, 0.0};
  BatchGrad g = r_on(m, samples, RunMode::Eval, 0);
  CHECK(g.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // model output equal to y': zero loss
  samples[0].y_prime = {0.5, 0.5};
  g = r_on(m, samples, RunMode::Eval, 0);
  CHECK(g.loss == doctest::Approx(0.0));

  // empty sample list: zero loss, zero tape
  g = r_on(m, std::vector<OnManifoldSample>{}, RunMode::Eval, 0);
  CHECK(g.loss == 0.0);
  CHECK(g.tape.max_abs() == 0.0);

  // gradient against finite differences on a random model
  Rng rng(127);
  MlpModel rm = testsupport::random_model(rng, 3, 3);
  std::vector<OnManifoldSample> rs(4);
  for (auto& s : rs) {
    s.x_prime = testsupport::random_vec(rng, 3);
    s.y_prime = softmax(testsupport::random_vec(rng, 3));
  }
  BatchGrad rg = r_on(rm, rs, RunMode::Eval, 0);
  auto loss_of = [&](const MlpModel& mm) {
    double acc = 0.0;
    for (const auto& s : rs)
      acc += kl_divergence(s.y_prime, forward(mm, s.x_prime, RunMode::Eval).output);
    return acc / static_cast<double>(rs.size());
  };
  GradientTape fd = testsupport::fd_param_grad(rm, loss_of);
  CHECK(testsupport::max_rel_err(rg.tape, fd) < 1e-5);
}

TEST_CASE("r_off values and gradient") {
  // uniform output: loss is exactly -log K (the minimum)
  MlpModel m = linear_head(Mat(4, 2), {0.0, 0.0, 0.0, 0.0});
  std::vector<OffManifoldSample> samples(2);
  samples[0].x_dprime = {0.3, 0.4};
  samples[1].x_dprime = {-1.0, 0.2};
  BatchGrad g = r_off(m, samples, RunMode::Eval, 0);
  CHECK(g.loss == doctest::Approx(-std::log(4.0)).epsilon(1e-12));

  // near one-hot output: loss approaches 0 (the maximum)
  Mat w(2, 1);
  w(0, 0) = 50.0;
  w(1, 0) = 0.0;
  MlpModel peaked = linear_head(std::move(w), {0.0, 0.0});
  std::vector<OffManifoldSample> one{{{1.0}, 0}};
  g = r_off(peaked, one, RunMode::Eval, 0);
  CHECK(std::fabs(g.loss) < 1e-12);

  // K = 2, output (0.7, 0.3): hand entropy
  Mat w2(2, 1);
  w2(0, 0) = std::log(0.7 / 0.3);
  w2(1, 0) = 0.0;
  MlpModel biased = linear_head(std::move(w2), {0.0, 0.0});
  g = r_off(biased, one, RunMode::Eval, 0);
  CHECK(g.loss == doctest::Approx(-0.6108643020548935).epsilon(1e-9));

  // bounds: -log K <= loss <= 0, and FD check
  Rng rng(131);
  MlpModel rm = testsupport::random_model(rng, 3, 4);
  std::vector<OffManifoldSample> rs(5);
  for (auto& s : rs) s.x_dprime = testsupport::random_vec(rng, 3);
  g = r_off(rm, rs, RunMode::Eval, 0);
  CHECK(g.loss >= -std::log(4.0) - 1e-12);
  CHECK(g.loss <= 0.0);
  auto loss_of = [&](const MlpModel& mm) {
    double acc = 0.0;
    for (const auto& s : rs)
      acc += -entropy(forward(mm, s.x_dprime, RunMode::Eval).output);
    return acc / static_cast<double>(rs.size());
  };
  GradientTape fd = testsupport::fd_param_grad(rm, loss_of);
  CHECK(testsupport::max_rel_err(g.tape, fd) < 1e-5);
}

TEST_CASE("cosine-similarity metric reverses the interpolation direction") {
  // descending the raw similarity pushes features away from the partner
  Mat w(2, 2);
  w(0, 0) = 1.0;
  w(1, 1) = 1.0;
  MlpModel m = linear_head(std::move(w), {0.0, 0.0});
  std::vector<Vec> xs{{1.0, 0.1}, {0.0, 1.0}};
  std::vector<Vec> ys{{1.0, 0.0}, {0.0, 1.0}};

  ManifoldSmoothingConfig cfg;
  cfg.delta_on = 0.05;
  cfg.zero_init = true;
  cfg.on_metric = OnManifoldMetric::CosineSimilarity;

  Rng gen(21);
  auto on = generate_on_manifold(m, xs, ys, cfg, gen);
  for (const auto& s : on) {
    if (s.anchor_index == s.partner_index) continue;
    double before = cosine_similarity(xs[s.anchor_index], xs[s.partner_index]);
    double after = cosine_similarity(s.x_prime, xs[s.partner_index]);
    CHECK(after <= before + 1e-12);
  }
}
