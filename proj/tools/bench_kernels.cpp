// Times the batch kernels in serial and OpenMP mode on a synthetic
// workload and checks that both produce identical results.

#include <chrono>
#include <cstdio>
#include <functional>

#include "CLI11.hpp"
#include "calib/metrics.hpp"
#include "calib/regularizers.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using namespace calib;

double time_ms(const std::function<void()>& fn, int iters) {
  fn();  // warm up
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < iters; ++i) fn();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / iters;
}

bool tapes_equal(const GradientTape& a, const GradientTape& b) {
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    if (a.layers[l].dw.data != b.layers[l].dw.data) return false;
    if (a.layers[l].db != b.layers[l].db) return false;
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs OpenMP kernel benchmark"};
  std::size_t dim = 128, hidden = 256, classes = 10, batch = 256, records = 20000;
  int iters = 5;
  app.add_option("--dim", dim, "input dimension");
  app.add_option("--hidden", hidden, "hidden width (two layers)");
  app.add_option("--classes", classes, "number of classes");
  app.add_option("--batch", batch, "batch size");
  app.add_option("--records", records, "record count for the metric kernel");
  app.add_option("--iters", iters, "timing iterations");
  CLI11_PARSE(app, argc, argv);

#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads = %d\n", omp_get_max_threads());
#else
  std::printf("OpenMP not available; parallel mode falls back to serial\n");
#endif

  Rng rng(42);
  MlpModel model = make_mlp(dim, {hidden, hidden / 2}, classes, Activation::Tanh, 0.1, rng);

  std::vector<Vec> xs(batch, Vec(dim));
  std::vector<Vec> ys(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    for (double& v : xs[i]) v = rng.normal();
    ys[i] = one_hot(rng.uniform_index(classes), classes);
  }

  ManifoldSmoothingConfig sm;
  sm.delta_on = 1e-2;
  sm.delta_off = 1e-1;

  std::vector<PredictionRecord> recs;
  recs.reserve(records);
  for (std::size_t i = 0; i < records; ++i) {
    Vec logits(classes);
    for (double& v : logits) v = 2.0 * rng.normal();
    recs.push_back(make_record(static_cast<int>(rng.uniform_index(classes)),
                               i % 7 == 0, softmax(logits)));
  }

  std::printf("%-28s %12s %12s %9s\n", "kernel", "serial ms", "parallel ms", "speedup");
  auto row = [&](const char* name, const std::function<void(Exec)>& fn) {
    double ts = time_ms([&] { fn(Exec::Serial); }, iters);
    double tp = time_ms([&] { fn(Exec::Parallel); }, iters);
    std::printf("%-28s %12.2f %12.2f %8.2fx\n", name, ts, tp, ts / tp);
  };

  row("batch_loss_grad (CE)", [&](Exec e) {
    batch_loss_grad(model, xs, ys, {LossKind::CrossEntropy}, RunMode::Train, 7, e);
  });
  row("generate_on_manifold", [&](Exec e) {
    Rng r(7);
    generate_on_manifold(model, xs, ys, sm, r, e);
  });
  row("generate_off_manifold", [&](Exec e) {
    Rng r(7);
    generate_off_manifold(model, xs, ys, sm, r, e);
  });
  row("predict_probs", [&](Exec e) { predict_probs(model, xs, e); });
  row("nbaucc (M=50)", [&](Exec e) {
    nbaucc(recs, DetectionTask::Ood, 0.5, 50, true, e);
  });

  // parity spot-check
  auto gs = batch_loss_grad(model, xs, ys, {LossKind::CrossEntropy}, RunMode::Train,
                            7, Exec::Serial);
  auto gp = batch_loss_grad(model, xs, ys, {LossKind::CrossEntropy}, RunMode::Train,
                            7, Exec::Parallel);
  bool ok = gs.loss == gp.loss && tapes_equal(gs.tape, gp.tape);
  std::printf("serial/parallel parity: %s\n", ok ? "identical" : "MISMATCH");
  return ok ? 0 : 1;
}
