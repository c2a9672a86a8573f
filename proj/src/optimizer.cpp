#include "calib/optimizer.hpp"

#include <cmath>

namespace calib {

AdamState make_adam(const MlpModel& model, const AdamConfig& cfg) {
  require(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0, "adam: beta1 must be in [0, 1)");
  require(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0, "adam: beta2 must be in [0, 1)");
  require(cfg.lr > 0.0, "adam: learning rate must be positive");
  AdamState s;
  s.cfg = cfg;
  GradientTape zeros = make_tape(model);
  s.m = zeros.layers;
  s.v = std::move(zeros.layers);
  return s;
}

void adam_step(MlpModel& model, const GradientTape& tape, AdamState& state) {
  require(tape.layers.size() == model.layers.size(),
          "adam: tape layer count ", tape.layers.size(), " != model ",
          model.layers.size());
  state.t += 1;
  const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  auto update = [&](double& p, double g, double& m, double& v) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    const double mhat = m / c1;
    const double vhat = v / c2;
    p -= state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.eps);
  };
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    Layer& layer = model.layers[l];
    const LayerGrad& g = tape.layers[l];
    require(g.dw.data.size() == layer.w.data.size() &&
                g.db.size() == layer.b.size(),
            "adam: gradient shape mismatch at layer ", l);
    for (std::size_t k = 0; k < layer.w.data.size(); ++k)
      update(layer.w.data[k], g.dw.data[k], state.m[l].dw.data[k],
             state.v[l].dw.data[k]);
    for (std::size_t k = 0; k < layer.b.size(); ++k)
      update(layer.b[k], g.db[k], state.m[l].db[k], state.v[l].db[k]);
  }
}

}  // namespace calib
