#include "calib/mlp.hpp"

#include <cmath>
#include <fstream>

#include "calib/numerics.hpp"
#include "json.hpp"

namespace calib {

Activation activation_from_string(const std::string& s) {
  if (s == "identity" || s == "linear") return Activation::Identity;
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  if (s == "softmax") return Activation::Softmax;
  fail("unknown activation '", s, "' (expected identity|tanh|relu|softmax)");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Softmax: return "softmax";
  }
  return "?";
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.w.data.size() + l.b.size();
  return n;
}

MlpModel make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                  std::size_t num_classes, Activation hidden_act, double dropout_rate,
                  Rng& rng) {
  require(input_dim > 0, "make_mlp: input_dim must be positive");
  require(num_classes >= 2, "make_mlp: need at least 2 classes, got ", num_classes);
  MlpModel m;
  m.dropout_rate = dropout_rate;
  std::size_t prev = input_dim;
  auto add_layer = [&](std::size_t out, Activation act) {
    Layer l;
    l.w = Mat(out, prev);
    l.b.assign(out, 0.0);
    l.act = act;
    double lim = std::sqrt(6.0 / static_cast<double>(prev + out));
    for (double& v : l.w.data) v = rng.uniform(-lim, lim);
    m.layers.push_back(std::move(l));
    prev = out;
  };
  for (std::size_t h : hidden) add_layer(h, hidden_act);
  add_layer(num_classes, Activation::Softmax);
  m.split_index = m.layers.size() - 1;
  return m;
}

void validate_model(const MlpModel& m) {
  require(!m.layers.empty(), "model has no layers");
  for (std::size_t i = 0; i + 1 < m.layers.size(); ++i) {
    require(m.layers[i + 1].w.cols == m.layers[i].w.rows,
            "layer ", i + 1, " expects input dim ", m.layers[i + 1].w.cols,
            " but layer ", i, " outputs ", m.layers[i].w.rows);
  }
  for (std::size_t i = 0; i < m.layers.size(); ++i)
    require(m.layers[i].b.size() == m.layers[i].w.rows, "layer ", i,
            ": bias size ", m.layers[i].b.size(), " != rows ", m.layers[i].w.rows);
  require(m.layers.back().act == Activation::Softmax,
          "final layer activation must be softmax");
  require(m.split_index < m.layers.size(), "split_index ", m.split_index,
          " out of range for ", m.layers.size(), " layers");
  require(m.dropout_rate >= 0.0 && m.dropout_rate < 1.0,
          "dropout_rate must be in [0, 1), got ", m.dropout_rate);
}

void GradientTape::zero() {
  for (auto& l : layers) {
    std::fill(l.dw.data.begin(), l.dw.data.end(), 0.0);
    std::fill(l.db.begin(), l.db.end(), 0.0);
  }
  std::fill(input_grad.begin(), input_grad.end(), 0.0);
}

void GradientTape::axpy(double alpha, const GradientTape& other) {
  require(layers.size() == other.layers.size(), "tape axpy: layer count mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    require(layers[i].dw.data.size() == other.layers[i].dw.data.size() &&
                layers[i].db.size() == other.layers[i].db.size(),
            "tape axpy: shape mismatch at layer ", i);
    for (std::size_t k = 0; k < layers[i].dw.data.size(); ++k)
      layers[i].dw.data[k] += alpha * other.layers[i].dw.data[k];
    for (std::size_t k = 0; k < layers[i].db.size(); ++k)
      layers[i].db[k] += alpha * other.layers[i].db[k];
  }
  if (input_grad.size() == other.input_grad.size())
    for (std::size_t k = 0; k < input_grad.size(); ++k)
      input_grad[k] += alpha * other.input_grad[k];
}

double GradientTape::max_abs() const {
  double m = 0.0;
  for (const auto& l : layers) {
    for (double v : l.dw.data) m = std::max(m, std::fabs(v));
    for (double v : l.db) m = std::max(m, std::fabs(v));
  }
  return m;
}

GradientTape make_tape(const MlpModel& m) {
  GradientTape t;
  t.layers.resize(m.layers.size());
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    t.layers[i].dw = Mat(m.layers[i].w.rows, m.layers[i].w.cols);
    t.layers[i].db.assign(m.layers[i].b.size(), 0.0);
  }
  t.input_grad.assign(m.input_dim(), 0.0);
  return t;
}

namespace {

void apply_activation(Activation act, const Vec& z, Vec& h) {
  switch (act) {
    case Activation::Identity:
      h = z;
      break;
    case Activation::Tanh:
      h.resize(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) h[i] = std::tanh(z[i]);
      break;
    case Activation::Relu:
      h.resize(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) h[i] = z[i] > 0.0 ? z[i] : 0.0;
      break;
    case Activation::Softmax:
      h = softmax(z);
      break;
  }
}

// dz from dh, given z and h = act(z).
void activation_backward(Activation act, const Vec& z, const Vec& h, const Vec& dh,
                         Vec& dz) {
  dz.resize(z.size());
  switch (act) {
    case Activation::Identity:
      dz = dh;
      break;
    case Activation::Tanh:
      for (std::size_t i = 0; i < z.size(); ++i) dz[i] = dh[i] * (1.0 - h[i] * h[i]);
      break;
    case Activation::Relu:
      for (std::size_t i = 0; i < z.size(); ++i) dz[i] = z[i] > 0.0 ? dh[i] : 0.0;
      break;
    case Activation::Softmax: {
      double s = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) s += dh[i] * h[i];
      for (std::size_t i = 0; i < z.size(); ++i) dz[i] = h[i] * (dh[i] - s);
      break;
    }
  }
}

}  // namespace

ForwardCache forward_range(const MlpModel& m, const Vec& input, std::size_t first,
                           RunMode mode, Rng* rng) {
  require(first < m.layers.size(), "forward_range: first layer ", first,
          " out of range");
  require(input.size() == m.layers[first].w.cols,
          "forward: input dimension ", input.size(), " does not match layer ",
          first, " expecting ", m.layers[first].w.cols);
  const bool use_dropout = mode == RunMode::Train && m.dropout_rate > 0.0;
  require(!use_dropout || rng != nullptr,
          "forward: train mode with dropout requires an rng");

  const std::size_t n = m.layers.size() - first;
  ForwardCache c;
  c.first = first;
  c.input = input;
  c.train = mode == RunMode::Train;
  c.keep = 1.0 - m.dropout_rate;
  c.z.resize(n);
  c.act.resize(n);
  c.out.resize(n);
  c.mask.resize(n);

  const Vec* cur = &input;
  for (std::size_t k = 0; k < n; ++k) {
    const Layer& l = m.layers[first + k];
    affine(l.w, *cur, l.b, c.z[k]);
    apply_activation(l.act, c.z[k], c.act[k]);
    const bool last = first + k + 1 == m.layers.size();
    if (use_dropout && !last) {
      c.mask[k].resize(c.act[k].size());
      c.out[k].resize(c.act[k].size());
      for (std::size_t i = 0; i < c.act[k].size(); ++i) {
        bool kept = rng->uniform() >= m.dropout_rate;
        c.mask[k][i] = kept ? 1 : 0;
        c.out[k][i] = kept ? c.act[k][i] / c.keep : 0.0;
      }
    } else {
      c.out[k] = c.act[k];
    }
    cur = &c.out[k];
  }
  return c;
}

ForwardResult forward(const MlpModel& m, const Vec& x, RunMode mode, Rng* rng) {
  ForwardResult r;
  r.cache = forward_range(m, x, 0, mode, rng);
  r.output = r.cache.out.back();
  r.features = m.split_index == 0 ? x : r.cache.out[m.split_index - 1];
  return r;
}

namespace {

// Backprop layers [cache.first, cache.first + count) from d_out at the top
// of that span. tape may be null when only the input gradient is wanted.
Vec backprop_span(const MlpModel& m, const ForwardCache& cache, Vec d_out,
                  std::size_t count, double scale, GradientTape* tape) {
  require(count > 0 && count <= cache.z.size(), "backward: bad layer span");
  require(d_out.size() == cache.out[count - 1].size(),
          "backward: output grad size ", d_out.size(), " != ",
          cache.out[count - 1].size());
  Vec dz, dprev;
  for (std::size_t k = count; k-- > 0;) {
    const Layer& l = m.layers[cache.first + k];
    require(cache.z[k].size() == l.w.rows, "backward: stale cache at layer ",
            cache.first + k);
    // undo dropout scaling
    if (!cache.mask[k].empty()) {
      for (std::size_t i = 0; i < d_out.size(); ++i)
        d_out[i] = cache.mask[k][i] ? d_out[i] / cache.keep : 0.0;
    }
    activation_backward(l.act, cache.z[k], cache.act[k], d_out, dz);
    if (tape) {
      const Vec& in = k == 0 ? cache.input : cache.out[k - 1];
      LayerGrad& g = tape->layers[cache.first + k];
      for (std::size_t i = 0; i < l.w.rows; ++i) {
        const double di = scale * dz[i];
        g.db[i] += di;
        double* row = &g.dw.data[i * l.w.cols];
        for (std::size_t j = 0; j < l.w.cols; ++j) row[j] += di * in[j];
      }
    }
    affine_t(l.w, dz, dprev);
    d_out = dprev;
  }
  if (scale != 1.0)
    for (double& v : d_out) v *= scale;
  return d_out;
}

}  // namespace

Vec backprop_range(const MlpModel& m, const ForwardCache& cache, Vec d_out,
                   double scale, GradientTape& tape) {
  require(tape.layers.size() == m.layers.size(), "backward: tape does not mirror model");
  require(!cache.z.empty() && cache.first + cache.z.size() == m.layers.size(),
          "backward: cache does not cover layers [", cache.first,
          ", end) of this model");
  return backprop_span(m, cache, std::move(d_out), cache.z.size(), scale, &tape);
}

Vec backprop_prefix(const MlpModel& m, const ForwardCache& cache, Vec d_out,
                    std::size_t cut, double scale, GradientTape& tape) {
  require(cache.first == 0, "backprop_prefix needs a full forward cache");
  require(tape.layers.size() == m.layers.size(), "backward: tape does not mirror model");
  return backprop_span(m, cache, std::move(d_out), cut, scale, &tape);
}

GradientTape backward(const MlpModel& m, const ForwardCache& cache, const Vec& output_grad) {
  GradientTape tape = make_tape(m);
  Vec din = backprop_range(m, cache, output_grad, 1.0, tape);
  if (cache.first == 0) tape.input_grad = din;
  return tape;
}

Vec input_grad_from_feature_grad(const MlpModel& m, const ForwardCache& cache,
                                 const Vec& feature_grad) {
  require(cache.first == 0, "feature grad needs a full forward cache");
  if (m.split_index == 0) return feature_grad;
  return backprop_span(m, cache, feature_grad, m.split_index, 1.0, nullptr);
}

std::string model_to_json(const MlpModel& m) {
  nlohmann::json j;
  j["split_index"] = m.split_index;
  j["dropout_rate"] = m.dropout_rate;
  j["layers"] = nlohmann::json::array();
  for (const auto& l : m.layers) {
    nlohmann::json jl;
    jl["rows"] = l.w.rows;
    jl["cols"] = l.w.cols;
    jl["w"] = l.w.data;
    jl["b"] = l.b;
    jl["act"] = to_string(l.act);
    j["layers"].push_back(std::move(jl));
  }
  return j.dump(1);
}

MlpModel model_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    fail("model parse error: ", e.what());
  }
  MlpModel m;
  try {
    m.split_index = j.at("split_index").get<std::size_t>();
    m.dropout_rate = j.at("dropout_rate").get<double>();
    for (const auto& jl : j.at("layers")) {
      Layer l;
      l.w.rows = jl.at("rows").get<std::size_t>();
      l.w.cols = jl.at("cols").get<std::size_t>();
      l.w.data = jl.at("w").get<std::vector<double>>();
      l.b = jl.at("b").get<std::vector<double>>();
      l.act = activation_from_string(jl.at("act").get<std::string>());
      require(l.w.data.size() == l.w.rows * l.w.cols, "model: weight size mismatch");
      m.layers.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    fail("model field error: ", e.what());
  }
  return m;
}

void save_model(const MlpModel& m, const std::string& path) {
  std::ofstream f(path);
  require(f.good(), "cannot open '", path, "' for writing");
  f << model_to_json(m) << "\n";
}

MlpModel load_model(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "cannot open model file '", path, "'");
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return model_from_json(text);
}

}  // namespace calib
