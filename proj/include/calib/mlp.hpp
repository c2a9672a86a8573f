#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "calib/linalg.hpp"
#include "calib/rng.hpp"

namespace calib {

enum class Activation { Identity, Tanh, Relu, Softmax };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

enum class RunMode { Eval, Train };

struct Layer {
  Mat w;
  Vec b;
  Activation act = Activation::Identity;
};

// Feed-forward classifier. Layers [0, split_index) form the feature
// extractor, layers [split_index, size) the task head. split_index == 0
// means the feature extractor is the identity (features are the raw
// input), which is how linear models are expressed.
struct MlpModel {
  std::vector<Layer> layers;
  std::size_t split_index = 0;
  double dropout_rate = 0.0;

  std::size_t input_dim() const { return layers.front().w.cols; }
  std::size_t output_dim() const { return layers.back().w.rows; }
  std::size_t parameter_count() const;
};

// Builds input_dim -> hidden... -> num_classes with the given hidden
// activation, a softmax head, and Glorot-uniform weights. split_index is
// placed before the final layer.
MlpModel make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                  std::size_t num_classes, Activation hidden_act, double dropout_rate,
                  Rng& rng);

// Shape and invariant checks for models that are about to be trained:
// dimensions chain, final activation is softmax, dropout in [0, 1),
// split_index < layer count.
void validate_model(const MlpModel& m);

struct LayerGrad {
  Mat dw;
  Vec db;
};

// Parameter gradients mirroring the model, plus the input gradient.
struct GradientTape {
  std::vector<LayerGrad> layers;
  Vec input_grad;

  void zero();
  // this += alpha * other
  void axpy(double alpha, const GradientTape& other);
  double max_abs() const;
};

GradientTape make_tape(const MlpModel& m);

// Activations recorded by a forward pass over layers [first, first + n).
// `out` is the layer output after dropout, i.e. the next layer's input.
struct ForwardCache {
  std::size_t first = 0;
  Vec input;
  std::vector<Vec> z;     // pre-activation
  std::vector<Vec> act;   // post-activation, before dropout
  std::vector<Vec> out;   // after dropout
  std::vector<std::vector<std::uint8_t>> mask;  // empty when dropout off
  bool train = false;
  double keep = 1.0;
};

struct ForwardResult {
  Vec features;  // activations entering layer split_index (the input when split_index == 0)
  Vec output;    // final layer activation
  ForwardCache cache;
};

// Dropout (inverted scaling) applies to every layer output except the last,
// in Train mode only. Train mode with dropout_rate > 0 requires an rng.
ForwardResult forward(const MlpModel& m, const Vec& x, RunMode mode, Rng* rng = nullptr);

// Runs layers [first, size) from an arbitrary starting activation. Used by
// hidden-space interpolation.
ForwardCache forward_range(const MlpModel& m, const Vec& input, std::size_t first,
                           RunMode mode, Rng* rng);

// Full backward from d(loss)/d(output). Fills parameter gradients for the
// cached range and the gradient with respect to the cache's input.
GradientTape backward(const MlpModel& m, const ForwardCache& cache, const Vec& output_grad);

// Backward over the cached range only, accumulating into an existing tape
// scaled by `scale`. Returns d(loss)/d(range input) (also scaled).
Vec backprop_range(const MlpModel& m, const ForwardCache& cache, Vec d_out,
                   double scale, GradientTape& tape);

// Backward through layers [0, cut) of a full cache, starting from the
// gradient at the output of layer cut-1. Returns d(loss)/dx.
Vec backprop_prefix(const MlpModel& m, const ForwardCache& cache, Vec d_out,
                    std::size_t cut, double scale, GradientTape& tape);

// d(loss)/dx given d(loss)/d(features), touching only the feature
// extractor. No parameter gradients are produced.
Vec input_grad_from_feature_grad(const MlpModel& m, const ForwardCache& cache,
                                 const Vec& feature_grad);

std::string model_to_json(const MlpModel& m);
MlpModel model_from_json(const std::string& text);
void save_model(const MlpModel& m, const std::string& path);
MlpModel load_model(const std::string& path);

}  // namespace calib
