#pragma once

#include "calib/baselines.hpp"
#include "calib/data.hpp"
#include "calib/metrics.hpp"
#include "calib/optimizer.hpp"
#include "calib/regularizers.hpp"

namespace calib {

struct ModelConfig {
  std::vector<std::size_t> hidden = {32, 16};
  Activation activation = Activation::Tanh;
  double dropout = 0.1;
  long split_index = -1;  // -1: before the final layer
};

struct OptimConfig {
  AdamConfig adam;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
};

struct DataConfig {
  bool use_files = false;
  GeneratorSpec generator;
  std::string train_path, dev_path, test_in_path, test_ood_path;
  bool standardize = false;
};

// One experiment. Exactly one method is active per run: the manifold
// smoothing regularizers (lambda_on/lambda_off > 0, baseline vanilla) or a
// named baseline with both lambdas zero.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out;
  Exec exec = Exec::Parallel;
  ModelConfig model;
  ManifoldSmoothingConfig smoothing;
  BaselineSpec baseline;
  OptimConfig optim;
  DataConfig data;
  MetricParams metrics;
};

ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);

// Range checks for every section plus the one-method invariant.
void validate(const ExperimentConfig& cfg);

}  // namespace calib
