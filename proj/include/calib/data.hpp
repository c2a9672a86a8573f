#pragma once

#include <string>

#include "calib/linalg.hpp"
#include "calib/rng.hpp"

namespace calib {

struct LabeledExample {
  Vec x;
  int label = 0;
};

// In-distribution train/dev/test splits plus unlabeled OOD test points.
// Splits are disjoint by construction and all vectors share one dimension.
struct DatasetBundle {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> dev;
  std::vector<LabeledExample> test_in;
  std::vector<Vec> test_ood;
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::string provenance;
};

enum class GeneratorKind { GaussianMixture, TwoMoonsMulticlass };
GeneratorKind generator_from_string(const std::string& s);

struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::GaussianMixture;
  std::size_t classes = 6;      // total classes, including held-out OOD ones
  std::size_t held_out = 2;     // classes reserved as the OOD test set
  std::size_t per_class = 100;
  std::size_t dim = 8;          // gaussian mixture only; moons are 2-D
  double center_spread = 1.0;
  double noise = 0.5;
  std::uint64_t seed = 7;
};

void validate(const GeneratorSpec& spec);

// Classes [0, classes - held_out) become the in-distribution task with a
// 60/15/25 train/dev/test split per class; held-out classes supply
// test_ood. Deterministic given the spec.
DatasetBundle generate(const GeneratorSpec& spec);

// Comma-separated text, no header. Labeled rows are "label, v1, v2, ...";
// OOD rows carry no label column. In-distribution labels must cover a
// contiguous 0..K-1 range. test_ood_path may be empty. Malformed rows
// produce errors naming the file and line.
DatasetBundle load_embeddings(const std::string& train_path, const std::string& dev_path,
                              const std::string& test_in_path,
                              const std::string& test_ood_path);

// Per-dimension z-score fit on train, applied to every split in place.
void standardize(DatasetBundle& bundle);

}  // namespace calib
