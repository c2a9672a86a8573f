#pragma once

#include "calib/config.hpp"

namespace calib {

struct EpochStats {
  std::size_t epoch = 0;
  double total = 0.0;   // ce + lambda_on * r_on + lambda_off * r_off
  double ce = 0.0;
  double r_on = 0.0;
  double r_off = 0.0;
  double dev_ece = 0.0;
};

struct RunArtifact {
  MlpModel model;
  std::vector<EpochStats> trace;
  std::vector<PredictionRecord> records;  // test_in records, then OOD
  CalibrationReport report;
  std::optional<double> temperature;  // temperature-scaling runs only
  double wall_seconds = 0.0;
};

DatasetBundle build_data(const DataConfig& cfg);

// Trains per the config and evaluates on test_in (and test_ood when
// present). Aborts with a diagnostic snapshot if the loss goes non-finite.
RunArtifact train(const ExperimentConfig& cfg);
RunArtifact train(const ExperimentConfig& cfg, const DatasetBundle& data);

// Scores a trained model on a bundle: prediction records for test_in and
// test_ood under the baseline's test-time behaviour (MC-dropout passes,
// temperature scaling), then the metric report.
std::vector<PredictionRecord> predict_records(const MlpModel& m,
                                              const DatasetBundle& data,
                                              const ExperimentConfig& cfg,
                                              std::optional<double> temperature);
CalibrationReport evaluate(const MlpModel& m, const DatasetBundle& data,
                           const ExperimentConfig& cfg,
                           std::optional<double> temperature = std::nullopt);

// Writes config echo, model, records, report, reliability/curve/trace CSVs
// into cfg.out (created if needed).
void write_artifact(const RunArtifact& artifact, const ExperimentConfig& cfg);

struct SweepRow {
  double value = 0.0;
  bool failed = false;
  double accuracy = 0.0;
  double ece = 0.0;
  double nbaucc_ood = 0.0;  // NaN when the run had no OOD split
  double nbaucc_mis = 0.0;  // NaN when no misclassifications occurred
};

// Re-trains at every grid value of `parameter` (delta_on | delta_off |
// delta_y), `repeats` seeds per point, and reports per-point means.
std::vector<SweepRow> sweep(const ExperimentConfig& base, const std::string& parameter,
                            const std::vector<double>& grid, std::size_t repeats = 3);

std::string sweep_to_csv(const std::string& parameter, std::span<const SweepRow> rows);

struct AblateRow {
  std::string name;
  double accuracy = 0.0;
  double ece = 0.0;
  double nbaucc_ood = 0.0;
  double nbaucc_mis = 0.0;
};

// Paired-seed comparison of {vanilla, on-only, off-only, both}.
std::vector<AblateRow> ablate(const ExperimentConfig& base, std::size_t repeats = 3);

std::string ablate_to_csv(std::span<const AblateRow> rows);

}  // namespace calib
