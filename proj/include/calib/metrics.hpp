#pragma once

#include <optional>
#include <string>

#include "calib/batch_ops.hpp"

namespace calib {

// One scored sample. OOD records carry is_ood = true and true_label = -1,
// so they can never count as correct.
struct PredictionRecord {
  int true_label = -1;
  bool is_ood = false;
  int predicted_label = 0;
  double confidence = 0.0;  // max(probs) == probs[predicted_label]
  Vec probs;
};

// Builds a record from a probability vector; predicted label is the argmax
// (lowest index on ties). Pass true_label = -1 with is_ood = true for OOD.
PredictionRecord make_record(int true_label, bool is_ood, const Vec& probs);

inline bool is_correct(const PredictionRecord& r) {
  return !r.is_ood && r.predicted_label == r.true_label;
}

enum class BinningScheme { EqualWidth, EqualMass };
BinningScheme binning_from_string(const std::string& s);

struct BinStats {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double accuracy = 0.0;
  double calib_error = 0.0;  // |accuracy - mean_confidence|
};

// Equal-width: bin m covers ((m-1)/M, m/M], confidence 0 lands in bin 1.
// Equal-mass: records sorted by confidence, split into contiguous
// near-equal chunks. Errors on empty input.
std::vector<BinStats> bin_predictions(std::span<const PredictionRecord> records,
                                      std::size_t num_bins, BinningScheme scheme);

// Bin-weighted average of |accuracy - mean confidence|.
double ece(std::span<const PredictionRecord> records, std::size_t num_bins = 10,
           BinningScheme scheme = BinningScheme::EqualWidth);

enum class DetectionTask { Misclassification, Ood };

// F1 of "confidence below tau" as a detector of the task's positives.
// strict selects `confidence < tau` (default) vs `<=`. Zero flagged or zero
// true positives give F1 = 0; a record set with no positives is an error.
double detection_f1(std::span<const PredictionRecord> records, DetectionTask task,
                    double tau, bool strict = true);

struct CalibrationCurve {
  double tau_upper = 0.5;
  std::vector<double> f1;  // f1[i-1] at tau = tau_upper * i / M, i = 1..M
};

CalibrationCurve calibration_curve(std::span<const PredictionRecord> records,
                                   DetectionTask task, double tau_upper,
                                   std::size_t m = 50, bool strict = true,
                                   Exec exec = Exec::Parallel);

// Mean F1 over the M-point threshold grid (0, tau_upper].
double nbaucc(std::span<const PredictionRecord> records, DetectionTask task,
              double tau_upper, std::size_t m = 50, bool strict = true,
              Exec exec = Exec::Parallel);

// Rank-based AUROC with midrank tie handling; score is 1 - confidence.
// Errors when either class is absent.
double auroc(std::span<const PredictionRecord> records, DetectionTask task);

// Counts per equal-width confidence bin; empty input gives all zeros.
std::vector<std::size_t> confidence_histogram(std::span<const PredictionRecord> records,
                                              std::size_t num_bins);

struct MetricParams {
  std::size_t ece_bins = 10;
  BinningScheme scheme = BinningScheme::EqualWidth;
  std::vector<double> tau_upper = {0.5, 0.7, 1.0};
  std::size_t nbaucc_m = 50;
  bool strict = true;
};

struct TaskScores {
  std::vector<CalibrationCurve> curves;      // one per tau_upper
  std::vector<double> nbaucc;                // aligned with curves
};

struct CalibrationReport {
  std::size_t n_in = 0;
  std::size_t n_ood = 0;
  double accuracy = 0.0;
  double ece = 0.0;
  std::vector<BinStats> bins;
  std::optional<TaskScores> misclassification;  // absent when no errors exist
  std::optional<TaskScores> ood;                // absent when no OOD records
  std::optional<double> auroc_ood;
  std::vector<std::size_t> hist_in;
  std::vector<std::size_t> hist_ood;
  std::vector<std::string> notices;
};

// In-distribution metrics over the non-OOD records; detection metrics over
// the applicable subsets. Missing positives downgrade to a notice.
CalibrationReport build_report(std::span<const PredictionRecord> records,
                               const MetricParams& params, Exec exec = Exec::Parallel);

// Line format: "<true label|OOD>, <predicted>, p0, p1, ..." with full
// precision, one record per line.
std::string record_to_line(const PredictionRecord& r);
PredictionRecord record_from_line(const std::string& line, std::size_t line_no);
void save_records(const std::string& path, std::span<const PredictionRecord> records);
std::vector<PredictionRecord> load_records(const std::string& path);

std::string report_to_json(const CalibrationReport& rep);
std::string report_to_text(const CalibrationReport& rep);

}  // namespace calib
