#include "calib/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace calib {

PredictionRecord make_record(int true_label, bool is_ood, const Vec& probs) {
  require(!probs.empty(), "record: empty probability vector");
  require(is_prob_vector(probs, 1e-6), "record: probabilities do not form a simplex point");
  require(is_ood || true_label >= 0, "record: in-distribution record needs a label");
  PredictionRecord r;
  r.true_label = is_ood ? -1 : true_label;
  r.is_ood = is_ood;
  r.probs = probs;
  r.predicted_label = static_cast<int>(
      std::max_element(probs.begin(), probs.end()) - probs.begin());
  r.confidence = probs[r.predicted_label];
  return r;
}

BinningScheme binning_from_string(const std::string& s) {
  if (s == "equal-width") return BinningScheme::EqualWidth;
  if (s == "equal-mass") return BinningScheme::EqualMass;
  fail("unknown binning scheme '", s, "' (expected equal-width|equal-mass)");
}

namespace {

// Bin index in [0, M) for equal-width bins ((m-1)/M, m/M]; confidence 0
// lands in the first bin.
std::size_t width_bin(double confidence, std::size_t num_bins) {
  double scaled = std::ceil(confidence * static_cast<double>(num_bins));
  auto idx = static_cast<long>(scaled);
  if (idx < 1) idx = 1;
  if (idx > static_cast<long>(num_bins)) idx = static_cast<long>(num_bins);
  return static_cast<std::size_t>(idx - 1);
}

BinStats finish_bin(const std::vector<const PredictionRecord*>& members,
                    double lower, double upper) {
  BinStats b;
  b.lower = lower;
  b.upper = upper;
  b.count = members.size();
  if (members.empty()) return b;
  double conf = 0.0, correct = 0.0;
  for (const auto* r : members) {
    conf += r->confidence;
    correct += is_correct(*r) ? 1.0 : 0.0;
  }
  b.mean_confidence = conf / static_cast<double>(members.size());
  b.accuracy = correct / static_cast<double>(members.size());
  b.calib_error = std::fabs(b.accuracy - b.mean_confidence);
  return b;
}

}  // namespace

std::vector<BinStats> bin_predictions(std::span<const PredictionRecord> records,
                                      std::size_t num_bins, BinningScheme scheme) {
  require(num_bins >= 1, "bin_predictions: num_bins must be >= 1");
  require(!records.empty(), "bin_predictions: no records");

  std::vector<BinStats> bins;
  bins.reserve(num_bins);
  if (scheme == BinningScheme::EqualWidth) {
    std::vector<std::vector<const PredictionRecord*>> members(num_bins);
    for (const auto& r : records)
      members[width_bin(r.confidence, num_bins)].push_back(&r);
    for (std::size_t m = 0; m < num_bins; ++m) {
      double lo = static_cast<double>(m) / static_cast<double>(num_bins);
      double hi = static_cast<double>(m + 1) / static_cast<double>(num_bins);
      bins.push_back(finish_bin(members[m], lo, hi));
    }
  } else {
    std::vector<const PredictionRecord*> sorted;
    sorted.reserve(records.size());
    for (const auto& r : records) sorted.push_back(&r);
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const PredictionRecord* a, const PredictionRecord* b) {
                       return a->confidence < b->confidence;
                     });
    const std::size_t n = sorted.size();
    for (std::size_t m = 0; m < num_bins; ++m) {
      std::size_t lo = m * n / num_bins;
      std::size_t hi = (m + 1) * n / num_bins;
      std::vector<const PredictionRecord*> members(sorted.begin() + lo,
                                                   sorted.begin() + hi);
      double lower = members.empty() ? 0.0 : members.front()->confidence;
      double upper = members.empty() ? 0.0 : members.back()->confidence;
      bins.push_back(finish_bin(members, lower, upper));
    }
  }
  return bins;
}

double ece(std::span<const PredictionRecord> records, std::size_t num_bins,
           BinningScheme scheme) {
  auto bins = bin_predictions(records, num_bins, scheme);
  const double n = static_cast<double>(records.size());
  double e = 0.0;
  for (const auto& b : bins)
    e += (static_cast<double>(b.count) / n) * b.calib_error;
  return e;
}

namespace {

bool is_positive(const PredictionRecord& r, DetectionTask task) {
  if (task == DetectionTask::Ood) return r.is_ood;
  return !r.is_ood && r.predicted_label != r.true_label;
}

std::size_t count_positives(std::span<const PredictionRecord> records,
                            DetectionTask task) {
  std::size_t p = 0;
  for (const auto& r : records) p += is_positive(r, task) ? 1 : 0;
  return p;
}

double f1_at(std::span<const PredictionRecord> records, DetectionTask task,
             double tau, bool strict) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& r : records) {
    bool pos = is_positive(r, task);
    bool flagged = strict ? r.confidence < tau : r.confidence <= tau;
    if (pos && flagged) ++tp;
    if (!pos && flagged) ++fp;
    if (pos && !flagged) ++fn;
  }
  std::size_t denom = 2 * tp + fp + fn;
  if (denom == 0 || tp == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace

double detection_f1(std::span<const PredictionRecord> records, DetectionTask task,
                    double tau, bool strict) {
  require(!records.empty(), "detection_f1: no records");
  require(count_positives(records, task) > 0,
          "detection_f1: no positive samples for ",
          task == DetectionTask::Ood ? "OOD" : "misclassification",
          " detection (degenerate task)");
  return f1_at(records, task, tau, strict);
}

CalibrationCurve calibration_curve(std::span<const PredictionRecord> records,
                                   DetectionTask task, double tau_upper,
                                   std::size_t m, bool strict, Exec exec) {
  require(tau_upper > 0.0 && tau_upper <= 1.0,
          "calibration_curve: tau_upper must be in (0, 1], got ", tau_upper);
  require(m >= 1, "calibration_curve: M must be >= 1");
  require(!records.empty(), "calibration_curve: no records");
  require(count_positives(records, task) > 0,
          "calibration_curve: no positive samples for ",
          task == DetectionTask::Ood ? "OOD" : "misclassification", " detection");

  CalibrationCurve curve;
  curve.tau_upper = tau_upper;
  curve.f1.assign(m, 0.0);
  parallel_for(m, exec, [&](std::size_t i) {
    double tau = tau_upper * static_cast<double>(i + 1) / static_cast<double>(m);
    curve.f1[i] = f1_at(records, task, tau, strict);
  });
  return curve;
}

double nbaucc(std::span<const PredictionRecord> records, DetectionTask task,
              double tau_upper, std::size_t m, bool strict, Exec exec) {
  CalibrationCurve curve = calibration_curve(records, task, tau_upper, m, strict, exec);
  double s = 0.0;
  for (double v : curve.f1) s += v;
  return s / static_cast<double>(curve.f1.size());
}

double auroc(std::span<const PredictionRecord> records, DetectionTask task) {
  std::vector<std::pair<double, bool>> scored;  // (1 - confidence, positive)
  scored.reserve(records.size());
  std::size_t p = 0, n = 0;
  for (const auto& r : records) {
    bool pos = is_positive(r, task);
    scored.emplace_back(1.0 - r.confidence, pos);
    (pos ? p : n) += 1;
  }
  require(p > 0, "auroc: no positive samples");
  require(n > 0, "auroc: no negative samples");
  std::sort(scored.begin(), scored.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  // midranks over tied scores
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < scored.size()) {
    std::size_t j = i;
    while (j < scored.size() && scored[j].first == scored[i].first) ++j;
    double midrank = 0.5 * static_cast<double>(i + 1 + j);  // (i+1 + j) / 2
    for (std::size_t k = i; k < j; ++k)
      if (scored[k].second) rank_sum_pos += midrank;
    i = j;
  }
  double pd = static_cast<double>(p);
  return (rank_sum_pos - pd * (pd + 1.0) / 2.0) / (pd * static_cast<double>(n));
}

std::vector<std::size_t> confidence_histogram(std::span<const PredictionRecord> records,
                                              std::size_t num_bins) {
  require(num_bins >= 1, "confidence_histogram: num_bins must be >= 1");
  std::vector<std::size_t> counts(num_bins, 0);
  for (const auto& r : records) counts[width_bin(r.confidence, num_bins)] += 1;
  return counts;
}

CalibrationReport build_report(std::span<const PredictionRecord> records,
                               const MetricParams& params, Exec exec) {
  require(!records.empty(), "build_report: no records");
  std::vector<PredictionRecord> in_dist;
  std::vector<PredictionRecord> ood_only;
  for (const auto& r : records) (r.is_ood ? ood_only : in_dist).push_back(r);
  require(!in_dist.empty(), "build_report: no in-distribution records");

  CalibrationReport rep;
  rep.n_in = in_dist.size();
  rep.n_ood = ood_only.size();

  double correct = 0.0;
  for (const auto& r : in_dist) correct += is_correct(r) ? 1.0 : 0.0;
  rep.accuracy = correct / static_cast<double>(in_dist.size());
  rep.bins = bin_predictions(in_dist, params.ece_bins, params.scheme);
  rep.ece = ece(in_dist, params.ece_bins, params.scheme);
  rep.hist_in = confidence_histogram(in_dist, params.ece_bins);
  rep.hist_ood = confidence_histogram(ood_only, params.ece_bins);

  auto scores_for = [&](std::span<const PredictionRecord> recs, DetectionTask task) {
    TaskScores s;
    for (double tu : params.tau_upper) {
      s.curves.push_back(calibration_curve(recs, task, tu, params.nbaucc_m,
                                           params.strict, exec));
      double acc = 0.0;
      for (double v : s.curves.back().f1) acc += v;
      s.nbaucc.push_back(acc / static_cast<double>(params.nbaucc_m));
    }
    return s;
  };

  if (count_positives(in_dist, DetectionTask::Misclassification) > 0) {
    rep.misclassification = scores_for(in_dist, DetectionTask::Misclassification);
  } else {
    rep.notices.push_back("no misclassified in-distribution samples; "
                          "misclassification detection metrics omitted");
  }
  if (!ood_only.empty()) {
    rep.ood = scores_for(records, DetectionTask::Ood);
    rep.auroc_ood = auroc(records, DetectionTask::Ood);
  } else {
    rep.notices.push_back("no OOD records; OOD detection metrics omitted");
  }
  return rep;
}

namespace {

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string record_to_line(const PredictionRecord& r) {
  std::ostringstream os;
  if (r.is_ood)
    os << "OOD";
  else
    os << r.true_label;
  os << ", " << r.predicted_label;
  for (double p : r.probs) os << ", " << g17(p);
  return os.str();
}

PredictionRecord record_from_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  auto trim = [](std::string s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  for (auto& f : fields) f = trim(f);
  require(fields.size() >= 4, "records line ", line_no,
          ": expected 'true, predicted, p0, p1, ...', got ", fields.size(),
          " field(s)");

  bool is_ood = fields[0] == "OOD" || fields[0] == "ood";
  int true_label = -1;
  std::size_t pos = 0;
  try {
    if (!is_ood) true_label = std::stoi(fields[0], &pos);
    if (!is_ood && pos != fields[0].size()) fail("x");
  } catch (...) {
    fail("records line ", line_no, ": bad true label '", fields[0], "'");
  }
  int predicted = 0;
  try {
    predicted = std::stoi(fields[1], &pos);
    if (pos != fields[1].size()) fail("x");
  } catch (...) {
    fail("records line ", line_no, ": bad predicted label '", fields[1], "'");
  }
  Vec probs;
  for (std::size_t i = 2; i < fields.size(); ++i) {
    try {
      std::size_t off = 0;
      probs.push_back(std::stod(fields[i], &off));
      if (off != fields[i].size()) fail("x");
    } catch (...) {
      fail("records line ", line_no, ": bad probability '", fields[i], "'");
    }
  }
  require(predicted >= 0 && static_cast<std::size_t>(predicted) < probs.size(),
          "records line ", line_no, ": predicted label ", predicted,
          " out of range for ", probs.size(), " classes");
  require(!is_ood || true_label == -1, "records line ", line_no, ": internal");
  require(is_ood || (true_label >= 0 && static_cast<std::size_t>(true_label) < probs.size()),
          "records line ", line_no, ": true label ", true_label,
          " out of range for ", probs.size(), " classes");
  require(is_prob_vector(probs, 1e-6), "records line ", line_no,
          ": probabilities do not sum to 1");
  double mx = *std::max_element(probs.begin(), probs.end());
  require(std::fabs(probs[predicted] - mx) <= 1e-9, "records line ", line_no,
          ": predicted label ", predicted, " is not the argmax");

  PredictionRecord r;
  r.true_label = true_label;
  r.is_ood = is_ood;
  r.predicted_label = predicted;
  r.probs = std::move(probs);
  r.confidence = r.probs[predicted];
  return r;
}

void save_records(const std::string& path, std::span<const PredictionRecord> records) {
  std::ofstream f(path);
  require(f.good(), "cannot open '", path, "' for writing");
  for (const auto& r : records) f << record_to_line(r) << "\n";
}

std::vector<PredictionRecord> load_records(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "cannot open records file '", path, "'");
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(record_from_line(line, line_no));
  }
  return out;
}

namespace {

nlohmann::json task_scores_json(const TaskScores& s) {
  nlohmann::json j;
  for (std::size_t i = 0; i < s.curves.size(); ++i) {
    std::ostringstream key;
    key << s.curves[i].tau_upper;
    j[key.str()] = s.nbaucc[i];
  }
  return j;
}

}  // namespace

std::string report_to_json(const CalibrationReport& rep) {
  nlohmann::json j;
  j["n_in"] = rep.n_in;
  j["n_ood"] = rep.n_ood;
  j["accuracy"] = rep.accuracy;
  j["ece"] = rep.ece;
  j["bins"] = nlohmann::json::array();
  for (const auto& b : rep.bins) {
    j["bins"].push_back({{"lower", b.lower},
                         {"upper", b.upper},
                         {"count", b.count},
                         {"mean_confidence", b.mean_confidence},
                         {"accuracy", b.accuracy},
                         {"calib_error", b.calib_error}});
  }
  if (rep.misclassification)
    j["nbaucc_misclassification"] = task_scores_json(*rep.misclassification);
  if (rep.ood) j["nbaucc_ood"] = task_scores_json(*rep.ood);
  if (rep.auroc_ood) j["auroc_ood"] = *rep.auroc_ood;
  j["hist_in"] = rep.hist_in;
  j["hist_ood"] = rep.hist_ood;
  j["notices"] = rep.notices;
  return j.dump(1);
}

std::string report_to_text(const CalibrationReport& rep) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "samples: %zu in-distribution, %zu OOD\n"
                "accuracy: %.4f\n"
                "ECE (%zu bins): %.4f\n",
                rep.n_in, rep.n_ood, rep.accuracy, rep.bins.size(), rep.ece);
  os << buf;

  auto print_scores = [&](const char* name, const TaskScores& s) {
    os << name << " NBAUCC:";
    for (std::size_t i = 0; i < s.curves.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "  [tau_upper=%g] %.4f",
                    s.curves[i].tau_upper, s.nbaucc[i]);
      os << buf;
    }
    os << "\n";
  };
  if (rep.misclassification) print_scores("misclassification", *rep.misclassification);
  if (rep.ood) print_scores("OOD", *rep.ood);
  if (rep.auroc_ood) {
    std::snprintf(buf, sizeof(buf), "OOD AUROC: %.4f\n", *rep.auroc_ood);
    os << buf;
  }

  os << "reliability (lower, upper, count, mean_conf, accuracy, |gap|):\n";
  for (const auto& b : rep.bins) {
    std::snprintf(buf, sizeof(buf), "  (%.2f, %.2f]  %6zu  %.4f  %.4f  %.4f\n",
                  b.lower, b.upper, b.count, b.mean_confidence, b.accuracy,
                  b.calib_error);
    os << buf;
  }
  for (const auto& n : rep.notices) os << "note: " << n << "\n";
  return os.str();
}

}  // namespace calib
