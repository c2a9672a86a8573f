// Experiment CLI: train/evaluate/calibrate/sweep/ablate a calibrated
// classifier, or score an external prediction-record file.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "calib/trainer.hpp"

namespace {

using namespace calib;

struct Overrides {
  std::string config_path;
  long long seed = -1;
  std::string out;
  double lambda_on = -1.0, lambda_off = -1.0;
  double delta_on = -1.0, delta_off = -1.0, delta_y = -1.0;
  std::string baseline;
  std::vector<double> tau_upper;
  std::string exec;
};

void add_common_flags(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--config", ov.config_path, "experiment config file (JSON)");
  cmd->add_option("--seed", ov.seed, "master seed");
  cmd->add_option("--out", ov.out, "output directory");
  cmd->add_option("--lambda-on", ov.lambda_on, "on-manifold regularizer weight");
  cmd->add_option("--lambda-off", ov.lambda_off, "off-manifold regularizer weight");
  cmd->add_option("--delta-on", ov.delta_on, "on-manifold l-inf ball radius");
  cmd->add_option("--delta-off", ov.delta_off, "off-manifold l-inf sphere radius");
  cmd->add_option("--delta-y", ov.delta_y, "label interpolation weight");
  cmd->add_option("--baseline", ov.baseline,
                  "method: vanilla|temperature-scaling|mc-dropout|label-smoothing|"
                  "entropy-regularized|mixup|manifold-mixup");
  cmd->add_option("--tau-upper", ov.tau_upper, "NBAUCC threshold upper bounds")
      ->delimiter(',');
  cmd->add_option("--exec", ov.exec, "kernel execution: parallel|serial");
}

ExperimentConfig resolve_config(const Overrides& ov) {
  ExperimentConfig cfg;
  if (!ov.config_path.empty()) cfg = load_config(ov.config_path);
  if (ov.seed >= 0) cfg.seed = static_cast<std::uint64_t>(ov.seed);
  if (!ov.out.empty()) cfg.out = ov.out;
  if (ov.lambda_on >= 0.0) cfg.smoothing.lambda_on = ov.lambda_on;
  if (ov.lambda_off >= 0.0) cfg.smoothing.lambda_off = ov.lambda_off;
  if (ov.delta_on >= 0.0) cfg.smoothing.delta_on = ov.delta_on;
  if (ov.delta_off >= 0.0) cfg.smoothing.delta_off = ov.delta_off;
  if (ov.delta_y >= 0.0) cfg.smoothing.delta_y = ov.delta_y;
  if (!ov.baseline.empty()) {
    cfg.baseline.kind = baseline_from_string(ov.baseline);
    // A named baseline is the active method; drop the regularizers unless
    // the user explicitly re-enables them (which validate() will reject).
    if (cfg.baseline.kind != BaselineKind::Vanilla && ov.lambda_on < 0.0 &&
        ov.lambda_off < 0.0) {
      cfg.smoothing.lambda_on = 0.0;
      cfg.smoothing.lambda_off = 0.0;
    }
  }
  if (!ov.tau_upper.empty()) cfg.metrics.tau_upper = ov.tau_upper;
  if (!ov.exec.empty()) cfg.exec = exec_from_string(ov.exec);
  validate(cfg);
  return cfg;
}

int cmd_train(const Overrides& ov) {
  ExperimentConfig cfg = resolve_config(ov);
  if (cfg.out.empty()) cfg.out = "run";
  RunArtifact art = train(cfg);
  write_artifact(art, cfg);
  std::cout << report_to_text(art.report);
  if (art.temperature) std::cout << "fitted temperature: " << *art.temperature << "\n";
  std::cout << "wall seconds: " << art.wall_seconds << "\n"
            << "artifacts written to " << cfg.out << "\n";
  return 0;
}

int cmd_evaluate(const Overrides& ov, const std::string& model_path) {
  ExperimentConfig cfg = resolve_config(ov);
  MlpModel m = load_model(model_path);
  DatasetBundle data = build_data(cfg.data);
  CalibrationReport rep = evaluate(m, data, cfg);
  std::cout << report_to_text(rep);
  if (!cfg.out.empty()) {
    std::filesystem::create_directories(cfg.out);
    std::ofstream f(cfg.out + "/report.json");
    f << report_to_json(rep) << "\n";
    auto records = predict_records(m, data, cfg, std::nullopt);
    save_records(cfg.out + "/records.csv", records);
    std::cout << "report written to " << cfg.out << "\n";
  }
  return 0;
}

int cmd_calibrate(const Overrides& ov, const std::string& model_path) {
  ExperimentConfig cfg = resolve_config(ov);
  MlpModel m = load_model(model_path);
  DatasetBundle data = build_data(cfg.data);

  std::vector<Vec> dev_xs;
  std::vector<int> dev_labels;
  for (const auto& ex : data.dev) {
    dev_xs.push_back(ex.x);
    dev_labels.push_back(ex.label);
  }
  require(!dev_xs.empty(), "calibrate: dataset has no dev split");
  double t = fit_temperature(predict_logits(m, dev_xs, cfg.exec), dev_labels);
  std::cout << "fitted temperature: " << t << "\n";

  CalibrationReport rep = evaluate(m, data, cfg, t);
  std::cout << report_to_text(rep);
  if (!cfg.out.empty()) {
    std::filesystem::create_directories(cfg.out);
    std::ofstream f(cfg.out + "/report.json");
    f << report_to_json(rep) << "\n";
    std::ofstream tf(cfg.out + "/temperature.txt");
    tf << t << "\n";
    std::cout << "report written to " << cfg.out << "\n";
  }
  return 0;
}

int cmd_sweep(const Overrides& ov, const std::string& parameter,
              const std::vector<double>& grid, std::size_t repeats) {
  ExperimentConfig cfg = resolve_config(ov);
  auto rows = sweep(cfg, parameter, grid, repeats);
  std::string csv = sweep_to_csv(parameter, rows);
  std::cout << csv;
  if (!cfg.out.empty()) {
    std::filesystem::create_directories(cfg.out);
    std::ofstream f(cfg.out + "/sweep.csv");
    f << csv;
  }
  return 0;
}

int cmd_ablate(const Overrides& ov, std::size_t repeats) {
  ExperimentConfig cfg = resolve_config(ov);
  auto rows = ablate(cfg, repeats);
  std::string csv = ablate_to_csv(rows);
  std::cout << csv;
  if (!cfg.out.empty()) {
    std::filesystem::create_directories(cfg.out);
    std::ofstream f(cfg.out + "/ablate.csv");
    f << csv;
  }
  return 0;
}

int cmd_score(const Overrides& ov, const std::string& records_path) {
  ExperimentConfig cfg = resolve_config(ov);
  auto records = load_records(records_path);
  CalibrationReport rep = build_report(records, cfg.metrics, cfg.exec);
  std::cout << report_to_text(rep);
  if (!cfg.out.empty()) {
    std::filesystem::create_directories(cfg.out);
    std::ofstream f(cfg.out + "/report.json");
    f << report_to_json(rep) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"calibrated classifier training and evaluation"};
  app.require_subcommand(1);

  Overrides ov;
  std::string model_path, records_path, parameter;
  std::vector<double> grid;
  std::size_t repeats = 3;

  CLI::App* train_cmd = app.add_subcommand("train", "train a model and report calibration");
  add_common_flags(train_cmd, ov);

  CLI::App* eval_cmd = app.add_subcommand("evaluate", "score a saved model on a dataset");
  add_common_flags(eval_cmd, ov);
  eval_cmd->add_option("--model", model_path, "model.json path")->required();

  CLI::App* cal_cmd =
      app.add_subcommand("calibrate", "fit a temperature on dev and re-report");
  add_common_flags(cal_cmd, ov);
  cal_cmd->add_option("--model", model_path, "model.json path")->required();

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "grid sweep over a perturbation radius");
  add_common_flags(sweep_cmd, ov);
  sweep_cmd->add_option("--parameter", parameter, "delta_on|delta_off|delta_y")->required();
  sweep_cmd->add_option("--grid", grid, "comma-separated values")
      ->required()
      ->delimiter(',');
  sweep_cmd->add_option("--repeats", repeats, "seeds per grid point");

  CLI::App* ablate_cmd =
      app.add_subcommand("ablate", "compare vanilla / on-only / off-only / both");
  add_common_flags(ablate_cmd, ov);
  ablate_cmd->add_option("--repeats", repeats, "seeds per variant");

  CLI::App* score_cmd =
      app.add_subcommand("score", "metrics over an external prediction-record file");
  add_common_flags(score_cmd, ov);
  score_cmd->add_option("--records", records_path, "prediction record file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(ov);
    if (eval_cmd->parsed()) return cmd_evaluate(ov, model_path);
    if (cal_cmd->parsed()) return cmd_calibrate(ov, model_path);
    if (sweep_cmd->parsed()) return cmd_sweep(ov, parameter, grid, repeats);
    if (ablate_cmd->parsed()) return cmd_ablate(ov, repeats);
    if (score_cmd->parsed()) return cmd_score(ov, records_path);
  } catch (const calib::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
