#include "calib/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace calib {

DatasetBundle build_data(const DataConfig& cfg) {
  DatasetBundle b = cfg.use_files
                        ? load_embeddings(cfg.train_path, cfg.dev_path,
                                          cfg.test_in_path, cfg.test_ood_path)
                        : generate(cfg.generator);
  if (cfg.standardize) standardize(b);
  return b;
}

namespace {

MlpModel build_model(const ExperimentConfig& cfg, const DatasetBundle& data, Rng& rng) {
  MlpModel m = make_mlp(data.dim, cfg.model.hidden, data.num_classes,
                        cfg.model.activation, cfg.model.dropout, rng);
  if (cfg.model.split_index >= 0) {
    require(static_cast<std::size_t>(cfg.model.split_index) < m.layers.size(),
            "config: split_index ", cfg.model.split_index, " out of range for ",
            m.layers.size(), " layers");
    m.split_index = static_cast<std::size_t>(cfg.model.split_index);
  }
  validate_model(m);
  return m;
}

std::size_t resolve_mixup_layer(const MlpModel& m, const BaselineSpec& b) {
  long layer = b.mixup_layer < 0 ? static_cast<long>(m.split_index) : b.mixup_layer;
  require(layer >= 1 && static_cast<std::size_t>(layer) < m.layers.size(),
          "mixup layer ", layer, " out of range [1, ", m.layers.size(), ")");
  return static_cast<std::size_t>(layer);
}

double nbaucc_at(const std::optional<TaskScores>& scores, const MetricParams& params,
                 double tau_upper) {
  if (!scores) return std::nan("");
  for (std::size_t i = 0; i < params.tau_upper.size(); ++i)
    if (params.tau_upper[i] == tau_upper) return scores->nbaucc[i];
  return scores->nbaucc.empty() ? std::nan("") : scores->nbaucc.front();
}

}  // namespace

std::vector<PredictionRecord> predict_records(const MlpModel& m,
                                              const DatasetBundle& data,
                                              const ExperimentConfig& cfg,
                                              std::optional<double> temperature) {
  std::vector<Vec> xs;
  xs.reserve(data.test_in.size() + data.test_ood.size());
  for (const auto& ex : data.test_in) xs.push_back(ex.x);
  for (const auto& x : data.test_ood) xs.push_back(x);

  std::vector<Vec> probs;
  if (cfg.baseline.kind == BaselineKind::McDropout) {
    // Per-record generators keep the pass averaging reproducible and
    // independent of evaluation order.
    probs.resize(xs.size());
    const std::uint64_t base = mix_seed(cfg.seed, 0x9d0d);
    parallel_for(xs.size(), cfg.exec, [&](std::size_t i) {
      Rng rec_rng(mix_seed(base, i));
      probs[i] = mc_dropout_predict(m, xs[i], cfg.baseline.mcdp_passes, rec_rng);
    });
  } else if (temperature) {
    std::vector<Vec> logits = predict_logits(m, xs, cfg.exec);
    probs.resize(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
      probs[i] = apply_temperature(logits[i], *temperature);
  } else {
    probs = predict_probs(m, xs, cfg.exec);
  }

  std::vector<PredictionRecord> records;
  records.reserve(xs.size());
  for (std::size_t i = 0; i < data.test_in.size(); ++i)
    records.push_back(make_record(data.test_in[i].label, false, probs[i]));
  for (std::size_t i = data.test_in.size(); i < xs.size(); ++i)
    records.push_back(make_record(-1, true, probs[i]));
  return records;
}

CalibrationReport evaluate(const MlpModel& m, const DatasetBundle& data,
                           const ExperimentConfig& cfg,
                           std::optional<double> temperature) {
  auto records = predict_records(m, data, cfg, temperature);
  return build_report(records, cfg.metrics, cfg.exec);
}

RunArtifact train(const ExperimentConfig& cfg) {
  return train(cfg, build_data(cfg.data));
}

RunArtifact train(const ExperimentConfig& cfg, const DatasetBundle& data) {
  validate(cfg);
  require(!data.train.empty(), "train: empty training split");
  require(data.num_classes >= 2, "train: need at least 2 classes");
  const auto t_start = std::chrono::steady_clock::now();

  Rng master(cfg.seed);
  MlpModel model = build_model(cfg, data, master);
  AdamState adam = make_adam(model, cfg.optim.adam);
  const Exec exec = cfg.exec;
  const auto& sm = cfg.smoothing;
  const BaselineKind kind = cfg.baseline.kind;

  // Precomputed one-hot (and smoothed, for the LS baseline) targets.
  std::vector<Vec> onehot(data.train.size());
  for (std::size_t i = 0; i < data.train.size(); ++i)
    onehot[i] = one_hot(static_cast<std::size_t>(data.train[i].label), data.num_classes);
  std::vector<Vec> smoothed;
  if (kind == BaselineKind::LabelSmoothing) {
    smoothed.resize(onehot.size());
    for (std::size_t i = 0; i < onehot.size(); ++i)
      smoothed[i] = smooth_labels(onehot[i], cfg.baseline.smoothing_epsilon);
  }

  std::vector<Vec> dev_xs;
  for (const auto& ex : data.dev) dev_xs.push_back(ex.x);

  RunArtifact art;
  std::vector<std::size_t> order(data.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg.optim.epochs; ++epoch) {
    master.shuffle(order);
    EpochStats stats;
    stats.epoch = epoch;
    std::size_t batches = 0;

    for (std::size_t start = 0; start < order.size(); start += cfg.optim.batch_size) {
      const std::size_t end = std::min(start + cfg.optim.batch_size, order.size());
      const std::size_t bsz = end - start;
      std::vector<Vec> xs(bsz), ys(bsz);
      for (std::size_t i = 0; i < bsz; ++i) {
        xs[i] = data.train[order[start + i]].x;
        ys[i] = onehot[order[start + i]];
      }

      auto snapshot_and_fail = [&](const std::string& detail) {
        if (!cfg.out.empty()) {
          std::filesystem::create_directories(cfg.out);
          save_model(model, cfg.out + "/diverged_model.json");
        }
        fail("training diverged at epoch ", epoch, " (batch starting at sample ",
             start, "): ", detail,
             cfg.out.empty() ? "" : "; diagnostic snapshot written to out dir");
      };

      const std::uint64_t seed_ce = master.next_u64();
      BatchGrad total;
      double ce_loss = 0.0, on_loss = 0.0, off_loss = 0.0;

      auto task_grad = [&]() -> BatchGrad {
        switch (kind) {
          case BaselineKind::Mixup: {
            if (bsz < 2) break;
            auto mixed = mixup_batch(model, xs, ys, cfg.baseline.mixup_alpha,
                                     MixupSpace::Input, 0, master);
            std::vector<Vec> mx(mixed.size()), my(mixed.size());
            for (std::size_t i = 0; i < mixed.size(); ++i) {
              mx[i] = std::move(mixed[i].point);
              my[i] = std::move(mixed[i].y);
            }
            return batch_loss_grad(model, mx, my, {LossKind::CrossEntropy},
                                   RunMode::Train, seed_ce, exec);
          }
          case BaselineKind::ManifoldMixup: {
            if (bsz < 2) break;
            auto pairs = draw_mixup_pairs(bsz, cfg.baseline.mixup_alpha, master);
            std::vector<MixPair> mp(pairs.size());
            for (std::size_t i = 0; i < pairs.size(); ++i) {
              mp[i].a = pairs[i].a;
              mp[i].b = pairs[i].b;
              mp[i].lambda = pairs[i].lambda;
              mp[i].y_mix = mix_vectors(ys[pairs[i].a], ys[pairs[i].b], pairs[i].lambda);
            }
            return hidden_mixup_grad(model, xs, mp,
                                     resolve_mixup_layer(model, cfg.baseline),
                                     RunMode::Train, seed_ce, exec);
          }
          case BaselineKind::EntropyRegularized:
            return batch_loss_grad(
                model, xs, ys, {LossKind::EntropyPenalizedCe, cfg.baseline.erl_weight},
                RunMode::Train, seed_ce, exec);
          case BaselineKind::LabelSmoothing: {
            std::vector<Vec> ts(bsz);
            for (std::size_t i = 0; i < bsz; ++i) ts[i] = smoothed[order[start + i]];
            return batch_loss_grad(model, xs, ts, {LossKind::CrossEntropy},
                                   RunMode::Train, seed_ce, exec);
          }
          default:
            break;
        }
        // vanilla training path, shared by TS and MCDP (and size-1 mixup batches)
        return batch_loss_grad(model, xs, ys, {LossKind::CrossEntropy},
                               RunMode::Train, seed_ce, exec);
      };

      try {
        total = task_grad();
        ce_loss = total.loss;
        if (sm.lambda_on > 0.0) {
          auto samples = generate_on_manifold(model, xs, ys, sm, master, exec);
          const std::uint64_t seed_on = master.next_u64();
          BatchGrad g = r_on(model, samples, RunMode::Train, seed_on, exec);
          on_loss = g.loss;
          total.tape.axpy(sm.lambda_on, g.tape);
        }
        if (sm.lambda_off > 0.0) {
          auto samples = generate_off_manifold(model, xs, ys, sm, master, exec);
          const std::uint64_t seed_off = master.next_u64();
          BatchGrad g = r_off(model, samples, RunMode::Train, seed_off, exec);
          off_loss = g.loss;
          total.tape.axpy(sm.lambda_off, g.tape);
        }
      } catch (const Error& e) {
        snapshot_and_fail(e.what());
      }

      const double batch_total =
          ce_loss + sm.lambda_on * on_loss + sm.lambda_off * off_loss;
      if (!std::isfinite(batch_total) || !std::isfinite(total.tape.max_abs()))
        snapshot_and_fail("loss = " + std::to_string(batch_total));

      adam_step(model, total.tape, adam);
      stats.total += batch_total;
      stats.ce += ce_loss;
      stats.r_on += on_loss;
      stats.r_off += off_loss;
      ++batches;
    }

    stats.total /= static_cast<double>(batches);
    stats.ce /= static_cast<double>(batches);
    stats.r_on /= static_cast<double>(batches);
    stats.r_off /= static_cast<double>(batches);

    if (!dev_xs.empty()) {
      auto dev_probs = predict_probs(model, dev_xs, exec);
      std::vector<PredictionRecord> dev_records;
      dev_records.reserve(dev_xs.size());
      for (std::size_t i = 0; i < dev_xs.size(); ++i)
        dev_records.push_back(make_record(data.dev[i].label, false, dev_probs[i]));
      stats.dev_ece = ece(dev_records, cfg.metrics.ece_bins, cfg.metrics.scheme);
    }
    art.trace.push_back(stats);
  }

  // Temperature scaling fits on the dev split after training.
  if (cfg.baseline.kind == BaselineKind::TemperatureScaling) {
    require(!data.dev.empty(), "temperature scaling requires a dev split");
    std::vector<Vec> dev_logits = predict_logits(model, dev_xs, exec);
    std::vector<int> dev_labels;
    for (const auto& ex : data.dev) dev_labels.push_back(ex.label);
    art.temperature = fit_temperature(dev_logits, dev_labels);
  }

  art.records = predict_records(model, data, cfg, art.temperature);
  art.report = build_report(art.records, cfg.metrics, exec);
  art.model = std::move(model);
  art.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return art;
}

namespace {

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path);
  require(f.good(), "cannot open '", path, "' for writing");
  f << content;
}

}  // namespace

void write_artifact(const RunArtifact& artifact, const ExperimentConfig& cfg) {
  require(!cfg.out.empty(), "write_artifact: no output directory configured");
  std::filesystem::create_directories(cfg.out);
  const std::string dir = cfg.out + "/";

  write_file(dir + "config.json", config_to_json(cfg) + "\n");
  save_model(artifact.model, dir + "model.json");
  save_records(dir + "records.csv", artifact.records);
  write_file(dir + "report.json", report_to_json(artifact.report) + "\n");
  write_file(dir + "report.txt", report_to_text(artifact.report));

  {
    std::ostringstream os;
    os << "epoch,total,ce,r_on,r_off,dev_ece\n";
    for (const auto& e : artifact.trace)
      os << e.epoch << "," << g17(e.total) << "," << g17(e.ce) << ","
         << g17(e.r_on) << "," << g17(e.r_off) << "," << g17(e.dev_ece) << "\n";
    write_file(dir + "losses.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "lower,upper,count,mean_confidence,accuracy,calib_error\n";
    for (const auto& b : artifact.report.bins)
      os << g17(b.lower) << "," << g17(b.upper) << "," << b.count << ","
         << g17(b.mean_confidence) << "," << g17(b.accuracy) << ","
         << g17(b.calib_error) << "\n";
    write_file(dir + "reliability.csv", os.str());
  }
  auto write_curves = [&](const char* name, const std::optional<TaskScores>& scores) {
    if (!scores) return;
    std::ostringstream os;
    os << "tau_upper,tau,f1\n";
    for (const auto& c : scores->curves) {
      for (std::size_t i = 1; i <= c.f1.size(); ++i) {
        double tau = c.tau_upper * static_cast<double>(i) /
                     static_cast<double>(c.f1.size());
        os << g17(c.tau_upper) << "," << g17(tau) << "," << g17(c.f1[i - 1]) << "\n";
      }
    }
    write_file(dir + name, os.str());
  };
  write_curves("curves_misclassification.csv", artifact.report.misclassification);
  write_curves("curves_ood.csv", artifact.report.ood);
  {
    std::ostringstream os;
    os << "bin,count_in,count_ood\n";
    for (std::size_t i = 0; i < artifact.report.hist_in.size(); ++i)
      os << i + 1 << "," << artifact.report.hist_in[i] << ","
         << (i < artifact.report.hist_ood.size() ? artifact.report.hist_ood[i] : 0)
         << "\n";
    write_file(dir + "histogram.csv", os.str());
  }
  if (artifact.temperature)
    write_file(dir + "temperature.txt", g17(*artifact.temperature) + "\n");
}

std::vector<SweepRow> sweep(const ExperimentConfig& base, const std::string& parameter,
                            const std::vector<double>& grid, std::size_t repeats) {
  require(!grid.empty(), "sweep: empty grid");
  require(repeats >= 1, "sweep: repeats must be >= 1");
  require(parameter == "delta_on" || parameter == "delta_off" || parameter == "delta_y",
          "sweep: unknown parameter '", parameter,
          "' (expected delta_on|delta_off|delta_y)");

  DatasetBundle data = build_data(base.data);
  std::vector<SweepRow> rows;
  for (double value : grid) {
    SweepRow row;
    row.value = value;
    double acc = 0.0, e = 0.0, ood = 0.0, mis = 0.0;
    std::size_t n_ood = 0, n_mis = 0;
    try {
      for (std::size_t r = 0; r < repeats; ++r) {
        ExperimentConfig cfg = base;
        cfg.out.clear();
        cfg.seed = base.seed + r;
        if (parameter == "delta_on") cfg.smoothing.delta_on = value;
        if (parameter == "delta_off") cfg.smoothing.delta_off = value;
        if (parameter == "delta_y") cfg.smoothing.delta_y = value;
        validate(cfg);
        RunArtifact art = train(cfg, data);
        acc += art.report.accuracy;
        e += art.report.ece;
        double v_ood = nbaucc_at(art.report.ood, cfg.metrics, 0.5);
        double v_mis = nbaucc_at(art.report.misclassification, cfg.metrics, 0.5);
        if (std::isfinite(v_ood)) {
          ood += v_ood;
          ++n_ood;
        }
        if (std::isfinite(v_mis)) {
          mis += v_mis;
          ++n_mis;
        }
      }
      row.accuracy = acc / static_cast<double>(repeats);
      row.ece = e / static_cast<double>(repeats);
      row.nbaucc_ood = n_ood ? ood / static_cast<double>(n_ood) : std::nan("");
      row.nbaucc_mis = n_mis ? mis / static_cast<double>(n_mis) : std::nan("");
    } catch (const Error& err) {
      warn("sweep point ", parameter, " = ", value, " failed: ", err.what());
      row.failed = true;
    }
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_to_csv(const std::string& parameter, std::span<const SweepRow> rows) {
  std::ostringstream os;
  os << parameter << ",status,accuracy,ece,nbaucc_ood,nbaucc_mis\n";
  for (const auto& r : rows) {
    os << g17(r.value) << "," << (r.failed ? "failed" : "ok");
    if (r.failed) {
      os << ",,,,\n";
    } else {
      os << "," << g17(r.accuracy) << "," << g17(r.ece) << ","
         << g17(r.nbaucc_ood) << "," << g17(r.nbaucc_mis) << "\n";
    }
  }
  return os.str();
}

std::vector<AblateRow> ablate(const ExperimentConfig& base, std::size_t repeats) {
  require(repeats >= 1, "ablate: repeats must be >= 1");
  require(base.baseline.kind == BaselineKind::Vanilla,
          "ablate expects the manifold-smoothing config (baseline vanilla)");
  const double lon = base.smoothing.lambda_on > 0.0 ? base.smoothing.lambda_on : 1.0;
  const double loff = base.smoothing.lambda_off > 0.0 ? base.smoothing.lambda_off : 1.0;

  struct Variant {
    const char* name;
    double lambda_on;
    double lambda_off;
  };
  const Variant variants[] = {{"vanilla", 0.0, 0.0},
                              {"r_on_only", lon, 0.0},
                              {"r_off_only", 0.0, loff},
                              {"both", lon, loff}};

  DatasetBundle data = build_data(base.data);
  std::vector<AblateRow> rows;
  for (const auto& v : variants) {
    AblateRow row;
    row.name = v.name;
    double acc = 0.0, e = 0.0, ood = 0.0, mis = 0.0;
    std::size_t n_ood = 0, n_mis = 0;
    for (std::size_t r = 0; r < repeats; ++r) {
      ExperimentConfig cfg = base;
      cfg.out.clear();
      cfg.seed = base.seed + r;
      cfg.smoothing.lambda_on = v.lambda_on;
      cfg.smoothing.lambda_off = v.lambda_off;
      RunArtifact art = train(cfg, data);
      acc += art.report.accuracy;
      e += art.report.ece;
      double v_ood = nbaucc_at(art.report.ood, cfg.metrics, 0.5);
      double v_mis = nbaucc_at(art.report.misclassification, cfg.metrics, 0.5);
      if (std::isfinite(v_ood)) {
        ood += v_ood;
        ++n_ood;
      }
      if (std::isfinite(v_mis)) {
        mis += v_mis;
        ++n_mis;
      }
    }
    row.accuracy = acc / static_cast<double>(repeats);
    row.ece = e / static_cast<double>(repeats);
    row.nbaucc_ood = n_ood ? ood / static_cast<double>(n_ood) : std::nan("");
    row.nbaucc_mis = n_mis ? mis / static_cast<double>(n_mis) : std::nan("");
    rows.push_back(row);
  }
  return rows;
}

std::string ablate_to_csv(std::span<const AblateRow> rows) {
  std::ostringstream os;
  os << "variant,accuracy,ece,nbaucc_ood,nbaucc_mis\n";
  for (const auto& r : rows)
    os << r.name << "," << g17(r.accuracy) << "," << g17(r.ece) << ","
       << g17(r.nbaucc_ood) << "," << g17(r.nbaucc_mis) << "\n";
  return os.str();
}

}  // namespace calib
