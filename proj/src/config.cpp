#include "calib/config.hpp"

#include <fstream>

#include "json.hpp"

namespace calib {

namespace {

using nlohmann::json;

// Strict section reader: unknown keys are configuration errors.
struct Section {
  const json& j;
  std::string name;
  std::vector<std::string> known;

  bool has(const char* key) {
    known.push_back(key);
    return j.contains(key);
  }

  template <class T>
  void get(const char* key, T& into) {
    if (!has(key)) return;
    try {
      into = j.at(key).get<T>();
    } catch (const json::exception& e) {
      fail("config: bad value for ", name, ".", key, ": ", e.what());
    }
  }

  void get_string(const char* key, std::string& into) { get<std::string>(key, into); }

  const json* sub(const char* key) {
    known.push_back(key);
    return j.contains(key) ? &j.at(key) : nullptr;
  }

  void finish() {
    require(j.is_object(), "config: section '", name, "' must be an object");
    for (const auto& item : j.items()) {
      bool ok = false;
      for (const auto& k : known)
        if (k == item.key()) {
          ok = true;
          break;
        }
      require(ok, "config: unknown key '", name, ".", item.key(), "'");
    }
  }
};

void parse_model(const json& j, ModelConfig& m) {
  Section s{j, "model", {}};
  s.get("hidden", m.hidden);
  std::string act;
  s.get_string("activation", act);
  if (!act.empty()) m.activation = activation_from_string(act);
  s.get("dropout", m.dropout);
  s.get("split_index", m.split_index);
  s.finish();
}

void parse_smoothing(const json& j, ManifoldSmoothingConfig& c) {
  Section s{j, "smoothing", {}};
  s.get("lambda_on", c.lambda_on);
  s.get("lambda_off", c.lambda_off);
  s.get("delta_on", c.delta_on);
  s.get("delta_off", c.delta_off);
  s.get("delta_y", c.delta_y);
  s.get("inner_steps", c.inner_steps);
  std::string metric;
  s.get_string("on_metric", metric);
  if (!metric.empty()) c.on_metric = on_metric_from_string(metric);
  s.get("zero_init", c.zero_init);
  s.finish();
}

void parse_baseline(const json& j, BaselineSpec& b) {
  Section s{j, "baseline", {}};
  std::string kind;
  s.get_string("kind", kind);
  if (!kind.empty()) b.kind = baseline_from_string(kind);
  s.get("smoothing_epsilon", b.smoothing_epsilon);
  s.get("erl_weight", b.erl_weight);
  s.get("mixup_alpha", b.mixup_alpha);
  s.get("mixup_layer", b.mixup_layer);
  s.get("mcdp_passes", b.mcdp_passes);
  s.finish();
}

void parse_optim(const json& j, OptimConfig& o) {
  Section s{j, "optim", {}};
  s.get("lr", o.adam.lr);
  s.get("beta1", o.adam.beta1);
  s.get("beta2", o.adam.beta2);
  s.get("eps", o.adam.eps);
  s.get("batch_size", o.batch_size);
  s.get("epochs", o.epochs);
  s.finish();
}

void parse_generator(const json& j, GeneratorSpec& g) {
  Section s{j, "data.generator", {}};
  std::string kind;
  s.get_string("kind", kind);
  if (!kind.empty()) g.kind = generator_from_string(kind);
  s.get("classes", g.classes);
  s.get("held_out", g.held_out);
  s.get("per_class", g.per_class);
  s.get("dim", g.dim);
  s.get("center_spread", g.center_spread);
  s.get("noise", g.noise);
  s.get("seed", g.seed);
  s.finish();
}

void parse_files(const json& j, DataConfig& d) {
  Section s{j, "data.files", {}};
  s.get_string("train", d.train_path);
  s.get_string("dev", d.dev_path);
  s.get_string("test_in", d.test_in_path);
  s.get_string("test_ood", d.test_ood_path);
  s.finish();
  d.use_files = true;
}

void parse_data(const json& j, DataConfig& d) {
  Section s{j, "data", {}};
  if (const json* g = s.sub("generator")) parse_generator(*g, d.generator);
  if (const json* f = s.sub("files")) parse_files(*f, d);
  s.get("standardize", d.standardize);
  s.finish();
}

void parse_metrics(const json& j, MetricParams& m) {
  Section s{j, "metrics", {}};
  s.get("ece_bins", m.ece_bins);
  std::string scheme;
  s.get_string("binning", scheme);
  if (!scheme.empty()) m.scheme = binning_from_string(scheme);
  s.get("tau_upper", m.tau_upper);
  s.get("nbaucc_m", m.nbaucc_m);
  s.get("strict_threshold", m.strict);
  s.finish();
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    fail("config parse error: ", e.what());
  }
  ExperimentConfig cfg;
  Section s{j, "<root>", {}};
  s.get("seed", cfg.seed);
  s.get_string("out", cfg.out);
  std::string exec;
  s.get_string("exec", exec);
  if (!exec.empty()) cfg.exec = exec_from_string(exec);
  if (const json* m = s.sub("model")) parse_model(*m, cfg.model);
  if (const json* sm = s.sub("smoothing")) parse_smoothing(*sm, cfg.smoothing);
  if (const json* b = s.sub("baseline")) parse_baseline(*b, cfg.baseline);
  if (const json* o = s.sub("optim")) parse_optim(*o, cfg.optim);
  if (const json* d = s.sub("data")) parse_data(*d, cfg.data);
  if (const json* me = s.sub("metrics")) parse_metrics(*me, cfg.metrics);
  s.finish();
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "cannot open config file '", path, "'");
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return config_from_json(text);
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["out"] = cfg.out;
  j["exec"] = cfg.exec == Exec::Parallel ? "parallel" : "serial";
  j["model"] = {{"hidden", cfg.model.hidden},
                {"activation", to_string(cfg.model.activation)},
                {"dropout", cfg.model.dropout},
                {"split_index", cfg.model.split_index}};
  j["smoothing"] = {
      {"lambda_on", cfg.smoothing.lambda_on},
      {"lambda_off", cfg.smoothing.lambda_off},
      {"delta_on", cfg.smoothing.delta_on},
      {"delta_off", cfg.smoothing.delta_off},
      {"delta_y", cfg.smoothing.delta_y},
      {"inner_steps", cfg.smoothing.inner_steps},
      {"on_metric", cfg.smoothing.on_metric == OnManifoldMetric::CosineDistance
                        ? "cosine-distance"
                        : "cosine-similarity"},
      {"zero_init", cfg.smoothing.zero_init}};
  j["baseline"] = {{"kind", to_string(cfg.baseline.kind)},
                   {"smoothing_epsilon", cfg.baseline.smoothing_epsilon},
                   {"erl_weight", cfg.baseline.erl_weight},
                   {"mixup_alpha", cfg.baseline.mixup_alpha},
                   {"mixup_layer", cfg.baseline.mixup_layer},
                   {"mcdp_passes", cfg.baseline.mcdp_passes}};
  j["optim"] = {{"lr", cfg.optim.adam.lr},       {"beta1", cfg.optim.adam.beta1},
                {"beta2", cfg.optim.adam.beta2}, {"eps", cfg.optim.adam.eps},
                {"batch_size", cfg.optim.batch_size},
                {"epochs", cfg.optim.epochs}};
  json jd;
  jd["standardize"] = cfg.data.standardize;
  if (cfg.data.use_files) {
    jd["files"] = {{"train", cfg.data.train_path},
                   {"dev", cfg.data.dev_path},
                   {"test_in", cfg.data.test_in_path},
                   {"test_ood", cfg.data.test_ood_path}};
  } else {
    const auto& g = cfg.data.generator;
    jd["generator"] = {{"kind", g.kind == GeneratorKind::GaussianMixture
                                    ? "gaussian-mixture"
                                    : "two-moons-multiclass"},
                       {"classes", g.classes},
                       {"held_out", g.held_out},
                       {"per_class", g.per_class},
                       {"dim", g.dim},
                       {"center_spread", g.center_spread},
                       {"noise", g.noise},
                       {"seed", g.seed}};
  }
  j["data"] = jd;
  j["metrics"] = {{"ece_bins", cfg.metrics.ece_bins},
                  {"binning", cfg.metrics.scheme == BinningScheme::EqualWidth
                                  ? "equal-width"
                                  : "equal-mass"},
                  {"tau_upper", cfg.metrics.tau_upper},
                  {"nbaucc_m", cfg.metrics.nbaucc_m},
                  {"strict_threshold", cfg.metrics.strict}};
  return j.dump(1);
}

void validate(const ExperimentConfig& cfg) {
  require(cfg.model.dropout >= 0.0 && cfg.model.dropout < 1.0,
          "config: model.dropout must be in [0, 1)");
  for (std::size_t h : cfg.model.hidden)
    require(h > 0, "config: hidden layer sizes must be positive");
  validate(cfg.smoothing);
  validate(cfg.baseline);
  require(cfg.optim.batch_size >= 1, "config: batch_size must be >= 1");
  require(cfg.optim.epochs >= 1, "config: epochs must be >= 1");
  require(cfg.optim.adam.lr > 0.0, "config: lr must be > 0");
  require(cfg.metrics.ece_bins >= 1, "config: ece_bins must be >= 1");
  require(cfg.metrics.nbaucc_m >= 1, "config: nbaucc_m must be >= 1");
  for (double tu : cfg.metrics.tau_upper)
    require(tu > 0.0 && tu <= 1.0, "config: tau_upper values must be in (0, 1]");
  if (!cfg.data.use_files) validate(cfg.data.generator);

  const bool smoothing_active =
      cfg.smoothing.lambda_on > 0.0 || cfg.smoothing.lambda_off > 0.0;
  require(!smoothing_active || cfg.baseline.kind == BaselineKind::Vanilla,
          "config: exactly one method may be active; baseline '",
          to_string(cfg.baseline.kind),
          "' requires lambda_on = lambda_off = 0");
}

}  // namespace calib
