#include "calib/data.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace calib {

GeneratorKind generator_from_string(const std::string& s) {
  if (s == "gaussian-mixture") return GeneratorKind::GaussianMixture;
  if (s == "two-moons-multiclass") return GeneratorKind::TwoMoonsMulticlass;
  fail("unknown generator '", s, "' (expected gaussian-mixture|two-moons-multiclass)");
}

void validate(const GeneratorSpec& spec) {
  require(spec.classes >= 2, "generator: need at least 2 classes");
  require(spec.held_out > 0 && spec.held_out < spec.classes,
          "generator: held_out must be in (0, classes), got ", spec.held_out,
          " of ", spec.classes);
  require(spec.classes - spec.held_out >= 2,
          "generator: need at least 2 in-distribution classes");
  require(spec.per_class > 0, "generator: per_class must be positive");
  require(spec.dim > 0, "generator: dim must be positive");
  require(spec.noise > 0.0, "generator: noise must be positive");
  require(spec.center_spread > 0.0, "generator: center_spread must be positive");
}

namespace {

// One cloud of points per class, deterministic given the spec seed.
std::vector<std::vector<Vec>> sample_classes(const GeneratorSpec& spec, Rng& rng) {
  std::vector<std::vector<Vec>> points(spec.classes);
  if (spec.kind == GeneratorKind::GaussianMixture) {
    std::vector<Vec> centers(spec.classes, Vec(spec.dim));
    for (auto& c : centers)
      for (double& v : c) v = spec.center_spread * rng.normal();
    for (std::size_t k = 0; k < spec.classes; ++k) {
      points[k].resize(spec.per_class, Vec(spec.dim));
      for (auto& x : points[k])
        for (std::size_t j = 0; j < spec.dim; ++j)
          x[j] = centers[k][j] + spec.noise * rng.normal();
    }
  } else {
    // Interleaved arcs on a circle of radius center_spread, 2-D.
    const double arc = 6.283185307179586 / static_cast<double>(spec.classes);
    for (std::size_t k = 0; k < spec.classes; ++k) {
      points[k].resize(spec.per_class, Vec(2));
      for (auto& x : points[k]) {
        double theta = arc * (static_cast<double>(k) + 0.9 * rng.uniform());
        x[0] = spec.center_spread * std::cos(theta) + spec.noise * rng.normal();
        x[1] = spec.center_spread * std::sin(theta) + spec.noise * rng.normal();
      }
    }
  }
  return points;
}

}  // namespace

DatasetBundle generate(const GeneratorSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  auto points = sample_classes(spec, rng);

  DatasetBundle b;
  b.num_classes = spec.classes - spec.held_out;
  b.dim = spec.kind == GeneratorKind::GaussianMixture ? spec.dim : 2;
  {
    std::ostringstream os;
    os << "generated:" << (spec.kind == GeneratorKind::GaussianMixture
                               ? "gaussian-mixture"
                               : "two-moons-multiclass")
       << " classes=" << spec.classes << " held_out=" << spec.held_out
       << " per_class=" << spec.per_class << " dim=" << b.dim
       << " spread=" << spec.center_spread << " noise=" << spec.noise
       << " seed=" << spec.seed;
    b.provenance = os.str();
  }

  for (std::size_t k = 0; k < b.num_classes; ++k) {
    auto& cloud = points[k];
    rng.shuffle(cloud);
    const std::size_t n = cloud.size();
    const std::size_t n_train = n * 60 / 100;
    const std::size_t n_dev = n * 15 / 100;
    for (std::size_t i = 0; i < n; ++i) {
      LabeledExample ex{std::move(cloud[i]), static_cast<int>(k)};
      if (i < n_train)
        b.train.push_back(std::move(ex));
      else if (i < n_train + n_dev)
        b.dev.push_back(std::move(ex));
      else
        b.test_in.push_back(std::move(ex));
    }
  }
  for (std::size_t k = b.num_classes; k < spec.classes; ++k)
    for (auto& x : points[k]) b.test_ood.push_back(std::move(x));

  // seed-controlled global shuffles so batches mix classes
  rng.shuffle(b.train);
  rng.shuffle(b.dev);
  rng.shuffle(b.test_in);
  return b;
}

namespace {

Vec parse_row(const std::string& line, const std::string& path, std::size_t line_no) {
  Vec values;
  std::string cur;
  auto push = [&]() {
    auto bpos = cur.find_first_not_of(" \t\r");
    auto epos = cur.find_last_not_of(" \t\r");
    std::string field =
        bpos == std::string::npos ? std::string() : cur.substr(bpos, epos - bpos + 1);
    require(!field.empty(), path, ":", line_no, ": empty field");
    try {
      std::size_t off = 0;
      values.push_back(std::stod(field, &off));
      if (off != field.size()) fail("x");
    } catch (...) {
      fail(path, ":", line_no, ": cannot parse '", field, "' as a number");
    }
    cur.clear();
  };
  for (char c : line) {
    if (c == ',')
      push();
    else
      cur += c;
  }
  push();
  return values;
}

std::vector<Vec> read_rows(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "cannot open data file '", path, "'");
  std::vector<Vec> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Vec row = parse_row(line, path, line_no);
    if (width == 0)
      width = row.size();
    else
      require(row.size() == width, path, ":", line_no, ": ragged row, expected ",
              width, " fields but found ", row.size());
    for (double v : row)
      require(std::isfinite(v), path, ":", line_no, ": non-finite value");
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), "data file '", path, "' is empty");
  return rows;
}

std::vector<LabeledExample> to_labeled(std::vector<Vec> rows, const std::string& path) {
  std::vector<LabeledExample> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i].size() >= 2, path, ": row ", i + 1,
            " needs a label plus at least one feature");
    double lab = rows[i][0];
    require(lab >= 0.0 && lab == std::floor(lab), path, ": row ", i + 1,
            ": label must be a non-negative integer, got ", lab);
    LabeledExample ex;
    ex.label = static_cast<int>(lab);
    ex.x.assign(rows[i].begin() + 1, rows[i].end());
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

DatasetBundle load_embeddings(const std::string& train_path, const std::string& dev_path,
                              const std::string& test_in_path,
                              const std::string& test_ood_path) {
  DatasetBundle b;
  b.train = to_labeled(read_rows(train_path), train_path);
  b.dev = to_labeled(read_rows(dev_path), dev_path);
  b.test_in = to_labeled(read_rows(test_in_path), test_in_path);
  if (!test_ood_path.empty()) b.test_ood = read_rows(test_ood_path);

  b.dim = b.train.front().x.size();
  auto check_dim = [&](const Vec& x, const std::string& which) {
    require(x.size() == b.dim, which, ": dimension ", x.size(),
            " does not match train dimension ", b.dim);
  };
  int max_label = -1;
  std::vector<bool> seen;
  auto account = [&](const std::vector<LabeledExample>& split, const std::string& which) {
    for (const auto& ex : split) {
      check_dim(ex.x, which);
      if (ex.label > max_label) {
        max_label = ex.label;
        seen.resize(static_cast<std::size_t>(max_label) + 1, false);
      }
      seen[static_cast<std::size_t>(ex.label)] = true;
    }
  };
  account(b.train, train_path);
  account(b.dev, dev_path);
  account(b.test_in, test_in_path);
  for (const auto& x : b.test_ood) check_dim(x, test_ood_path);

  for (std::size_t k = 0; k < seen.size(); ++k)
    require(seen[k], "labels are not contiguous: class ", k,
            " never appears but ", max_label, " does");
  b.num_classes = static_cast<std::size_t>(max_label) + 1;
  require(b.num_classes >= 2, "need at least 2 classes, found ", b.num_classes);

  std::ostringstream os;
  os << "files: train=" << train_path << " (" << b.train.size() << " rows)"
     << " dev=" << dev_path << " (" << b.dev.size() << " rows)"
     << " test_in=" << test_in_path << " (" << b.test_in.size() << " rows)";
  if (!test_ood_path.empty())
    os << " test_ood=" << test_ood_path << " (" << b.test_ood.size() << " rows)";
  b.provenance = os.str();
  return b;
}

void standardize(DatasetBundle& bundle) {
  require(!bundle.train.empty(), "standardize: empty train split");
  const std::size_t d = bundle.dim;
  Vec mean(d, 0.0), var(d, 0.0);
  for (const auto& ex : bundle.train) axpy(1.0, ex.x, mean);
  for (double& v : mean) v /= static_cast<double>(bundle.train.size());
  for (const auto& ex : bundle.train)
    for (std::size_t j = 0; j < d; ++j) {
      double c = ex.x[j] - mean[j];
      var[j] += c * c;
    }
  for (double& v : var) v = std::sqrt(v / static_cast<double>(bundle.train.size()));
  auto apply = [&](Vec& x) {
    for (std::size_t j = 0; j < d; ++j)
      x[j] = var[j] > 0.0 ? (x[j] - mean[j]) / var[j] : x[j] - mean[j];
  };
  for (auto& ex : bundle.train) apply(ex.x);
  for (auto& ex : bundle.dev) apply(ex.x);
  for (auto& ex : bundle.test_in) apply(ex.x);
  for (auto& x : bundle.test_ood) apply(x);
}

}  // namespace calib
