#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "calib/data.hpp"

using namespace calib;

namespace {

std::string tmp_file(const std::string& name, const std::string& content) {
  auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream f(path);
  f << content;
  return path.string();
}

}  // namespace

TEST_CASE("generate: split arithmetic and shapes") {
  GeneratorSpec spec;
  spec.classes = 6;
  spec.held_out = 2;
  spec.per_class = 100;
  spec.dim = 8;
  DatasetBundle b = generate(spec);

  CHECK(b.num_classes == 4);
  CHECK(b.dim == 8);
  CHECK(b.train.size() == 240);
  CHECK(b.dev.size() == 60);
  CHECK(b.test_in.size() == 100);
  CHECK(b.test_ood.size() == 200);

  // uniform class priors in each split
  std::vector<int> counts(4, 0);
  for (const auto& ex : b.train) counts[ex.label] += 1;
  for (int c : counts) CHECK(c == 60);

  for (const auto& ex : b.train) CHECK(ex.x.size() == 8);
  for (const auto& x : b.test_ood) CHECK(x.size() == 8);
}

TEST_CASE("generate: determinism and split disjointness") {
  GeneratorSpec spec;
  spec.per_class = 40;
  spec.seed = 99;
  DatasetBundle a = generate(spec);
  DatasetBundle b = generate(spec);

  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].x == b.train[i].x);
    CHECK(a.train[i].label == b.train[i].label);
  }
  REQUIRE(a.test_ood.size() == b.test_ood.size());
  for (std::size_t i = 0; i < a.test_ood.size(); ++i)
    CHECK(a.test_ood[i] == b.test_ood[i]);

  // no vector appears in two splits
  auto key = [](const Vec& v) {
    std::string s;
    for (double x : v) s += std::to_string(x) + ",";
    return s;
  };
  std::set<std::string> seen;
  std::size_t total = 0;
  for (const auto& ex : a.train) seen.insert(key(ex.x)), ++total;
  for (const auto& ex : a.dev) seen.insert(key(ex.x)), ++total;
  for (const auto& ex : a.test_in) seen.insert(key(ex.x)), ++total;
  CHECK(seen.size() == total);

  DatasetBundle c = generate([&] {
    GeneratorSpec s = spec;
    s.seed = 100;
    return s;
  }());
  CHECK(c.train[0].x != a.train[0].x);
}

TEST_CASE("generate: two-moons variant is 2-D") {
  GeneratorSpec spec;
  spec.kind = GeneratorKind::TwoMoonsMulticlass;
  spec.classes = 5;
  spec.held_out = 1;
  spec.per_class = 30;
  spec.noise = 0.05;
  DatasetBundle b = generate(spec);
  CHECK(b.dim == 2);
  CHECK(b.num_classes == 4);
  for (const auto& ex : b.train) CHECK(ex.x.size() == 2);
}

TEST_CASE("generate: invalid specs") {
  GeneratorSpec spec;
  spec.held_out = 6;
  CHECK_THROWS_AS(generate(spec), Error);
  spec = GeneratorSpec{};
  spec.per_class = 0;
  CHECK_THROWS_AS(generate(spec), Error);
  spec = GeneratorSpec{};
  spec.classes = 2;
  spec.held_out = 1;  // would leave one in-distribution class
  CHECK_THROWS_AS(generate(spec), Error);
}

TEST_CASE("load_embeddings: happy path") {
  std::string train = tmp_file("emb_train.csv",
                               "0, 1.0, 2.0\n"
                               "1, -1.0, 0.5\n"
                               "0, 0.25, 0.75\n");
  std::string dev = tmp_file("emb_dev.csv", "0, 0.0, 1.0\n1, 1.0, 0.0\n");
  std::string test = tmp_file("emb_test.csv", "1, 2.0, 2.0\n0, -2.0, 1.0\n");
  std::string ood = tmp_file("emb_ood.csv", "5.0, 5.0\n-5.0, -5.0\n");

  DatasetBundle b = load_embeddings(train, dev, test, ood);
  CHECK(b.dim == 2);
  CHECK(b.num_classes == 2);
  REQUIRE(b.train.size() == 3);
  CHECK(b.train[0].label == 0);
  CHECK(b.train[0].x == Vec{1.0, 2.0});
  CHECK(b.test_ood.size() == 2);
  CHECK(b.provenance.find("emb_train.csv") != std::string::npos);

  // OOD split optional
  DatasetBundle no_ood = load_embeddings(train, dev, test, "");
  CHECK(no_ood.test_ood.empty());
}

TEST_CASE("load_embeddings: error contracts name file and line") {
  std::string train = tmp_file("emb_t2.csv", "0, 1.0, 2.0\n1, 3.0\n");
  std::string dev = tmp_file("emb_d2.csv", "0, 0.0, 1.0\n1, 1.0, 0.0\n");
  std::string test = tmp_file("emb_e2.csv", "0, 0.0, 1.0\n1, 1.0, 0.0\n");
  try {
    load_embeddings(train, dev, test, "");
    FAIL("expected ragged-row error");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("emb_t2.csv") != std::string::npos);
    CHECK(msg.find(":2") != std::string::npos);
  }

  // non-contiguous labels across every in-distribution file
  std::string gap = tmp_file("emb_gap.csv", "0, 1.0, 2.0\n2, 3.0, 1.0\n");
  CHECK_THROWS_WITH_AS(load_embeddings(gap, gap, gap, ""),
                       doctest::Contains("contiguous"), Error);

  // non-numeric field
  std::string junk = tmp_file("emb_junk.csv", "0, 1.0, x\n");
  CHECK_THROWS_AS(load_embeddings(junk, dev, test, ""), Error);

  // mismatched dimension across files
  std::string wide = tmp_file("emb_wide.csv", "0, 1.0, 2.0, 3.0\n1, 1.0, 1.0, 1.0\n");
  CHECK_THROWS_AS(load_embeddings(wide, dev, test, ""), Error);
}

TEST_CASE("standardize centers and scales on the train split") {
  GeneratorSpec spec;
  spec.per_class = 50;
  spec.center_spread = 3.0;
  DatasetBundle b = generate(spec);
  standardize(b);
  const std::size_t n = b.train.size();
  for (std::size_t j = 0; j < b.dim; ++j) {
    double mean = 0.0, var = 0.0;
    for (const auto& ex : b.train) mean += ex.x[j];
    mean /= static_cast<double>(n);
    for (const auto& ex : b.train) var += (ex.x[j] - mean) * (ex.x[j] - mean);
    var /= static_cast<double>(n);
    CHECK(std::fabs(mean) < 1e-9);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
  }
}
