#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "gpldla/data.hpp"
#include "gpldla/errors.hpp"
#include "gpldla/evaluation.hpp"
#include "gpldla/baselines.hpp"

using namespace gpldla;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& text) {
  const fs::path p = fs::temp_directory_path() / ("gpldla_test_" + name);
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("synthetic pool") {
  SyntheticTaskConfig cfg;
  cfg.noise_scale = 0.0;
  const auto pool = generate_synthetic_pool(cfg);
  CHECK(pool.class_ids(SplitTag::train).size() == 24);
  CHECK(pool.class_ids(SplitTag::val).size() == 8);
  CHECK(pool.class_ids(SplitTag::test).size() == 8);
  const Tensor& s = pool.samples(3);
  for (std::size_t i = 1; i < s.rows(); ++i) {
    for (std::size_t c = 0; c < s.cols(); ++c) CHECK(s(i, c) == s(0, c));
  }
  const auto again = generate_synthetic_pool(cfg);
  for (std::int64_t id = 0; id < 40; ++id) CHECK(pool.samples(id) == again.samples(id));
}

TEST_CASE("nearest centroid on raw synthetic features") {
  SyntheticTaskConfig cfg;
  cfg.noise_scale = 0.5;
  const auto pool = generate_synthetic_pool(cfg);
  const auto report = evaluate_accuracy(
      pool, SplitTag::test, 200, EpisodeShape{}, 5, [](const Episode& e, Rng&) {
        return protonet_logits(Var::constant(e.support.features), e.support.labels, e.shape.ways,
                               Var::constant(e.query.features))
            .value();
      });
  CHECK(report.mean >= 0.95);
}

TEST_CASE("load_dataset") {
  const auto csv = write_temp("a.csv", "1.0,2.0,7\n3.0,4.0,9\n");
  const auto split = write_temp("a.split", "train: 7\nval:\ntest: 9\n");
  const auto ds = load_dataset(csv, split);
  CHECK(ds.total_samples() == 2);
  CHECK(ds.input_dim() == 2);
  CHECK(ds.samples(7) == Tensor::matrix({{1.0, 2.0}}));
  CHECK(ds.class_ids(SplitTag::test) == std::vector<std::int64_t>{9});

  CHECK_THROWS_AS(load_dataset(write_temp("empty.csv", ""), split), ParseError);
  try {
    load_dataset(write_temp("bad.csv", "1.0,2.0,7\n3.0,x,9\n"), split);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
}

TEST_CASE("sample_episode") {
  std::map<std::int64_t, Tensor> classes;
  for (std::int64_t c = 0; c < 3; ++c) {
    Tensor t(Shape{4, 1});
    for (std::size_t i = 0; i < 4; ++i) t[i] = 10.0 * c + i;
    classes.emplace(c, t);
  }
  const DatasetSplit ds(1, classes, {0, 1, 2}, {}, {});
  const EpisodeShape shape{3, 1, 3};
  Rng rng(9);
  const auto e = sample_episode(ds, SplitTag::train, shape, rng);
  std::multiset<double> seen;
  for (double v : e.support.features.data()) seen.insert(v);
  for (double v : e.query.features.data()) seen.insert(v);
  CHECK(seen.size() == 12);
  CHECK(std::set<double>(seen.begin(), seen.end()).size() == 12);
  for (std::size_t i = 0; i < e.query.labels.size(); ++i) {
    CHECK(std::floor(e.query.features[i] / 10.0) == static_cast<double>(e.class_ids[e.query.labels[i]]));
  }

  Rng r1(5), r2(5);
  const auto a = sample_episode(ds, SplitTag::train, {2, 1, 2}, r1);
  const auto b = sample_episode(ds, SplitTag::train, {2, 1, 2}, r2);
  CHECK(a.support.features == b.support.features);
  CHECK(a.query.features == b.query.features);
  CHECK_THROWS_AS(sample_episode(ds, SplitTag::train, {4, 1, 1}, r1), CapacityError);
  CHECK_THROWS_AS(sample_episode(ds, SplitTag::train, {2, 2, 3}, r1), CapacityError);
}
