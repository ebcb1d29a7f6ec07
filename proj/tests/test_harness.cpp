#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dptbench/harness.hpp"

using namespace dptbench;
using harness::ExperimentConfig;

namespace {

// Small enough for unit-test budgets, large enough to exercise every stage.
ExperimentConfig fast_config() {
  ExperimentConfig cfg;
  cfg.task = harness::Task::kClassification;
  cfg.method = harness::Method::kDpt;
  cfg.fraction = 0.5;
  cfg.seeds = {1, 2, 3};
  cfg.encoder.hidden_dim = 16;
  cfg.encoder.layers = 1;
  cfg.encoder.heads = 2;
  cfg.encoder.ffn_dim = 32;
  cfg.encoder.max_len = 48;
  cfg.train.epochs = 1;
  cfg.train.batch_size = 4;
  cfg.pretrain.steps = 30;
  cfg.pretrain.batch_size = 4;
  cfg.data.n_classes = 2;
  cfg.data.n_per_class = 20;
  return cfg;
}

}  // namespace

TEST_CASE("config parses from JSON and rejects unknown keys") {
  const nlohmann::json good = {
      {"task", "classification"}, {"method", "ft"}, {"fraction", 0.1},
      {"seeds", {4, 5}},          {"encoder", {{"hidden_dim", 32}}},
  };
  const ExperimentConfig cfg = harness::config_from_json(good);
  CHECK(cfg.method == harness::Method::kFt);
  CHECK(cfg.fraction == 0.1);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{4, 5});
  CHECK(cfg.encoder.hidden_dim == 32);
  CHECK(cfg.encoder.layers == 2);  // untouched default

  nlohmann::json bad = good;
  bad["typo_key"] = 1;
  CHECK_THROWS_AS(harness::config_from_json(bad), ConfigError);

  nlohmann::json bad_nested = good;
  bad_nested["encoder"]["hiden_dim"] = 32;
  CHECK_THROWS_AS(harness::config_from_json(bad_nested), ConfigError);

  nlohmann::json bad_type = good;
  bad_type["fraction"] = "lots";
  CHECK_THROWS_AS(harness::config_from_json(bad_type), ConfigError);
}

TEST_CASE("config validation bounds") {
  ExperimentConfig cfg = fast_config();
  cfg.fraction = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = fast_config();
  cfg.seeds = {};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = fast_config();
  cfg.seeds = {3, 3};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = fast_config();
  cfg.qa_threshold = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("config hash is stable and field-sensitive") {
  const ExperimentConfig a = fast_config();
  ExperimentConfig b = fast_config();
  CHECK(harness::config_hash(a) == harness::config_hash(b));
  CHECK(harness::config_hash(a).size() == 16);

  b.mode = dpt::ScoreMode::kDirect;
  CHECK(harness::config_hash(a) != harness::config_hash(b));

  // The ablation pair differs only in the mode field.
  const auto ja = harness::config_to_json(a);
  const auto jb = harness::config_to_json(b);
  int differing = 0;
  for (const auto& item : ja.items())
    if (jb.at(item.key()) != item.value()) ++differing;
  CHECK(differing == 1);
}

TEST_CASE("aggregate statistics") {
  const std::vector<Scalar> vals = {1.0, 2.0, 3.0, 4.0};
  const auto s = harness::aggregate_values(vals);
  CHECK(s.mean == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(s.min == 1.0);
  CHECK(s.max == 4.0);
  CHECK(s.best3_mean == doctest::Approx(3.0).epsilon(1e-15));  // mean of top 3
  CHECK(s.stddev == doctest::Approx(std::sqrt(1.25)).epsilon(1e-12));

  RngStream rng(4);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<Scalar> xs;
    const auto n = 3 + rng.uniform_int(10);
    for (int i = 0; i < n; ++i) xs.push_back(rng.uniform());
    const auto stats = harness::aggregate_values(xs);
    CHECK(stats.best3_mean >= stats.mean - 1e-15);  // top-3 mean dominates the mean
    CHECK(stats.min <= stats.mean);
    CHECK(stats.mean <= stats.max);
  }
}

TEST_CASE("report JSON round-trips byte-identically") {
  harness::ExperimentReport rep;
  rep.config_hash = "0123456789abcdef";
  rep.task = "classification";
  rep.method = "dpt";
  rep.mode = "inverted";
  rep.fraction = 0.1;
  rep.trials = {{1, true, "", {{"accuracy", 0.9375}}},
                {2, true, "", {{"accuracy", 0.8125}}},
                {3, false, "tune_dpt: non-finite loss at epoch 0", {}}};
  rep.aggregate["accuracy"] = harness::aggregate_values(std::vector<Scalar>{0.9375, 0.8125});
  rep.wall_clock_seconds = 1.25;

  const nlohmann::json j = harness::report_to_json(rep);
  const std::string dump1 = j.dump(2);
  const harness::ExperimentReport back = harness::report_from_json(nlohmann::json::parse(dump1));
  const std::string dump2 = harness::report_to_json(back).dump(2);
  CHECK(dump1 == dump2);
  CHECK(back.trials.size() == 3);
  CHECK(back.aggregate.at("accuracy") == rep.aggregate.at("accuracy"));
}

TEST_CASE("CSV rows mirror the JSON per-seed values") {
  harness::ExperimentReport rep;
  rep.task = "qa";
  rep.trials = {{7, true, "", {{"em", 0.5}, {"f1", 0.625}}},
                {2, true, "", {{"em", 0.25}, {"f1", 0.375}}},
                {5, false, "boom", {}}};
  const std::string csv = harness::report_to_csv(rep);

  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "seed,metric,value");
  std::vector<std::string> rows;
  while (std::getline(lines, line))
    if (!line.empty()) rows.push_back(line);
  REQUIRE(rows.size() == 4);  // 2 ok trials x 2 metrics, sorted by seed
  CHECK(rows[0] == "2,em,0.25");
  CHECK(rows[1] == "2,f1,0.375");
  CHECK(rows[2] == "7,em,0.5");
  CHECK(rows[3] == "7,f1,0.625");

  // Cross-format equality of every (seed, metric) value.
  const nlohmann::json j = harness::report_to_json(rep);
  for (const auto& row : rows) {
    const auto c1 = row.find(',');
    const auto c2 = row.find(',', c1 + 1);
    const auto seed = std::stoull(row.substr(0, c1));
    const std::string metric = row.substr(c1 + 1, c2 - c1 - 1);
    const Scalar value = std::stod(row.substr(c2 + 1));
    bool found = false;
    for (const auto& t : j.at("trials"))
      if (t.at("seed").get<std::uint64_t>() == seed && t.at("ok").get<bool>()) {
        CHECK(t.at("metrics").at(metric).get<Scalar>() == value);
        found = true;
      }
    CHECK(found);
  }
}

TEST_CASE("compare requires matching seed lists and recomputes deltas") {
  harness::ExperimentReport a, b;
  a.task = b.task = "classification";
  a.trials = {{1, true, "", {{"accuracy", 0.93}}}, {2, true, "", {{"accuracy", 0.95}}}};
  b.trials = {{1, true, "", {{"accuracy", 0.91}}}, {2, true, "", {{"accuracy", 0.89}}}};
  a.aggregate["accuracy"] = harness::aggregate_values(std::vector<Scalar>{0.93, 0.95});
  b.aggregate["accuracy"] = harness::aggregate_values(std::vector<Scalar>{0.91, 0.89});

  const auto cmp = harness::compare(a, b);
  CHECK(cmp.delta_mean.at("accuracy") == doctest::Approx(0.04).epsilon(1e-12));
  REQUIRE(cmp.per_seed_delta.at("accuracy").size() == 2);
  CHECK(cmp.per_seed_delta.at("accuracy")[0] == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(cmp.per_seed_delta.at("accuracy")[1] == doctest::Approx(0.06).epsilon(1e-12));

  // Delta recomputed from raw per-seed records matches the reported delta.
  Scalar mean_delta = 0.0;
  for (Scalar d : cmp.per_seed_delta.at("accuracy")) mean_delta += d;
  mean_delta /= 2.0;
  CHECK(mean_delta == doctest::Approx(cmp.delta_mean.at("accuracy")).epsilon(1e-12));

  const auto identity = harness::compare(a, a);
  CHECK(identity.delta_mean.at("accuracy") == 0.0);

  harness::ExperimentReport c = b;
  c.trials[1].seed = 9;
  CHECK_THROWS_AS(harness::compare(a, c), ContractError);
  c = b;
  c.task = "qa";
  CHECK_THROWS_AS(harness::compare(a, c), ContractError);
}

TEST_CASE("run_experiment produces one record per seed and reproduces bitwise") {
  const ExperimentConfig cfg = fast_config();
  const auto rep1 = harness::run_experiment(cfg);
  REQUIRE(rep1.trials.size() == 3);
  for (std::size_t i = 0; i < rep1.trials.size(); ++i) {
    CHECK(rep1.trials[i].seed == cfg.seeds[i]);
    CHECK(rep1.trials[i].ok);
    CHECK(rep1.trials[i].metrics.count("accuracy") == 1);
  }
  CHECK(rep1.aggregate.count("accuracy") == 1);

  // Aggregates are exactly recomputable from the per-seed records.
  std::vector<Scalar> values;
  for (const auto& t : rep1.trials) values.push_back(t.metrics.at("accuracy"));
  CHECK(harness::aggregate_values(values) == rep1.aggregate.at("accuracy"));

  const auto rep2 = harness::run_experiment(cfg);
  for (std::size_t i = 0; i < rep1.trials.size(); ++i)
    CHECK(rep1.trials[i].metrics.at("accuracy") == rep2.trials[i].metrics.at("accuracy"));
  CHECK(rep1.config_hash == rep2.config_hash);
}

TEST_CASE("run_trial records a failure reason instead of aborting the sweep") {
  ExperimentConfig cfg = fast_config();
  cfg.pretrain.steps = 5;
  const harness::RunContext ctx = harness::prepare_run(cfg);

  // An impossible template (scaffold larger than max_len) fails the trial.
  ExperimentConfig broken = cfg;
  broken.encoder.max_len = 4;
  harness::RunContext broken_ctx = ctx;
  broken_ctx.pretrained.encoder.config.max_len = 4;
  const auto rec = harness::run_trial(broken, broken_ctx, 1);
  CHECK(!rec.ok);
  CHECK(!rec.reason.empty());
  CHECK(rec.metrics.empty());
}

TEST_CASE("ft and uniform-subsample paths run end to end") {
  ExperimentConfig cfg = fast_config();
  cfg.method = harness::Method::kFt;
  cfg.data.subsample = "uniform";
  cfg.seeds = {1};
  const auto rep = harness::run_experiment(cfg);
  REQUIRE(rep.trials.size() == 1);
  CHECK(rep.trials[0].ok);
  CHECK(rep.method == "ft");
}

TEST_CASE("qa task produces em and f1 metrics") {
  ExperimentConfig cfg = fast_config();
  cfg.task = harness::Task::kQa;
  cfg.seeds = {1};
  cfg.train.epochs = 1;
  const auto rep = harness::run_experiment(cfg);
  REQUIRE(rep.trials.size() == 1);
  CHECK(rep.trials[0].ok);
  CHECK(rep.trials[0].metrics.count("em") == 1);
  CHECK(rep.trials[0].metrics.count("f1") == 1);
}

TEST_CASE("evaluate_checkpoint reports metrics for a tuned model") {
  ExperimentConfig cfg = fast_config();
  cfg.seeds = {1};
  const harness::RunContext ctx = harness::prepare_run(cfg);
  const harness::TrialOutput out = harness::run_trial_full(cfg, ctx, 1);
  REQUIRE(out.record.ok);

  Checkpoint ckpt;
  ckpt.model = out.model;
  ckpt.vocab = ctx.vocab;
  ckpt.meta = out.meta;
  const auto metrics = harness::evaluate_checkpoint(ckpt, cfg, "dev");
  CHECK(metrics.count("accuracy") == 1);
  CHECK(metrics.at("accuracy") >= 0.0);
  CHECK(metrics.at("accuracy") <= 1.0);
  CHECK_THROWS_AS(harness::evaluate_checkpoint(ckpt, cfg, "test"), ConfigError);
}
