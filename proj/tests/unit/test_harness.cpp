// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "helpers.hpp"
#include "negtree/harness/checks.hpp"
#include "negtree/harness/experiment.hpp"
#include "negtree/harness/persist.hpp"

using namespace negtree;
using namespace negtree::testing;
namespace fs = std::filesystem;

namespace {

SyntheticTask tiny_task(std::uint64_t seed = 0) {
  SyntheticTask t;
  t.num_targets = 128;
  t.dim = 8;
  t.num_clusters = 8;
  t.train_size = 256;
  t.eval_size = 64;
  t.seed = seed;
  return t;
}

TrainConfig tiny_config(Strategy s) {
  TrainConfig c;
  c.strategy = s;
  c.num_steps = 20;
  c.batch_size = 8;
  c.k = 4;
  c.uniform_k = 4;
  c.w = 10;
  c.repair_bound = 0.05;
  c.eval_every = 10;
  return c;
}

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("negtree_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) { return read_text_file(p.string()); }

}  // namespace

TEST_CASE("synthetic task is deterministic and well formed") {
  const SyntheticTask t = tiny_task(3);
  const SyntheticData a = gen_synthetic(t), b = gen_synthetic(t);
  CHECK(a.target_features == b.target_features);
  CHECK(a.data.train_x == b.data.train_x);
  CHECK(a.data.eval_y == b.data.eval_y);
  CHECK(a.target_features.rows() == 128);
  CHECK(a.data.train_x.rows() == 256);
  CHECK(a.data.eval_x.rows() == 64);
  CHECK((a.target_features.rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-12);
  for (std::size_t y = 0; y < 128; ++y) CHECK(a.cluster_of[y] == y % 8);
  SyntheticTask other = t;
  other.seed = 4;
  CHECK(gen_synthetic(other).target_features != a.target_features);
  // Train and eval queries are separate draws.
  for (Eigen::Index i = 0; i < a.data.eval_x.rows(); ++i)
    CHECK(((a.data.train_x.rowwise() - a.data.eval_x.row(i)).rowwise().norm().minCoeff() > 0.0));
}

TEST_CASE("synthetic task validation") {
  SyntheticTask t = tiny_task();
  t.num_clusters = 129;
  CHECK_THROWS_AS(gen_synthetic(t), InvalidInput);
  t = tiny_task();
  t.noise = -1;
  CHECK_THROWS_AS(gen_synthetic(t), InvalidInput);
  CHECK_THROWS_AS(task_from_json(nlohmann::json{{"numTarget", 4}}), InvalidInput);
  CHECK(to_json(task_from_json(to_json(tiny_task(9)))) == to_json(tiny_task(9)));
}

TEST_CASE("without noise every query's nearest feature is its positive") {
  SyntheticTask t = tiny_task();
  t.noise = 0.0;
  const SyntheticData d = gen_synthetic(t);
  for (Eigen::Index i = 0; i < d.data.train_x.rows(); ++i) {
    Eigen::Index best;
    (d.target_features.rowwise() - d.data.train_x.row(i)).rowwise().squaredNorm().minCoeff(&best);
    CHECK(TargetId(best) == d.data.train_y[std::size_t(i)]);
  }
}

TEST_CASE("one cluster: a random encoder ranks at chance") {
  SyntheticTask t = tiny_task();
  t.num_clusters = 1;
  t.num_targets = 200;
  t.eval_size = 2000;
  const SyntheticData d = gen_synthetic(t);
  const MetricMap m = evaluate(initial_encoder(8, 1), d.target_features, d.data.eval_x, d.data.eval_y);
  const double p = 1.0 / 200.0, sd = std::sqrt(p * (1 - p) / 2000.0);
  CHECK(std::abs(m.at("recall@1") - p) <= 4 * sd);
}

TEST_CASE("default task: the generating identity map is a strong oracle") {
  SyntheticTask t;
  t.train_size = 1;
  const SyntheticData d = gen_synthetic(t);
  const MetricMap m = evaluate(identity_encoder(t.dim), d.target_features, d.data.eval_x, d.data.eval_y);
  MESSAGE("oracle recall@1 " << m.at("recall@1"));
  CHECK(m.at("recall@1") >= 0.9);
}

TEST_CASE("default task: exhaustive training regression floor") {
  SyntheticTask t;
  t.train_size = 2048;
  const SyntheticData d = gen_synthetic(t);
  TrainConfig c = default_ordering_config();
  c.strategy = Strategy::Exhaustive;
  c.num_steps = 300;
  c.eval_every = 300;
  DualEncoder enc = initial_encoder(t.dim, 0);
  TargetStore st;
  st.features = d.target_features;
  const RunReport r = train(c, d.data, enc, st);
  MESSAGE("exhaustive recall@1 after 300 steps " << r.final_checkpoint().metrics.at("recall@1"));
  CHECK(r.final_checkpoint().metrics.at("recall@1") >= 0.6);
  CHECK(r.final_checkpoint().metrics.at("recall@1") > r.checkpoints.front().metrics.at("recall@1"));
}

TEST_CASE("encoder and dataset persistence round trip") {
  Rng rng(2);
  DualEncoder mlp = mlp_encoder(5, 7, 3, rng);
  const DualEncoder back = encoder_from_json(to_json(mlp));
  CHECK(back.params() == mlp.params());
  CHECK(back.spec(Side::Target).hidden_dim == 7);
  nlohmann::json bad = to_json(mlp);
  bad["params"].erase(0);
  CHECK_THROWS_AS(encoder_from_json(bad), InvalidInput);

  const fs::path dir = scratch_dir("dataset");
  const SyntheticTask t = tiny_task();
  const SyntheticData d = gen_synthetic(t);
  save_dataset(dir.string(), t, d);
  const SyntheticData l = load_dataset(dir.string());
  CHECK(l.data.train_y == d.data.train_y);
  CHECK(l.data.eval_y == d.data.eval_y);
  // Stored as 32-bit floats.
  CHECK((l.target_features - d.target_features).cwiseAbs().maxCoeff() < 1e-6);
  CHECK_THROWS_AS(load_dataset((dir / "missing").string()), IoError);
  fs::remove_all(dir);
}

TEST_CASE("experiment table has one row per run per checkpoint and reruns are byte identical") {
  ExperimentSpec spec;
  spec.task = tiny_task();
  for (Strategy s : {Strategy::Uniform, Strategy::Dynnibal, Strategy::Exhaustive})
    spec.runs.push_back({to_string(s), tiny_config(s)});
  spec.stat_tests = {"mh-tv-decay"};
  const fs::path a = scratch_dir("exp_a"), b = scratch_dir("exp_b");
  spec.output_dir = a.string();
  const ExperimentResult r = run_experiment(spec);
  spec.output_dir = b.string();
  spec.workers = 2;
  run_experiment(spec);

  std::istringstream table(slurp(a / "comparison.csv"));
  std::string line;
  std::getline(table, line);
  CHECK(line == "run,strategy,seed,step,train_loss,recall@1,recall@5,recall@10,recall@20,recall@100,mrr@1,mrr@10,mrr@100");
  std::size_t rows = 0;
  while (std::getline(table, line)) ++rows;
  CHECK(rows == 3 * 3);
  for (const char* f : {"comparison.csv", "runs.csv", "sampler.csv", "repair.csv", "tv.csv", "checks.csv",
                        "runs/dynnibal.jsonl"})
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
  CHECK(r.checks.size() == 1);
  CHECK(r.tv.size() == 50);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("a failing sub-run is recorded and the others continue") {
  ExperimentSpec spec;
  spec.task = tiny_task();
  spec.runs.push_back({"ok", tiny_config(Strategy::Uniform)});
  TrainConfig bad = tiny_config(Strategy::Uniform);
  bad.eta = 1e300;
  spec.runs.push_back({"diverges", bad});
  spec.runs.push_back({"also-ok", tiny_config(Strategy::InBatch)});
  const ExperimentResult r = run_experiment(spec);
  REQUIRE(r.runs.size() == 3);
  CHECK(r.runs[0].report.has_value());
  CHECK_FALSE(r.runs[1].report.has_value());
  CHECK(!r.runs[1].error.empty());
  CHECK(r.runs[2].report.has_value());
  std::ostringstream os;
  write_runs_csv(os, r.runs);
  CHECK(os.str().find("diverges,uniform,0,failed") != std::string::npos);
}

TEST_CASE("experiment spec JSON") {
  const nlohmann::json j{{"task", to_json(tiny_task())},
                         {"base", {{"numSteps", 7}, {"k", 3}}},
                         {"runs", {{{"name", "u"}, {"config", {{"strategy", "uniform"}}}},
                                   {{"name", "e"}, {"config", {{"strategy", "exhaustive"}, {"k", 5}}}}}},
                         {"workers", 2}};
  const ExperimentSpec s = experiment_from_json(j);
  REQUIRE(s.runs.size() == 2);
  CHECK(s.runs[0].config.num_steps == 7);
  CHECK(s.runs[0].config.k == 3);
  CHECK(s.runs[1].config.k == 5);
  CHECK(s.workers == 2);
  CHECK(experiment_from_json(to_json(s)).runs[1].config.k == 5);
  nlohmann::json dup = j;
  dup["runs"][1]["name"] = "u";
  CHECK_THROWS_AS(experiment_from_json(dup), InvalidInput);
  nlohmann::json unknown = j;
  unknown["extra"] = 1;
  CHECK_THROWS_AS(experiment_from_json(unknown), InvalidInput);
  nlohmann::json badtest = j;
  badtest["statTests"] = {"nope"};
  CHECK_THROWS_AS(experiment_from_json(badtest), InvalidInput);
}

TEST_CASE("ordering row gap arithmetic") {
  OrderingRow r{0, 0.1, 0.2, 0.5, 0.6};
  CHECK(r.ordered());
  CHECK(r.gap_closed() == doctest::Approx(0.75));
  OrderingRow flat{0, 0.1, 0.3, 0.3, 0.3};
  CHECK(flat.gap_closed() == 1.0);
  OrderingRow inverted{0, 0.1, 0.2, 0.7, 0.6};
  CHECK_FALSE(inverted.ordered());
}

TEST_CASE("stat suite passes and its negative control fails") {
  StatSuiteOptions o;
  o.max_targets = 256;
  const SuiteReport good = stat_suite(o);
  for (const auto& c : good.checks) CHECK_MESSAGE(c.passed, c.name << ": " << c.detail);
  CHECK(good.tv.size() == 50);
  CHECK(good.bias.size() == 10);
  const std::string again = stat_suite(o).to_json().dump();
  CHECK(again == good.to_json().dump());
  o.mutate = true;
  const SuiteReport bad = stat_suite(o);
  CHECK_FALSE(bad.passed());
  CHECK_FALSE(bad.checks.front().passed);
  o.max_targets = 2048;
  CHECK_THROWS_AS(stat_suite(o), InvalidInput);
}

TEST_CASE("TV curve rows respect the decay bound") {
  std::vector<TvRow> rows;
  TvCheck c;
  c.instances = 3;
  c.draws = 20000;
  CHECK(check_mh_tv_decay(c, &rows).passed);
  for (const auto& r : rows) {
    CHECK(r.empirical_tv <= r.bound);
    CHECK(r.chain_tv <= std::exp(-double(r.s - 1) / r.gamma_measured) + 1e-12);
  }
  std::ostringstream os;
  write_tv_csv(os, rows);
  CHECK(os.str().rfind("instance,s,empirical_tv,chain_tv,standard_error,gamma_measured,bound\n", 0) == 0);
}
