// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "negtree/harness/checks.hpp"
#include "negtree/harness/synthetic.hpp"
#include "negtree/trainer/trainer.hpp"

namespace negtree {

struct NamedConfig {
  std::string name;
  TrainConfig config;
};

struct ExperimentSpec {
  SyntheticTask task;
  std::vector<NamedConfig> runs;
  std::vector<std::string> stat_tests;  // check names: mh-tv-decay, gradient-bias-bound
  std::string output_dir;               // empty: nothing is written
  unsigned workers = 1;

  void validate() const;
};

// {"task": {...}, "base": {...}, "runs": [{"name": ..., "config": {...}}], "statTests": [...],
//  "outputDir": ..., "workers": n}. Each run's config is merged over base.
ExperimentSpec experiment_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentSpec& s);

struct RunOutcome {
  std::string name;
  TrainConfig config;
  std::optional<RunReport> report;
  std::string error;  // set when the sub-run failed
  double seconds = 0.0;
};

struct ExperimentResult {
  std::vector<RunOutcome> runs;
  std::vector<CheckResult> checks;
  std::vector<TvRow> tv;
  std::vector<BiasRow> bias;
};

ExperimentResult run_experiment(const ExperimentSpec& spec);
ExperimentResult run_experiment(const ExperimentSpec& spec, const SyntheticData& data);

// Fixed headers; no wall-clock columns, so reruns are byte-identical.
void write_comparison_csv(std::ostream& os, const std::vector<RunOutcome>& runs);
void write_runs_csv(std::ostream& os, const std::vector<RunOutcome>& runs);
void write_sampler_csv(std::ostream& os, const std::vector<RunOutcome>& runs);
void write_repair_csv(std::ostream& os, const std::vector<RunOutcome>& runs);
void write_checks_csv(std::ostream& os, const std::vector<CheckResult>& checks);
void write_experiment(const std::string& dir, const ExperimentSpec& spec, const ExperimentResult& result);

struct OrderingRow {
  std::uint64_t seed = 0;
  double in_batch = 0.0;
  double uniform = 0.0;
  double dynnibal = 0.0;
  double exhaustive = 0.0;

  bool ordered() const { return exhaustive >= dynnibal && dynnibal >= uniform && uniform >= in_batch; }
  // Share of the uniform-to-exhaustive recall@1 gap closed by dynnibal.
  double gap_closed() const;
};

struct OrderingCheck {
  SyntheticTask task;  // seed replaced per run
  TrainConfig base;    // strategy and seed replaced per run
  std::size_t seeds = 5;
  std::size_t required_ordered = 4;
  std::size_t required_gap = 3;
  double gap_fraction = 0.5;
  unsigned workers = 1;
};

TrainConfig default_ordering_config();
CheckResult check_strategy_ordering(const OrderingCheck& c, std::vector<OrderingRow>* rows = nullptr);

}  // namespace negtree
