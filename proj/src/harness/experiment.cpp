// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#include "negtree/harness/experiment.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "negtree/harness/persist.hpp"

namespace negtree {

namespace {

const std::vector<std::string> kMetricColumns{"recall@1", "recall@5",  "recall@10", "recall@20",
                                              "recall@100", "mrr@1", "mrr@10", "mrr@100"};

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return out + "\"";
}

// Runs job(i) for i in [0, n) on up to `workers` threads.
template <typename F>
void parallel_for(std::size_t n, unsigned workers, F&& job) {
  const unsigned t = std::max(1u, std::min<unsigned>(workers, unsigned(n)));
  if (t <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < t; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) job(i);
    });
  for (auto& th : pool) th.join();
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw IoError("cannot write " + p.string());
  os.precision(10);
  return os;
}

}  // namespace

void ExperimentSpec::validate() const {
  task.validate();
  require(!runs.empty() || !stat_tests.empty(), "experiment has nothing to run");
  require(workers >= 1, "workers must be >= 1");
  std::vector<std::string> names;
  for (const auto& r : runs) {
    require(!r.name.empty(), "run names must be non-empty");
    require(r.name.find_first_of("/\\ ,") == std::string::npos, "run name '" + r.name + "' has a reserved character");
    names.push_back(r.name);
    r.config.validate();
  }
  std::sort(names.begin(), names.end());
  require(std::adjacent_find(names.begin(), names.end()) == names.end(), "run names must be unique");
  for (const auto& t : stat_tests)
    require(t == "mh-tv-decay" || t == "gradient-bias-bound" || t == "proposal-ratio" || t == "bias-ordering",
            "unknown stat test '" + t + "'");
}

ExperimentSpec experiment_from_json(const nlohmann::json& j) {
  try {
    ExperimentSpec s;
    for (const auto& [k, v] : j.items())
      if (k != "task" && k != "base" && k != "runs" && k != "statTests" && k != "outputDir" && k != "workers")
        throw InvalidInput("unknown experiment key '" + k + "'");
    if (j.contains("task")) s.task = task_from_json(j.at("task"));
    const nlohmann::json base = j.value("base", nlohmann::json::object());
    for (const auto& r : j.value("runs", nlohmann::json::array())) {
      nlohmann::json cfg = base;
      cfg.merge_patch(r.value("config", nlohmann::json::object()));
      s.runs.push_back({r.at("name").get<std::string>(), config_from_json(cfg)});
    }
    s.stat_tests = j.value("statTests", std::vector<std::string>{});
    s.output_dir = j.value("outputDir", std::string());
    s.workers = j.value("workers", 1u);
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("bad experiment spec: ") + e.what());
  }
}

nlohmann::json to_json(const ExperimentSpec& s) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : s.runs) runs.push_back({{"name", r.name}, {"config", to_json(r.config)}});
  return {{"task", to_json(s.task)},
          {"runs", runs},
          {"statTests", s.stat_tests},
          {"outputDir", s.output_dir},
          {"workers", s.workers}};
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  return run_experiment(spec, gen_synthetic(spec.task));
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const SyntheticData& data) {
  spec.validate();
  ExperimentResult res;
  res.runs.resize(spec.runs.size());
  parallel_for(spec.runs.size(), spec.workers, [&](std::size_t i) {
    RunOutcome& out = res.runs[i];
    out.name = spec.runs[i].name;
    out.config = spec.runs[i].config;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      DualEncoder enc = initial_encoder(int(data.target_features.cols()), out.config.seed);
      TargetStore store;
      store.features = data.target_features;
      out.report = train(out.config, data.data, enc, store);
    } catch (const std::exception& e) {
      out.error = e.what();
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });
  for (const auto& t : spec.stat_tests) {
    if (t == "mh-tv-decay") {
      TvCheck c;
      c.seed = spec.task.seed;
      res.checks.push_back(check_mh_tv_decay(c, &res.tv));
    } else if (t == "gradient-bias-bound") {
      BiasCheck c;
      c.seed = spec.task.seed;
      res.checks.push_back(check_gradient_bias_bound(c, &res.bias));
    } else if (t == "proposal-ratio") {
      ProposalRatioCheck c;
      c.seed = spec.task.seed;
      res.checks.push_back(check_proposal_ratio(c));
    } else if (t == "bias-ordering") {
      BiasOrderingCheck c;
      c.seed = spec.task.seed;
      res.checks.push_back(check_bias_ordering(c));
    }
  }
  if (!spec.output_dir.empty()) write_experiment(spec.output_dir, spec, res);
  return res;
}

void write_comparison_csv(std::ostream& os, const std::vector<RunOutcome>& runs) {
  os << "run,strategy,seed,step,train_loss";
  for (const auto& m : kMetricColumns) os << ',' << m;
  os << '\n';
  for (const auto& r : runs) {
    if (!r.report) continue;
    for (const auto& cp : r.report->checkpoints) {
      os << r.name << ',' << to_string(r.config.strategy) << ',' << r.config.seed << ',' << cp.step << ','
         << cp.train_loss;
      for (const auto& m : kMetricColumns) {
        auto it = cp.metrics.find(m);
        os << ',';
        if (it != cp.metrics.end()) os << it->second;
      }
      os << '\n';
    }
  }
}

void write_runs_csv(std::ostream& os, const std::vector<RunOutcome>& runs) {
  os << "run,strategy,seed,status,final_step,final_recall@1,target_encoder_calls,error\n";
  for (const auto& r : runs) {
    os << r.name << ',' << to_string(r.config.strategy) << ',' << r.config.seed << ',' << (r.report ? "ok" : "failed")
       << ',';
    if (r.report && !r.report->checkpoints.empty()) {
      const auto& cp = r.report->final_checkpoint();
      os << cp.step << ',' << cp.metrics.at("recall@1") << ',' << r.report->target_encoder_calls;
    } else {
      os << ",,";
    }
    os << ',' << csv_field(r.error) << '\n';
  }
}

void write_sampler_csv(std::ostream& os, const std::vector<RunOutcome>& runs) {
  os << "run,step,acceptance_rate,proposal_tv,measured_gamma,gradient_bias\n";
  for (const auto& r : runs) {
    if (!r.report) continue;
    for (const auto& s : r.report->sampler)
      os << r.name << ',' << s.step << ',' << s.acceptance_rate << ',' << s.proposal_tv << ',' << s.measured_gamma
         << ',' << s.gradient_bias << '\n';
  }
}

void write_repair_csv(std::ostream& os, const std::vector<RunOutcome>& runs) {
  os << "run,step,bound,nodes_visited,subtrees_rebuilt,leaves_reinserted\n";
  for (const auto& r : runs) {
    if (!r.report) continue;
    for (const auto& e : r.report->epochs)
      os << r.name << ',' << e.step << ',' << e.bound << ',' << e.stats.nodes_visited << ','
         << e.stats.subtrees_rebuilt << ',' << e.stats.leaves_reinserted << '\n';
  }
}

void write_checks_csv(std::ostream& os, const std::vector<CheckResult>& checks) {
  os << "check,passed,detail\n";
  for (const auto& c : checks) os << c.name << ',' << (c.passed ? 1 : 0) << ',' << csv_field(c.detail) << '\n';
}

void write_experiment(const std::string& dir, const ExperimentSpec& spec, const ExperimentResult& result) {
  const std::filesystem::path d(dir);
  std::filesystem::create_directories(d / "runs");
  write_text_file((d / "experiment.json").string(), to_json(spec).dump(2) + "\n");
  {
    auto os = open_out(d / "comparison.csv");
    write_comparison_csv(os, result.runs);
  }
  {
    auto os = open_out(d / "runs.csv");
    write_runs_csv(os, result.runs);
  }
  {
    auto os = open_out(d / "sampler.csv");
    write_sampler_csv(os, result.runs);
  }
  {
    auto os = open_out(d / "repair.csv");
    write_repair_csv(os, result.runs);
  }
  {
    auto os = open_out(d / "checks.csv");
    write_checks_csv(os, result.checks);
  }
  {
    auto os = open_out(d / "tv.csv");
    write_tv_csv(os, result.tv);
  }
  {
    auto os = open_out(d / "bias.csv");
    write_bias_csv(os, result.bias);
  }
  // Wall-clock data lives apart from the deterministic tables.
  {
    auto os = open_out(d / "timing.csv");
    os << "run,seconds\n";
    for (const auto& r : result.runs) os << r.name << ',' << r.seconds << '\n';
  }
  for (const auto& r : result.runs)
    if (r.report) write_text_file((d / "runs" / (r.name + ".jsonl")).string(), r.report->to_jsonl(false));
}

double OrderingRow::gap_closed() const {
  const double gap = exhaustive - uniform;
  if (gap <= 0.0) return dynnibal >= uniform ? 1.0 : 0.0;
  return (dynnibal - uniform) / gap;
}

TrainConfig default_ordering_config() {
  TrainConfig c;
  c.eta = 0.1;
  c.num_steps = 1000;
  c.repair_bound = 0.05;
  c.eval_every = c.num_steps;
  return c;
}

CheckResult check_strategy_ordering(const OrderingCheck& c, std::vector<OrderingRow>* rows) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r;
  r.name = "strategy-ordering";
  std::size_t ordered = 0, gap = 0;
  std::ostringstream seeds;
  for (std::size_t s = 0; s < c.seeds; ++s) {
    ExperimentSpec spec;
    spec.task = c.task;
    spec.task.seed = s;
    spec.workers = c.workers;
    for (Strategy st : {Strategy::InBatch, Strategy::Uniform, Strategy::Dynnibal, Strategy::Exhaustive}) {
      TrainConfig cfg = c.base;
      cfg.strategy = st;
      cfg.seed = s;
      spec.runs.push_back({to_string(st), cfg});
    }
    const ExperimentResult res = run_experiment(spec);
    OrderingRow row;
    row.seed = s;
    double* slots[] = {&row.in_batch, &row.uniform, &row.dynnibal, &row.exhaustive};
    for (std::size_t i = 0; i < 4; ++i) {
      const auto& run = res.runs[i];
      if (!run.report) throw NumericError("ordering run " + run.name + " failed: " + run.error);
      *slots[i] = run.report->final_checkpoint().metrics.at("recall@1");
    }
    ordered += row.ordered();
    gap += row.gap_closed() >= c.gap_fraction;
    r.values["rows"].push_back({{"seed", s},
                                {"inBatch", row.in_batch},
                                {"uniform", row.uniform},
                                {"dynnibal", row.dynnibal},
                                {"exhaustive", row.exhaustive},
                                {"gapClosed", row.gap_closed()}});
    seeds << (s ? "; " : "") << "seed " << s << ": " << row.in_batch << " / " << row.uniform << " / " << row.dynnibal
          << " / " << row.exhaustive;
    if (rows) rows->push_back(row);
  }
  r.passed = ordered >= c.required_ordered && gap >= c.required_gap;
  r.values["ordered"] = ordered;
  r.values["gapClosed"] = gap;
  std::ostringstream os;
  os << "ordered in " << ordered << "/" << c.seeds << " seeds, gap closed >= " << c.gap_fraction << " in " << gap
     << "/" << c.seeds << " (recall@1 in-batch / uniform / dynnibal / exhaustive: " << seeds.str() << ")";
  r.detail = os.str();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace negtree
