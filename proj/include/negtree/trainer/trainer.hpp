// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "negtree/core/encoder.hpp"
#include "negtree/core/rng.hpp"
#include "negtree/core/store.hpp"
#include "negtree/dynamic/repair.hpp"

namespace negtree {

enum class Strategy { InBatch, Uniform, Snm, Exhaustive, Dynnibal };
enum class Optimizer { Sgd, Adam };
enum class ReencodeMode { Exact, Approximate };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

struct TrainConfig {
  Strategy strategy = Strategy::Dynnibal;
  std::size_t k = 16;          // sampled negatives per example
  std::size_t uniform_k = 16;  // extra uniform negatives for snm and dynnibal
  std::size_t batch_size = 32;
  double eta = 0.05;
  std::size_t num_steps = 1000;
  std::size_t w = 100;  // refresh period
  double gamma = 7.38905609893065;
  std::optional<int> m;  // deepest clustering level
  std::size_t s = 5;     // chain length in draws
  std::size_t max_frontier = 100;
  std::size_t pool_size = 410;
  std::uint64_t seed = 0;
  double beta = 20.0;
  double warmup_fraction = 0.1;
  bool shared_negatives = true;
  Optimizer optimizer = Optimizer::Sgd;
  ReencodeMode reencode = ReencodeMode::Exact;
  std::size_t dim_low = 128;
  std::size_t reencode_train = 256;
  double ridge = 1e-4;
  double tree_base = 1.3;
  std::size_t forest_size = 1;
  std::optional<double> repair_bound;  // unset: analytic 4 w eta beta L M
  std::optional<int> level_cut;
  std::size_t eval_every = 0;  // 0: max(1, num_steps / 20)
  std::size_t eval_queries = 0;  // 0: whole eval split

  void validate() const;
  std::size_t warmup_steps() const;
  std::size_t eval_period() const;
};

// Keys are the camelCase field names ("batchSize", "numSteps", "w", "m", ...);
// unknown keys are rejected.
TrainConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& c);

struct Dataset {
  RowMat train_x;
  std::vector<TargetId> train_y;
  RowMat eval_x;
  std::vector<TargetId> eval_y;
};

using MetricMap = std::map<std::string, double>;

// Each example's negatives are the other examples' positives, minus its own.
std::vector<std::vector<TargetId>> negatives_in_batch(std::span<const TargetId> positives);
// k distinct targets uniformly from [0, n) \ exclude; all remaining ones when k is infeasible.
std::vector<TargetId> negatives_uniform(std::size_t n, std::size_t k, std::span<const TargetId> exclude, Rng& rng);
// Top-k pool members by <query, stale pool embedding>, skipping `exclude`; ties to the lower id.
std::vector<TargetId> negatives_snm(std::span<const TargetId> pool, const RowMat& pool_embeddings,
                                    VecRef query_embedding, std::size_t k, TargetId exclude);

// Rank of each label among all targets by inner product (1 = best; ties to the lower id).
std::vector<std::size_t> label_ranks(const RowMat& queries, const RowMat& targets, std::span<const TargetId> labels);
MetricMap ranking_metrics(std::span<const std::size_t> ranks);
// Exact re-encode of every target and query, then recall@{1,5,10,20,100} and MRR@{1,10,100}.
MetricMap evaluate(const DualEncoder& enc, const RowMat& target_features, const RowMat& eval_x,
                   std::span<const TargetId> eval_y);

struct Checkpoint {
  std::size_t step = 0;
  double train_loss = 0.0;  // mean over steps since the previous checkpoint
  MetricMap metrics;
};

struct EpochRecord {
  std::size_t step = 0;
  double bound = 0.0;
  RebuildStats stats;
};

struct SamplerDiagnostics {
  std::size_t step = 0;
  double acceptance_rate = 0.0;  // MH, since the previous checkpoint
  double proposal_tv = 0.0;      // mean TV(P, Q) over probe queries
  double measured_gamma = 0.0;   // max P/Q over probe queries
  // Mean |E_MH grad log Z - grad log Z| over probe queries, chain length s.
  double gradient_bias = 0.0;
};

struct RunReport {
  TrainConfig config;
  std::vector<double> step_loss;
  std::vector<double> step_seconds;
  std::vector<Checkpoint> checkpoints;
  std::vector<EpochRecord> epochs;
  std::vector<SamplerDiagnostics> sampler;
  std::uint64_t target_encoder_calls = 0;
  double wall_time = 0.0;

  // One record per line, then a summary record. Wall-clock fields are omitted
  // when `timing` is false, leaving a deterministic function of config and data.
  std::string to_jsonl(bool timing = true) const;
  const Checkpoint& final_checkpoint() const { return checkpoints.back(); }
};

// Trains `enc` in place. `store` holds the target features and is encoded
// (exactly) on entry; on return it holds the last cached embeddings.
RunReport train(const TrainConfig& config, const Dataset& data, DualEncoder& enc, TargetStore& store);

}  // namespace negtree
