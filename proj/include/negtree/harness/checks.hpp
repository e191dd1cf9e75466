// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "negtree/harness/synthetic.hpp"

namespace negtree {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  nlohmann::json values;
  double seconds = 0.0;
};

// Rejection sampler against the exact softmax, one chi-square test per seed.
struct RejectionCheck {
  std::size_t num_targets = 64;
  int dim = 8;
  double beta = 5.0;
  std::size_t draws = 100000;
  std::size_t seeds = 10;
  std::size_t required = 9;
  double alpha = 0.01;
  // Default: the middle level of each tree, so draws descend through clusters.
  std::optional<int> start_level;
  bool mutate = false;
  std::uint64_t seed = 0;
};
CheckResult check_rejection_exactness(const RejectionCheck& c);

struct TvRow {
  std::size_t instance = 0;
  std::size_t s = 0;
  double empirical_tv = 0.0;
  double chain_tv = 0.0;  // exact law of the chain state
  double standard_error = 0.0;
  double gamma_measured = 0.0;
  double bound = 0.0;  // exp(-(s-1)/gamma_measured) + 2 standard errors
};

struct TvCheck {
  std::size_t instances = 10;
  std::size_t num_targets = 64;
  int dim = 8;
  double beta = 5.0;
  double gamma = 7.38905609893065;
  double spread = 0.15;  // targets around num_targets/8 centres; 0 for uniform directions
  std::vector<std::size_t> lengths{1, 2, 5, 10, 20};
  std::size_t draws = 100000;
  bool mutate = false;
  std::uint64_t seed = 0;
};
CheckResult check_mh_tv_decay(const TvCheck& c, std::vector<TvRow>* rows = nullptr);

// Fresh builds satisfy every tree invariant and knn equals a linear scan.
struct TreeBuildCheck {
  std::size_t trees = 20;
  std::size_t max_targets = 512;
  std::uint64_t seed = 0;
};
CheckResult check_tree_build(const TreeBuildCheck& c);

struct ProposalRatioCheck {
  std::size_t trials = 100;
  std::size_t min_targets = 64;
  std::size_t max_targets = 1024;
  double gamma = 7.38905609893065;
  std::uint64_t seed = 0;
};
CheckResult check_proposal_ratio(const ProposalRatioCheck& c);

struct BiasRow {
  std::size_t instance = 0;
  double epsilon = 0.0;  // TV between the chain law and the softmax
  double m_hat = 0.0;
  double sigma = 0.0;
  double error = 0.0;
  double bound = 0.0;  // 2 eps beta M + 3 sigma / sqrt(n)
};

struct BiasCheck {
  std::size_t instances = 10;
  std::size_t num_targets = 256;
  int dim = 16;
  double beta = 5.0;
  double spread = 0.15;
  std::size_t chain_length = 2;
  std::size_t samples = 10000;
  std::uint64_t seed = 0;
};
CheckResult check_gradient_bias_bound(const BiasCheck& c, std::vector<BiasRow>* rows = nullptr);

// Sampled-softmax gradient bias of short-chain negatives against uniform ones.
struct BiasOrderingCheck {
  std::size_t instances = 10;
  std::size_t required = 8;
  std::size_t num_targets = 256;
  std::size_t k = 16;
  std::size_t chain_length = 10;
  std::size_t repetitions = 200;
  std::uint64_t seed = 0;
};
CheckResult check_bias_ordering(const BiasOrderingCheck& c);

struct RepairSoundnessCheck {
  std::size_t scenarios = 100;
  std::size_t min_targets = 50;
  std::size_t max_targets = 300;
  std::uint64_t seed = 0;
};
CheckResult check_repair_soundness(const RepairSoundnessCheck& c);

// Pairwise embedding drift of SGD runs against 4 w eta beta L M.
struct DriftCheck {
  std::size_t runs = 5;
  std::size_t w = 50;
  double eta = 0.05;
  double beta = 5.0;
  std::uint64_t seed = 0;
};
CheckResult check_sgd_drift(const DriftCheck& c);

struct EconomyCheck {
  std::size_t num_targets = 4096;
  int dim = 32;
  double fraction = 0.05;
  double bound = 0.1;
  std::size_t seeds = 3;
  bool clustered = true;  // synthetic-task target features instead of uniform directions
  std::uint64_t seed = 0;
};
CheckResult check_repair_economy(const EconomyCheck& c);

struct NystromCheck {
  double tolerance = 1e-5;
  std::uint64_t seed = 0;
};
CheckResult check_nystrom_exactness(const NystromCheck& c);

struct ReencoderCheck {
  std::size_t scenarios = 10;
  std::size_t num_targets = 500;
  Eigen::Index train_size = 64;
  Eigen::Index dim_low = 24;
  std::uint64_t seed = 0;
};
CheckResult check_reencoder(const ReencoderCheck& c);

struct EquivalenceCheck {
  std::size_t num_targets = 96;
  std::size_t steps = 100;
  double tolerance = 1e-6;
  std::uint64_t seed = 0;
};
CheckResult check_degenerate_equivalence(const EquivalenceCheck& c);

struct StatSuiteOptions {
  std::size_t max_targets = 1024;
  std::uint64_t seed = 0;
  bool mutate = false;  // negative control: broken acceptance in both samplers
};

struct SuiteReport {
  std::vector<CheckResult> checks;
  std::vector<TvRow> tv;
  std::vector<BiasRow> bias;

  bool passed() const;
  nlohmann::json to_json() const;
};

SuiteReport stat_suite(const StatSuiteOptions& opts);

void write_tv_csv(std::ostream& os, const std::vector<TvRow>& rows);
void write_bias_csv(std::ostream& os, const std::vector<BiasRow>& rows);

}  // namespace negtree
