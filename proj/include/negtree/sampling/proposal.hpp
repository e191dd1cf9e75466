// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "negtree/core/rng.hpp"
#include "negtree/core/softmax.hpp"
#include "negtree/sampling/alias.hpp"
#include "negtree/sgtree/tree.hpp"

namespace negtree {

// Largest l with b^l <= log(gamma) / (2 beta).
int select_level(double gamma, const SoftmaxParams& p, double base);

struct ProposalCluster {
  ClusterRef ref;
  std::uint64_t count = 0;
  double logit = 0.0;       // beta <query, rep>
  double log_weight = 0.0;  // log(count) + logit
};

// Q(y | x; C) = exp(logit of y's cluster) / zHat.
struct ClusterProposal {
  const SGForest* forest = nullptr;
  Vec query;  // in the forest metric's query space
  double beta = 0.0;
  std::vector<ProposalCluster> clusters;
  double log_zhat = 0.0;
  bool truncated = false;
  AliasTable table;

  struct Draw {
    TargetId target;
    std::size_t cluster;
  };
  Draw draw(Rng& rng) const;
  // beta <query, y> under the forest's cached embeddings.
  double target_logit(TargetId y) const;
  std::span<const TargetId> members(std::size_t cluster) const;
};

ClusterProposal proposal_from_clustering(const SGForest& forest, VecRef query_embedding,
                                         const std::vector<ClusterRef>& clustering, const SoftmaxParams& p,
                                         bool truncated = false);

// Q(y) for every target (0 outside a truncated proposal).
Vec proposal_distribution(const ClusterProposal& q);

struct FindOptions {
  double gamma = 7.38905609893065;  // e^2
  std::optional<int> deepest_level;  // m; defaults to the start level
  std::size_t max_frontier = 100;
  std::size_t top_k_clusters = 0;  // >0: keep only the closest clusters (truncated)
};

struct FindResult {
  std::vector<ClusterRef> clusters;
  int start_level = 0;
  bool frontier_capped = false;
  bool truncated = false;
};

FindResult find_clustering(const SGForest& forest, VecRef query_embedding, const SoftmaxParams& p,
                           const FindOptions& opts);

}  // namespace negtree
