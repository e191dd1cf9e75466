// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "negtree/sampling/proposal.hpp"

namespace negtree {

struct MhOptions {
  // Negative control: accept every proposal, so chains sample Q instead of P.
  bool mutate_acceptance = false;
  bool keep_trace = false;
};

struct MhResult {
  std::vector<TargetId> finals;
  std::vector<TargetId> visited;  // every chain state, when keep_trace
  std::uint64_t proposals = 0;
  std::uint64_t accepted = 0;
  double acceptance_rate() const { return proposals ? double(accepted) / double(proposals) : 1.0; }
};

// k independent-MH chains. A chain of length s is one proposal draw followed by
// s - 1 transitions; chain c draws from rng.split(c).
MhResult mh_sample(const ClusterProposal& proposal, std::size_t s, std::size_t k, const Rng& rng,
                   const MhOptions& opts = {});

struct RejectionOptions {
  bool mutate_acceptance = false;  // negative control: accept the first node drawn
};

struct RejectionStats {
  std::uint64_t samples = 0;
  std::uint64_t rounds = 0;         // top-level draws, including restarts
  std::uint64_t descent_steps = 0;  // child moves
};

// Tree-descending exact sampler. Cluster C carries mass U_C = m_C A_C / |Y|,
// with m_C the descendants it accounts for (all of them, minus one for a
// self-child) and A_C = exp(beta min(<q, rep C> + |q| maxd_C, a_parent)) an
// upper bound on every descendant weight that never grows along a descent.
// An eligible node returns its representative with probability w_C / (m_C A_C).
class RejectionSampler {
 public:
  RejectionSampler(const SGForest& forest, VecRef query_embedding, int start_level, const SoftmaxParams& p,
                   const RejectionOptions& opts = {});
  TargetId sample(Rng& rng);
  const RejectionStats& stats() const { return stats_; }
  std::size_t top_size() const { return top_.size(); }

 private:
  // log U_C and the clamped log A_C it was computed from. drop_rep excludes a
  // representative already accounted for at the parent.
  std::pair<double, double> log_mass(const SGNode& n, double logit, double parent_cap, bool drop_rep) const;

  const SGForest* forest_;
  Vec query_;
  double beta_;
  double radius_scale_;
  double log_n_;
  RejectionOptions opts_;
  std::vector<const SGNode*> top_;
  std::vector<double> top_logit_;
  std::vector<double> top_log_mass_;
  std::vector<double> top_cap_;
  AliasTable table_;
  RejectionStats stats_;
};

TargetId rejection_sample(const SGForest& forest, VecRef query_embedding, int start_level, const SoftmaxParams& p,
                          Rng& rng);

// Candidates deduplicated, y_pos dropped, sorted by logit (desc, ties by index),
// cut to k; short lists are padded from the heaviest proposal clusters.
std::vector<TargetId> topk_hard_negatives(const ClusterProposal& proposal, std::span<const TargetId> candidates,
                                          std::size_t k, TargetId y_pos);

}  // namespace negtree
