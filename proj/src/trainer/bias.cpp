// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#include "negtree/trainer/bias.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace negtree {

Vec mh_marginal(const ClusterProposal& q, std::size_t s) {
  require(s >= 1, "chain length must be >= 1");
  const Vec qd = proposal_distribution(q);
  // Supported targets sorted by log importance weight log P~/Q.
  std::vector<TargetId> ids;
  std::vector<double> lw_of(static_cast<std::size_t>(qd.size()), 0.0);
  for (std::size_t c = 0; c < q.clusters.size(); ++c)
    for (TargetId y : q.members(c)) {
      ids.push_back(y);
      lw_of[y] = q.target_logit(y) - q.clusters[c].logit;
    }
  std::sort(ids.begin(), ids.end(), [&](TargetId a, TargetId b) { return lw_of[a] < lw_of[b]; });
  const std::size_t n = ids.size();
  std::vector<double> lw(n), qs(n), pi(n);
  for (std::size_t i = 0; i < n; ++i) {
    lw[i] = lw_of[ids[i]];
    qs[i] = qd[static_cast<Eigen::Index>(ids[i])];
    pi[i] = qs[i];
  }

  // Rejection mass R(i) = 1 - sum_j Q(j) min(1, w_j / w_i); fixed across steps.
  std::vector<double> reject(n);
  double q_suffix = std::accumulate(qs.begin(), qs.end(), 0.0);
  double below = 0.0;  // sum_{j<i} Q(j) w_j / w_i
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) below = (below + qs[i - 1]) * std::exp(lw[i - 1] - lw[i]);
    reject[i] = std::max(0.0, 1.0 - (q_suffix + below));
    q_suffix -= qs[i];
  }

  std::vector<double> above(n + 1), next(n);
  for (std::size_t step = 1; step < s; ++step) {
    // above[i] = sum_{j>=i} pi(j) w_i / w_j
    above[n] = 0.0;
    for (std::size_t i = n; i-- > 0;)
      above[i] = pi[i] + (i + 1 < n ? std::exp(lw[i] - lw[i + 1]) * above[i + 1] : 0.0);
    double prefix = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      prefix += pi[i];
      const double accept_in = prefix + (i + 1 < n ? std::exp(lw[i] - lw[i + 1]) * above[i + 1] : 0.0);
      next[i] = qs[i] * accept_in + pi[i] * reject[i];
    }
    pi.swap(next);
  }
  Vec out = Vec::Zero(qd.size());
  for (std::size_t i = 0; i < n; ++i) out[static_cast<Eigen::Index>(ids[i])] = pi[i];
  return out;
}

Vec expected_logit_gradient(const DualEncoder& enc, VecRef x, const TargetStore& store, const Vec& weights,
                            const SoftmaxParams& p) {
  require(weights.size() == store.size(), "weights must cover every target");
  Vec g = Vec::Zero(enc.num_params());
  for (Eigen::Index y = 0; y < weights.size(); ++y)
    if (weights[y] != 0.0) g += weights[y] * inner_product_grad(enc, x, store.features.row(y).transpose());
  return p.beta * g;
}

double max_inner_product_gradient(const DualEncoder& enc, VecRef x, const TargetStore& store) {
  double m = 0.0;
  for (Eigen::Index y = 0; y < store.size(); ++y)
    m = std::max(m, inner_product_grad(enc, x, store.features.row(y).transpose()).norm());
  return m;
}

SampledGradient sampled_logit_gradient(const DualEncoder& enc, VecRef x, const TargetStore& store,
                                       std::span<const TargetId> samples, const SoftmaxParams& p) {
  require(!samples.empty(), "need at least one sample");
  // Repeated targets share one gradient evaluation.
  std::vector<TargetId> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::pair<Vec, double>> terms;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    terms.emplace_back(p.beta * inner_product_grad(enc, x, store.features.row(Eigen::Index(sorted[i])).transpose()),
                       double(j - i));
    i = j;
  }
  const double n = double(samples.size());
  SampledGradient out;
  out.mean = Vec::Zero(enc.num_params());
  for (const auto& [g, c] : terms) out.mean += c * g;
  out.mean /= n;
  double ss = 0.0;
  for (const auto& [g, c] : terms) ss += c * (g - out.mean).squaredNorm();
  out.sigma = std::sqrt(ss / n);
  return out;
}

}  // namespace negtree
