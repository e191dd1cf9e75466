// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#include "negtree/sampling/proposal.hpp"

#include <algorithm>
#include <cmath>

namespace negtree {

int select_level(double gamma, const SoftmaxParams& p, double base) {
  if (!(gamma > 1.0)) throw InvalidInput("gamma must be > 1");
  require(base > 1.0, "tree base must be > 1");
  require(p.beta > 0.0 && std::isfinite(p.beta), "select_level needs beta > 0");
  const double threshold = std::log(gamma) / (2.0 * p.beta);
  int l = static_cast<int>(std::floor(std::log(threshold) / std::log(base)));
  while (level_scale(base, l + 1) <= threshold) ++l;
  while (level_scale(base, l) > threshold) --l;
  return l;
}

ClusterProposal::Draw ClusterProposal::draw(Rng& rng) const {
  const std::size_t c = table.sample(rng);
  const auto m = members(c);
  return {m[rng.below(m.size())], c};
}

double ClusterProposal::target_logit(TargetId y) const { return beta * forest->metric().similarity(query, y); }

std::span<const TargetId> ClusterProposal::members(std::size_t c) const {
  return forest->tree(clusters[c].ref.tree).members(*clusters[c].ref.node);
}

ClusterProposal proposal_from_clustering(const SGForest& forest, VecRef query_embedding,
                                         const std::vector<ClusterRef>& clustering, const SoftmaxParams& p,
                                         bool truncated) {
  validate(p);
  require(!clustering.empty(), "empty clustering");
  ClusterProposal q;
  q.forest = &forest;
  q.query = forest.metric().query_point(query_embedding);
  q.beta = p.beta;
  q.truncated = truncated;
  std::uint64_t total = 0;
  std::vector<double> lw;
  for (const ClusterRef& r : clustering) {
    ProposalCluster c;
    c.ref = r;
    c.count = r.node->count;
    c.logit = q.target_logit(r.node->rep);
    c.log_weight = std::log(static_cast<double>(c.count)) + c.logit;
    total += c.count;
    lw.push_back(c.log_weight);
    q.clusters.push_back(c);
  }
  if (!truncated && total != forest.num_targets())
    throw InvalidInput("clustering does not partition the targets");
  Eigen::Map<Vec> lwv(lw.data(), static_cast<Eigen::Index>(lw.size()));
  q.log_zhat = log_sum_exp(lwv);
  q.table = AliasTable(lw);
  return q;
}

Vec proposal_distribution(const ClusterProposal& q) {
  Vec out = Vec::Zero(static_cast<Eigen::Index>(q.forest->num_targets()));
  for (std::size_t c = 0; c < q.clusters.size(); ++c) {
    const double py = std::exp(q.clusters[c].logit - q.log_zhat);
    for (TargetId y : q.members(c)) out[y] = py;
  }
  return out;
}

FindResult find_clustering(const SGForest& forest, VecRef query_embedding, const SoftmaxParams& p,
                           const FindOptions& opts) {
  require(opts.max_frontier >= 1, "max_frontier must be >= 1");
  const TreeMetric& metric = forest.metric();
  const double b = forest.base();
  FindResult res;
  res.start_level = select_level(opts.gamma, p, b);
  const int m = opts.deepest_level.value_or(res.start_level);
  require(m <= res.start_level, "deepest level must not exceed the start level");
  const Vec qp = metric.query_point(query_embedding);

  struct Item {
    ClusterRef ref;
    double d;
  };
  auto item = [&](ClusterRef r) { return Item{r, metric.distance(qp, r.node->rep)}; };
  std::vector<Item> frontier;
  for (const ClusterRef& r : level_clustering(forest, res.start_level)) frontier.push_back(item(r));
  std::vector<Item> emitted;

  const double bm = level_scale(b, m);
  for (int k = res.start_level; k > m; --k) {
    const double far = level_scale(b, k) + bm;
    std::vector<Item> next;
    for (const Item& f : frontier) {
      // Every descendant of f lies within b^k, so a far node needs no split.
      if (f.d > far) {
        emitted.push_back(f);
        continue;
      }
      if (f.ref.node->leaf() || f.ref.node->level <= k - 1) {
        next.push_back(f);
        continue;
      }
      for (const auto& c : f.ref.node->children) {
        Item ci = c->rep == f.ref.node->rep ? Item{{c.get(), f.ref.tree}, f.d} : item({c.get(), f.ref.tree});
        (ci.d > far ? emitted : next).push_back(ci);
      }
    }
    if (next.size() > opts.max_frontier) {
      std::stable_sort(next.begin(), next.end(), [](const Item& a, const Item& c) { return a.d < c.d; });
      emitted.insert(emitted.end(), next.begin() + static_cast<std::ptrdiff_t>(opts.max_frontier), next.end());
      next.resize(opts.max_frontier);
      res.frontier_capped = true;
    }
    frontier = std::move(next);
    if (std::all_of(frontier.begin(), frontier.end(), [](const Item& f) { return f.ref.node->leaf(); })) break;
  }
  emitted.insert(emitted.end(), frontier.begin(), frontier.end());
  if (opts.top_k_clusters > 0 && emitted.size() > opts.top_k_clusters) {
    std::stable_sort(emitted.begin(), emitted.end(), [](const Item& a, const Item& c) { return a.d < c.d; });
    emitted.resize(opts.top_k_clusters);
    res.truncated = true;
  }
  for (const Item& e : emitted) res.clusters.push_back(e.ref);
  return res;
}

}  // namespace negtree
