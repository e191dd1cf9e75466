// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#include "negtree/sampling/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace negtree {

MhResult mh_sample(const ClusterProposal& q, std::size_t s, std::size_t k, const Rng& rng, const MhOptions& opts) {
  require(s >= 1, "chain length must be >= 1");
  require(k >= 1, "need at least one chain");
  MhResult out;
  out.finals.reserve(k);
  for (std::size_t c = 0; c < k; ++c) {
    Rng r = rng.split(c);
    auto cur = q.draw(r);
    // log P~(y) - log Q(y) up to constants.
    double cur_w = q.target_logit(cur.target) - q.clusters[cur.cluster].logit;
    if (opts.keep_trace) out.visited.push_back(cur.target);
    for (std::size_t step = 1; step < s; ++step) {
      auto nxt = q.draw(r);
      const double nxt_w = q.target_logit(nxt.target) - q.clusters[nxt.cluster].logit;
      ++out.proposals;
      const double u = r.uniform();
      if (opts.mutate_acceptance || std::log(u) < nxt_w - cur_w) {
        cur = nxt;
        cur_w = nxt_w;
        ++out.accepted;
      }
      if (opts.keep_trace) out.visited.push_back(cur.target);
    }
    out.finals.push_back(cur.target);
  }
  return out;
}

RejectionSampler::RejectionSampler(const SGForest& forest, VecRef query_embedding, int start_level,
                                   const SoftmaxParams& p, const RejectionOptions& opts)
    : forest_(&forest), beta_(p.beta), opts_(opts) {
  validate(p);
  if (forest.metric().kind() != MetricKind::Euclidean)
    throw InvalidInput("rejection sampling needs the euclidean tree metric");
  query_ = forest.metric().query_point(query_embedding);
  // <q, y - c> <= |q| |y - c|; a tiny relative margin absorbs rounding.
  radius_scale_ = query_.norm() * (1.0 + 1e-12);
  log_n_ = std::log(static_cast<double>(forest.num_targets()));
  std::vector<double> lw;
  for (const ClusterRef& r : level_clustering(forest, start_level)) {
    top_.push_back(r.node);
    const double logit = beta_ * forest.metric().similarity(query_, r.node->rep);
    // Top-slice clusters own their representative even when it is shared with an ancestor.
    const auto [lm, cap] = log_mass(*r.node, logit, std::numeric_limits<double>::infinity(), false);
    top_logit_.push_back(logit);
    top_log_mass_.push_back(lm);
    top_cap_.push_back(cap);
    lw.push_back(lm);
  }
  table_ = AliasTable(lw);
}

std::pair<double, double> RejectionSampler::log_mass(const SGNode& n, double logit, double parent_cap,
                                                     bool drop_rep) const {
  const double cap = std::min(parent_cap, logit + beta_ * (n.maxd * radius_scale_ + 1e-12));
  const std::uint64_t m = n.count - (drop_rep ? 1 : 0);
  if (m == 0) return {-std::numeric_limits<double>::infinity(), cap};
  return {std::log(static_cast<double>(m)) - log_n_ + cap, cap};
}

TargetId RejectionSampler::sample(Rng& rng) {
  const TreeMetric& metric = forest_->metric();
  for (;;) {
    ++stats_.rounds;
    const std::size_t t = table_.sample(rng);
    const SGNode* c = top_[t];
    double logit = top_logit_[t];
    double lmass = top_log_mass_[t];
    double cap = top_cap_[t];
    bool eligible = true;
    for (;;) {
      double lbudget = lmass;
      if (eligible) {
        const double log_accept = logit - log_n_ - lmass;
        if (opts_.mutate_acceptance || c->leaf() || std::log(rng.uniform()) < log_accept) {
          ++stats_.samples;
          return c->rep;
        }
        lbudget = lmass + std::log1p(-std::exp(log_accept));
      }
      const double u = rng.uniform();
      double acc = 0.0;
      const SGNode* chosen = nullptr;
      double chosen_logit = 0.0, chosen_mass = 0.0, chosen_cap = 0.0;
      for (const auto& ch : c->children) {
        const double cl = ch->rep == c->rep ? logit : beta_ * metric.similarity(query_, ch->rep);
        const auto [cm, ccap] = log_mass(*ch, cl, cap, ch->self_child);
        acc += std::exp(cm - lbudget);
        if (!chosen && u < acc) {
          chosen = ch.get();
          chosen_logit = cl;
          chosen_mass = cm;
          chosen_cap = ccap;
        }
      }
      if (acc > 1.0 + 1e-9) {
        std::ostringstream os;
        os << "negative restart mass " << 1.0 - acc << " at node rep=" << c->rep << " level=" << c->level
           << " maxd=" << c->maxd;
        throw InternalInvariantError(os.str());
      }
      if (!chosen) break;  // restart from the top slice
      ++stats_.descent_steps;
      c = chosen;
      logit = chosen_logit;
      lmass = chosen_mass;
      cap = chosen_cap;
      eligible = !c->self_child;
    }
  }
}

TargetId rejection_sample(const SGForest& forest, VecRef query_embedding, int start_level, const SoftmaxParams& p,
                          Rng& rng) {
  RejectionSampler s(forest, query_embedding, start_level, p);
  return s.sample(rng);
}

std::vector<TargetId> topk_hard_negatives(const ClusterProposal& proposal, std::span<const TargetId> candidates,
                                          std::size_t k, TargetId y_pos) {
  const std::size_t n = proposal.forest->num_targets();
  k = std::min(k, n > 0 ? n - 1 : 0);
  std::vector<std::pair<double, TargetId>> scored;
  std::unordered_set<TargetId> seen;
  for (TargetId y : candidates)
    if (y != y_pos && seen.insert(y).second) scored.push_back({proposal.target_logit(y), y});
  std::sort(scored.begin(), scored.end(),
            [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
  std::vector<TargetId> out;
  for (std::size_t i = 0; i < scored.size() && out.size() < k; ++i) out.push_back(scored[i].second);
  if (out.size() < k) {
    std::vector<std::size_t> order(proposal.clusters.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return proposal.clusters[a].log_weight > proposal.clusters[b].log_weight;
    });
    for (std::size_t c : order) {
      for (TargetId y : proposal.members(c)) {
        if (out.size() >= k) break;
        if (y != y_pos && seen.insert(y).second) out.push_back(y);
      }
      if (out.size() >= k) break;
    }
  }
  return out;
}

}  // namespace negtree
