// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "helpers.hpp"
#include "negtree/harness/stats.hpp"
#include "negtree/sampling/samplers.hpp"

using namespace negtree;
using namespace negtree::testing;

namespace {

SGForest forest_over(const RowMat& pts, double base = 1.3) {
  BuildOptions o;
  o.base = base;
  return build_forest(TreeMetric::euclidean(pts), o);
}

Vec unit(Rng& rng, int d) { return random_unit_rows(1, d, rng).row(0).transpose(); }

double max_ratio(const Vec& p, const Vec& q) {
  double r = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) r = std::max(r, p[i] / q[i]);
  return r;
}

}  // namespace

TEST_CASE("select_level closed forms") {
  CHECK(select_level(std::exp(4.0), {1.0}, 2.0) == 1);
  CHECK(select_level(std::exp(2.0), {1.0}, 2.0) == 0);
  const int l = select_level(std::exp(2.0), {2.0}, 1.3);
  CHECK(l == -3);
  CHECK(std::pow(1.3, l) <= 0.5);
  CHECK(std::pow(1.3, l + 1) > 0.5);
  CHECK_THROWS_AS(select_level(1.0, {1.0}, 2.0), InvalidInput);
  CHECK_THROWS_AS(select_level(0.5, {1.0}, 2.0), InvalidInput);
}

TEST_CASE("proposal with one cluster is uniform") {
  Rng rng(41);
  RowMat pts = random_unit_rows(30, 5, rng);
  SGForest f = forest_over(pts);
  ClusterProposal q = proposal_from_clustering(f, unit(rng, 5), level_clustering(f, f.max_level()), {4.0});
  Vec d = proposal_distribution(q);
  for (Eigen::Index i = 0; i < d.size(); ++i) CHECK(d[i] == doctest::Approx(1.0 / 30));
}

TEST_CASE("proposal over singleton clusters equals the exact softmax") {
  Rng rng(42);
  RowMat pts = random_unit_rows(40, 6, rng);
  SGForest f = forest_over(pts);
  Vec x = unit(rng, 6);
  ClusterProposal q = proposal_from_clustering(f, x, level_clustering(f, f.min_level() - 1), {7.0});
  Vec exact = exact_softmax(x, pts, {7.0});
  CHECK((proposal_distribution(q) - exact).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(std::exp(q.log_zhat) > 0);
}

TEST_CASE("two-cluster proposal closed form") {
  // Cluster {0,1,2} around e2 with logit 0, singleton {3} with logit ln 2.
  const double a = std::log(2.0);
  RowMat pts(4, 3);
  pts << 0, 1, 0, 0, 0.999, 0.0447, 0, 0.999, -0.0447, a, -std::sqrt(1 - a * a), 0;
  pts.rowwise().normalize();
  SGForest f = forest_over(pts, 2.0);
  const SGNode* root = f.tree(0).root();
  std::vector<ClusterRef> cl;
  for (const auto& c : root->children) cl.push_back({c.get(), 0});
  REQUIRE(cl.size() == 2);
  ClusterProposal q = proposal_from_clustering(f, Vec::Unit(3, 0), cl, {1.0});
  const std::size_t big = q.clusters[0].count == 3 ? 0 : 1;
  REQUIRE(q.clusters[big].count == 3);
  CHECK(std::exp(q.clusters[big].log_weight - q.log_zhat) == doctest::Approx(0.6));
  CHECK(std::exp(q.clusters[1 - big].log_weight - q.log_zhat) == doctest::Approx(0.4));
}

TEST_CASE("proposal input validation") {
  Rng rng(43);
  RowMat pts = random_unit_rows(10, 3, rng);
  SGForest f = forest_over(pts);
  CHECK_THROWS_AS(proposal_from_clustering(f, unit(rng, 3), {}, {1.0}), InvalidInput);
  std::vector<ClusterRef> partial{{f.tree(0).root()->children[0].get(), 0}};
  if (partial[0].node->count < 10) CHECK_THROWS_AS(proposal_from_clustering(f, unit(rng, 3), partial, {1.0}), InvalidInput);
}

TEST_CASE("find_clustering with m equal to the start level returns that level") {
  Rng rng(44);
  RowMat pts = random_unit_rows(256, 8, rng);
  SGForest f = forest_over(pts);
  SoftmaxParams sp{0.5};
  FindOptions o;
  const int l = select_level(o.gamma, sp, 1.3);
  FindResult r = find_clustering(f, unit(rng, 8), sp, o);
  CHECK(r.start_level == l);
  auto expect = level_clustering(f, l);
  REQUIRE(r.clusters.size() == expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i) CHECK(r.clusters[i].node == expect[i].node);
}

TEST_CASE("find_clustering emits the start level for a far query") {
  Rng rng(45);
  RowMat pts = random_rows(100, 4, rng) * 0.05;
  pts.col(0).array() += 1.0;
  pts.rowwise().normalize();
  SGForest f = forest_over(pts);
  SoftmaxParams sp{20.0};
  FindOptions o;
  const int l = select_level(o.gamma, sp, 1.3);
  o.deepest_level = l - 4;
  FindResult r = find_clustering(f, -Vec::Unit(4, 0), sp, o);
  auto expect = level_clustering(f, l);
  REQUIRE(r.clusters.size() == expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i) CHECK(r.clusters[i].node == expect[i].node);
}

TEST_CASE("find_clustering keeps P/Q within gamma") {
  Rng rng(46);
  for (int trial = 0; trial < 20; ++trial) {
    RowMat pts = random_unit_rows(256, 8, rng);
    SGForest f = forest_over(pts);
    SoftmaxParams sp{2.0};
    FindOptions o;
    o.gamma = std::exp(2.0);
    const int l = select_level(o.gamma, sp, 1.3);
    o.deepest_level = l - 3;
    o.max_frontier = 1 << 20;
    Vec x = unit(rng, 8);
    FindResult r = find_clustering(f, x, sp, o);
    ClusterProposal q = proposal_from_clustering(f, x, r.clusters, sp);
    CHECK(max_ratio(exact_softmax(x, pts, sp), proposal_distribution(q)) <= o.gamma);
  }
}

TEST_CASE("find_clustering frontier cap and truncation") {
  Rng rng(47);
  RowMat pts = random_unit_rows(512, 8, rng);
  SGForest f = forest_over(pts);
  SoftmaxParams sp{20.0};
  FindOptions o;
  o.deepest_level = select_level(o.gamma, sp, 1.3) - 6;
  o.max_frontier = 4;
  Vec x = unit(rng, 8);
  FindResult r = find_clustering(f, x, sp, o);
  std::uint64_t total = 0;
  for (const auto& c : r.clusters) total += c.node->count;
  CHECK(total == 512);
  o.top_k_clusters = 3;
  FindResult t = find_clustering(f, x, sp, o);
  CHECK(t.truncated);
  CHECK(t.clusters.size() == 3);
  ClusterProposal q = proposal_from_clustering(f, x, t.clusters, sp, true);
  CHECK(proposal_distribution(q).sum() == doctest::Approx(1.0));
}

TEST_CASE("MH over a lossless proposal accepts every move") {
  Rng rng(48);
  RowMat pts = random_unit_rows(32, 4, rng);
  SGForest f = forest_over(pts);
  ClusterProposal q = proposal_from_clustering(f, unit(rng, 4), level_clustering(f, f.min_level() - 1), {3.0});
  MhResult r = mh_sample(q, 5, 200, Rng(1));
  CHECK(r.proposals == 800);
  CHECK(r.accepted == r.proposals);
}

TEST_CASE("MH on two targets converges to the closed-form stationary law") {
  RowMat pts(2, 2);
  pts << 1, 0, 0, 1;
  SGForest f = forest_over(pts);
  const SoftmaxParams sp{std::log(9.0)};
  ClusterProposal q = proposal_from_clustering(f, Vec::Unit(2, 0), level_clustering(f, f.max_level()), sp);
  const std::size_t n = 100000;
  MhResult r = mh_sample(q, 30, n, Rng(2));
  const double p0 = double(std::count(r.finals.begin(), r.finals.end(), TargetId(0))) / n;
  CHECK(std::abs(p0 - 0.9) <= 3 * std::sqrt(0.09 / n));
}

TEST_CASE("MH with s=10 on a random 16-target instance") {
  Rng rng(49);
  RowMat pts = random_unit_rows(16, 4, rng);
  SGForest f = forest_over(pts);
  SoftmaxParams sp{2.0};
  Vec x = unit(rng, 4);
  FindOptions o;
  ClusterProposal q = proposal_from_clustering(f, x, find_clustering(f, x, sp, o).clusters, sp);
  const std::size_t n = 100000;
  MhResult r = mh_sample(q, 10, n, Rng(3));
  auto h = histogram(r.finals, 16);
  Vec emp(16);
  for (int i = 0; i < 16; ++i) emp[i] = double(h[i]) / n;
  CHECK(tv_distance(emp, exact_softmax(x, pts, sp)) < 0.02);
}

TEST_CASE("MH is deterministic under a fixed seed and chain streams are independent of k") {
  Rng rng(50);
  RowMat pts = random_unit_rows(64, 4, rng);
  SGForest f = forest_over(pts);
  ClusterProposal q = proposal_from_clustering(f, unit(rng, 4), level_clustering(f, 0), {5.0});
  MhResult a = mh_sample(q, 3, 50, Rng(9)), b = mh_sample(q, 3, 50, Rng(9)), c = mh_sample(q, 3, 20, Rng(9));
  CHECK(a.finals == b.finals);
  CHECK(std::equal(c.finals.begin(), c.finals.end(), a.finals.begin()));
  CHECK_THROWS_AS(mh_sample(q, 0, 1, Rng(1)), InvalidInput);
}

TEST_CASE("rejection sampling on a single target") {
  RowMat pts(1, 3);
  pts << 0, 0, 1;
  SGForest f = forest_over(pts);
  RejectionSampler s(f, Vec::Unit(3, 0), 0, {5.0});
  Rng rng(1);
  for (int i = 0; i < 10; ++i) CHECK(s.sample(rng) == 0);
  CHECK(s.stats().rounds == 10);
}

TEST_CASE("rejection sampling on two targets matches the closed form") {
  RowMat pts(2, 2);
  pts << 1, 0, 0.6, 0.8;
  SGForest f = forest_over(pts);
  const SoftmaxParams sp{3.0};
  const double p0 = 1.0 / (1.0 + std::exp(sp.beta * (0.6 - 1.0)));
  RejectionSampler s(f, Vec::Unit(2, 0), f.max_level(), sp);
  Rng rng(2);
  const int n = 100000;
  int hits = 0;
  for (int i = 0; i < n; ++i) hits += s.sample(rng) == 0;
  CHECK(std::abs(double(hits) / n - p0) <= 3 * std::sqrt(p0 * (1 - p0) / n));
}

TEST_CASE("rejection sampling passes chi-square against the exact softmax") {
  Rng rng(51);
  int passed = 0;
  for (int seed = 0; seed < 3; ++seed) {
    RowMat pts = random_unit_rows(64, 8, rng);
    SGForest f = forest_over(pts);
    Vec x = unit(rng, 8);
    RejectionSampler s(f, x, std::min(0, f.max_level()), {5.0});
    Rng r(100 + seed);
    std::vector<TargetId> draws(100000);
    for (auto& d : draws) d = s.sample(r);
    auto res = chi_square_gof(histogram(draws, 64), exact_softmax(x, pts, {5.0}));
    passed += res.p_value > 0.01;
    CHECK(s.stats().descent_steps > 0);
  }
  CHECK(passed >= 2);
}

TEST_CASE("rejection sampling is exact from every low start level") {
  // Self-child clusters in the top slice keep their representative's mass.
  Rng rng(1);
  RowMat pts = random_unit_rows(64, 8, rng);
  SGForest f = forest_over(pts);
  Vec x = unit(rng, 8);
  const SoftmaxParams sp{5.0};
  for (int l = f.min_level() - 1; l <= f.min_level() + 3; ++l) {
    RejectionSampler s(f, x, l, sp);
    Rng r(5);
    std::vector<TargetId> draws(20000);
    for (auto& d : draws) d = s.sample(r);
    CHECK(chi_square_gof(histogram(draws, 64), exact_softmax(x, pts, sp)).p_value > 1e-4);
  }
}

TEST_CASE("mutated acceptance fails the chi-square test") {
  Rng rng(52);
  RowMat pts = random_unit_rows(64, 8, rng);
  SGForest f = forest_over(pts);
  Vec x = unit(rng, 8);
  RejectionOptions bad;
  bad.mutate_acceptance = true;
  RejectionSampler s(f, x, 0, {5.0}, bad);
  Rng r(7);
  std::vector<TargetId> draws(100000);
  for (auto& d : draws) d = s.sample(r);
  CHECK(chi_square_gof(histogram(draws, 64), exact_softmax(x, pts, {5.0})).p_value < 1e-6);
}

TEST_CASE("descent work shrinks as the start level drops") {
  Rng rng(53);
  RowMat pts = random_unit_rows(64, 8, rng);
  SGForest f = forest_over(pts);
  Vec x = unit(rng, 8);
  std::vector<double> steps;
  for (int l : {1, 0, -1}) {
    RejectionSampler s(f, x, l, {5.0});
    Rng r(11);
    for (int i = 0; i < 5000; ++i) s.sample(r);
    steps.push_back(double(s.stats().descent_steps) / 5000);
  }
  CHECK(steps[0] > steps[1]);
  CHECK(steps[1] > steps[2]);
}

TEST_CASE("rejection sampling requires the euclidean metric") {
  RowMat low = RowMat::Identity(3, 3);
  SGForest f = build_forest(TreeMetric::nystrom(low, Mat::Identity(3, 3), Mat::Identity(3, 3)), BuildOptions{1.05});
  CHECK_THROWS_AS(RejectionSampler(f, Vec::Unit(3, 0), 0, {1.0}), InvalidInput);
}

TEST_CASE("topk_hard_negatives dedupes, sorts and pads") {
  Rng rng(54);
  RowMat pts = random_unit_rows(64, 6, rng);
  SGForest f = forest_over(pts);
  Vec x = unit(rng, 6);
  SoftmaxParams sp{5.0};
  ClusterProposal q = proposal_from_clustering(f, x, level_clustering(f, 0), sp);

  std::vector<TargetId> same(10, 5);
  auto neg = topk_hard_negatives(q, same, 4, 0);
  REQUIRE(neg.size() == 4);
  CHECK(neg[0] == 5);
  CHECK(std::count(neg.begin(), neg.end(), TargetId(5)) == 1);
  CHECK(std::find(neg.begin(), neg.end(), TargetId(0)) == neg.end());

  std::vector<TargetId> all(64);
  for (TargetId i = 0; i < 64; ++i) all[i] = i;
  Vec logits = sp.beta * (pts * x);
  std::vector<TargetId> order(all);
  std::sort(order.begin(), order.end(), [&](TargetId a, TargetId b) { return logits[a] > logits[b]; });
  const TargetId pos = order[2];
  std::vector<TargetId> expect;
  for (TargetId y : order)
    if (y != pos && expect.size() < 8) expect.push_back(y);
  CHECK(topk_hard_negatives(q, all, 8, pos) == expect);
  CHECK(topk_hard_negatives(q, all, 100, pos).size() == 63);
}

TEST_CASE("short chains find brute-force hard negatives") {
  // 64 chains of length 2 per trial, top-4 of every visited state.
  Rng rng(55);
  int good = 0;
  for (int trial = 0; trial < 100; ++trial) {
    RowMat pts = random_unit_rows(64, 8, rng);
    SGForest f = forest_over(pts);
    Vec x = unit(rng, 8);
    SoftmaxParams sp{5.0};
    FindOptions o;
    o.deepest_level = select_level(o.gamma, sp, 1.3) - 3;
    ClusterProposal q = proposal_from_clustering(f, x, find_clustering(f, x, sp, o).clusters, sp);
    MhOptions mo;
    mo.keep_trace = true;
    MhResult r = mh_sample(q, 2, 64, Rng(trial), mo);
    auto neg = topk_hard_negatives(q, r.visited, 4, 64);
    Vec logits = pts * x;
    std::vector<TargetId> order(64);
    for (TargetId i = 0; i < 64; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](TargetId a, TargetId b) { return logits[a] > logits[b]; });
    int overlap = 0;
    for (TargetId y : neg) overlap += std::find(order.begin(), order.begin() + 16, y) != order.begin() + 16;
    good += overlap >= 3;
  }
  MESSAGE("trials with >= 3 of 4 in the brute-force top-16: " << good);
  CHECK(good >= 90);
}
