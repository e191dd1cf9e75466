// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#include "negtree/harness/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <sstream>

#include "negtree/core/lipschitz.hpp"
#include "negtree/core/softmax.hpp"
#include "negtree/dynamic/repair.hpp"
#include "negtree/harness/stats.hpp"
#include "negtree/sampling/samplers.hpp"
#include "negtree/sketch/nystrom.hpp"
#include "negtree/trainer/bias.hpp"

namespace negtree {

namespace {

using Clock = std::chrono::steady_clock;

RowMat gaussian_rows(Eigen::Index n, Eigen::Index d, Rng& rng) {
  RowMat m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rng.normal();
  return m;
}

RowMat unit_rows(Eigen::Index n, Eigen::Index d, Rng& rng) {
  RowMat m = gaussian_rows(n, d, rng);
  m.rowwise().normalize();
  return m;
}

// Unit rows around n/8 random centres; spread 0 gives uniform directions.
RowMat mixture_rows(Eigen::Index n, Eigen::Index d, double spread, Rng& rng) {
  if (spread <= 0.0) return unit_rows(n, d, rng);
  const RowMat centres = unit_rows(std::max<Eigen::Index>(1, n / 8), d, rng);
  RowMat m = gaussian_rows(n, d, rng) * (spread / std::sqrt(double(d)));
  for (Eigen::Index i = 0; i < n; ++i) m.row(i) += centres.row(i % centres.rows());
  m.rowwise().normalize();
  return m;
}

Vec unit_vec(Eigen::Index d, Rng& rng) { return unit_rows(1, d, rng).row(0).transpose(); }

DualEncoder random_linear(int in, int out, Rng& rng) {
  TowerSpec t{Architecture::Linear, in, out, 0, true};
  return DualEncoder::random(t, t, rng);
}

Vec empirical(std::span<const TargetId> draws, std::size_t n) {
  auto h = histogram(draws, n);
  Vec e(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) e[Eigen::Index(i)] = double(h[i]) / double(draws.size());
  return e;
}

double max_ratio(const Vec& p, const Vec& q) {
  double r = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (q[i] > 0.0)
      r = std::max(r, p[i] / q[i]);
    else if (p[i] > 0.0)
      return std::numeric_limits<double>::infinity();
  }
  return r;
}

std::vector<TargetId> sorted_leaves(const SGForest& f) {
  std::vector<TargetId> all;
  for (std::size_t t = 0; t < f.num_trees(); ++t) {
    auto lo = f.tree(t).leaf_order();
    all.insert(all.end(), lo.begin(), lo.end());
  }
  std::sort(all.begin(), all.end());
  return all;
}

double max_pair_change(const RowMat& a, const RowMat& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = i + 1; j < a.rows(); ++j)
      worst = std::max(worst, std::abs((a.row(i) - a.row(j)).norm() - (b.row(i) - b.row(j)).norm()));
  return worst;
}

// Cayley rotation (I - A)(I + A)^-1 of a random skew matrix scaled by `angle`.
Mat random_rotation(Eigen::Index d, double angle, Rng& rng) {
  Mat g = gaussian_rows(d, d, rng);
  Mat a = angle * (g - g.transpose()) / std::sqrt(double(d));
  Mat id = Mat::Identity(d, d);
  return (id - a) * (id + a).inverse();
}

template <typename F>
CheckResult timed(std::string name, F&& body) {
  const auto t0 = Clock::now();
  CheckResult r;
  r.name = std::move(name);
  body(r);
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

}  // namespace

CheckResult check_rejection_exactness(const RejectionCheck& c) {
  return timed("rejection-exactness", [&](CheckResult& r) {
    const SoftmaxParams sp{c.beta};
    const Rng meta(c.seed);
    std::size_t passed = 0;
    double min_p = 1.0;
    for (std::size_t i = 0; i < c.seeds; ++i) {
      Rng rng = meta.split(i);
      RowMat pts = unit_rows(Eigen::Index(c.num_targets), c.dim, rng);
      SGForest f = build_forest(TreeMetric::euclidean(pts), {});
      const Vec x = unit_vec(c.dim, rng);
      RejectionOptions ro;
      ro.mutate_acceptance = c.mutate;
      const int start = c.start_level.value_or((f.min_level() + f.max_level()) / 2);
      RejectionSampler s(f, x, start, sp, ro);
      std::vector<TargetId> draws(c.draws);
      for (auto& d : draws) d = s.sample(rng);
      const auto res = chi_square_gof(histogram(draws, c.num_targets), exact_softmax(x, pts, sp));
      r.values["pValues"].push_back(res.p_value);
      min_p = std::min(min_p, res.p_value);
      passed += res.p_value > c.alpha;
    }
    r.passed = passed >= c.required;
    r.values["passed"] = passed;
    r.values["seeds"] = c.seeds;
    std::ostringstream os;
    os << passed << "/" << c.seeds << " seeds with p > " << c.alpha << " (min p " << min_p << ")";
    r.detail = os.str();
  });
}

CheckResult check_mh_tv_decay(const TvCheck& c, std::vector<TvRow>* rows) {
  return timed("mh-tv-decay", [&](CheckResult& r) {
    const SoftmaxParams sp{c.beta};
    const Rng meta(c.seed);
    std::size_t violations = 0, checked = 0;
    double worst_margin = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < c.instances; ++i) {
      Rng rng = meta.split(i);
      RowMat pts = mixture_rows(Eigen::Index(c.num_targets), c.dim, c.spread, rng);
      SGForest f = build_forest(TreeMetric::euclidean(pts), {});
      const Vec x = unit_vec(c.dim, rng);
      FindOptions fo;
      fo.gamma = c.gamma;
      ClusterProposal prop = proposal_from_clustering(f, x, find_clustering(f, x, sp, fo).clusters, sp);
      const Vec p = exact_softmax(x, pts, sp);
      const double gm = max_ratio(p, proposal_distribution(prop));
      MhOptions mo;
      mo.mutate_acceptance = c.mutate;
      for (std::size_t s : c.lengths) {
        TvRow row;
        row.instance = i;
        row.s = s;
        row.gamma_measured = gm;
        MhResult mh = mh_sample(prop, s, c.draws, rng.split(1000 + s), mo);
        row.empirical_tv = tv_distance(empirical(mh.finals, c.num_targets), p);
        row.chain_tv = tv_distance(mh_marginal(prop, s), p);
        row.standard_error = tv_standard_error(p, c.draws);
        row.bound = std::exp(-double(s - 1) / gm) + 2.0 * row.standard_error;
        worst_margin = std::max(worst_margin, row.empirical_tv - row.bound);
        violations += row.empirical_tv > row.bound;
        ++checked;
        if (rows) rows->push_back(row);
      }
    }
    r.passed = violations == 0;
    r.values["violations"] = violations;
    r.values["checked"] = checked;
    std::ostringstream os;
    os << violations << " of " << checked << " (instance, s) points above the decay bound; worst tv - bound "
       << worst_margin;
    r.detail = os.str();
  });
}

CheckResult check_proposal_ratio(const ProposalRatioCheck& c) {
  return timed("proposal-ratio", [&](CheckResult& r) {
    const Rng meta(c.seed);
    std::size_t ok = 0;
    double worst = 0.0;
    for (std::size_t t = 0; t < c.trials; ++t) {
      Rng rng = meta.split(t);
      const auto n = Eigen::Index(c.min_targets + rng.below(c.max_targets - c.min_targets + 1));
      const int d = 4 << rng.below(4);
      const SoftmaxParams sp{1.0 + 19.0 * rng.uniform()};
      BuildOptions bo;
      bo.base = 1.2 + 0.6 * rng.uniform();
      bo.forest_size = 1 + rng.below(3);
      RowMat pts = unit_rows(n, d, rng);
      SGForest f = build_forest(TreeMetric::euclidean(pts), bo);
      const Vec x = unit_vec(d, rng);
      FindOptions fo;
      fo.gamma = c.gamma;
      fo.deepest_level = select_level(c.gamma, sp, bo.base) - int(rng.below(5));
      fo.max_frontier = std::size_t(1) << 30;
      FindResult fr = find_clustering(f, x, sp, fo);
      ClusterProposal prop = proposal_from_clustering(f, x, fr.clusters, sp);
      const double ratio = max_ratio(exact_softmax(x, pts, sp), proposal_distribution(prop));
      worst = std::max(worst, ratio);
      ok += ratio <= c.gamma * (1.0 + 1e-9);
    }
    r.passed = ok == c.trials;
    r.values["ok"] = ok;
    r.values["worstRatio"] = worst;
    std::ostringstream os;
    os << ok << "/" << c.trials << " trials with max P/Q <= gamma (worst " << worst << ", gamma " << c.gamma << ")";
    r.detail = os.str();
  });
}

CheckResult check_gradient_bias_bound(const BiasCheck& c, std::vector<BiasRow>* rows) {
  return timed("gradient-bias-bound", [&](CheckResult& r) {
    const SoftmaxParams sp{c.beta};
    const Rng meta(c.seed);
    std::size_t ok = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < c.instances; ++i) {
      Rng rng = meta.split(i);
      DualEncoder enc = random_linear(c.dim, c.dim, rng);
      TargetStore store = TargetStore::encode(mixture_rows(Eigen::Index(c.num_targets), c.dim, c.spread, rng), enc);
      SGForest f = build(store, 1.3);
      const Vec x = gaussian_rows(1, c.dim, rng).row(0).transpose();
      const Vec q = enc.encode(Side::Query, x);
      ClusterProposal prop = proposal_from_clustering(f, q, find_clustering(f, q, sp, {}).clusters, sp);
      const Vec p = exact_softmax(q, store.full, sp);
      MhResult mh = mh_sample(prop, c.chain_length, c.samples, rng.split(7));
      const SampledGradient sg = sampled_logit_gradient(enc, x, store, mh.finals, sp);
      BiasRow row;
      row.instance = i;
      row.epsilon = tv_distance(mh_marginal(prop, c.chain_length), p);
      row.m_hat = max_inner_product_gradient(enc, x, store);
      row.sigma = sg.sigma;
      row.error = (sg.mean - expected_logit_gradient(enc, x, store, p, sp)).norm();
      row.bound = 2.0 * row.epsilon * c.beta * row.m_hat + 3.0 * row.sigma / std::sqrt(double(c.samples));
      worst = std::max(worst, row.error / row.bound);
      ok += row.error <= row.bound;
      if (rows) rows->push_back(row);
    }
    r.passed = ok == c.instances;
    r.values["ok"] = ok;
    r.values["worstErrorOverBound"] = worst;
    std::ostringstream os;
    os << ok << "/" << c.instances << " instances within 2 eps beta M + 3 sigma/sqrt(n) (worst error/bound " << worst
       << ")";
    r.detail = os.str();
  });
}

CheckResult check_repair_soundness(const RepairSoundnessCheck& c) {
  return timed("repair-soundness", [&](CheckResult& r) {
    const Rng meta(c.seed);
    std::size_t clean = 0, conserved = 0;
    std::string first;
    for (std::size_t s = 0; s < c.scenarios; ++s) {
      Rng rng = meta.split(s);
      const auto n = Eigen::Index(c.min_targets + rng.below(c.max_targets - c.min_targets + 1));
      const int d = 2 + int(rng.below(8));
      RowMat pts = unit_rows(n, d, rng);
      BuildOptions o;
      o.base = 1.2 + 0.6 * rng.uniform();
      o.forest_size = 1 + rng.below(3);
      SGForest f = build_forest(TreeMetric::euclidean(pts), o);
      const double dist = 0.3 * rng.uniform();
      perturb_on_sphere(pts, rng.uniform(), dist, rng);
      RepairOptions ro;
      ro.bound = 2.0 * dist;
      ro.threads = 1 + unsigned(rng.below(3));
      update_sg_tree(f, TreeMetric::euclidean(pts), ro);
      const auto v = verify_invariants(f);
      if (!v.empty() && first.empty()) first = "scenario " + std::to_string(s) + ": " + describe(v.front());
      clean += v.empty();
      std::vector<TargetId> leaves = sorted_leaves(f);
      bool same = leaves.size() == std::size_t(n);
      for (std::size_t i = 0; same && i < leaves.size(); ++i) same = leaves[i] == i;
      conserved += same;
    }
    r.passed = clean == c.scenarios && conserved == c.scenarios;
    r.values["clean"] = clean;
    r.values["conserved"] = conserved;
    std::ostringstream os;
    os << clean << "/" << c.scenarios << " clean, " << conserved << "/" << c.scenarios << " conserve leaves";
    if (!first.empty()) os << "; " << first;
    r.detail = os.str();
  });
}

CheckResult check_sgd_drift(const DriftCheck& c) {
  return timed("sgd-drift-bound", [&](CheckResult& r) {
    const Rng meta(c.seed);
    const SoftmaxParams sp{c.beta};
    std::size_t ok = 0;
    double worst = 0.0;
    for (std::size_t run = 0; run < c.runs; ++run) {
      Rng rng = meta.split(run);
      const int in = 6, d = 4;
      DualEncoder enc = random_linear(in, d, rng);
      RowMat xq = gaussian_rows(32, in, rng);
      RowMat feats = gaussian_rows(48, in, rng);
      TargetStore store = TargetStore::encode(feats, enc);
      const RowMat start = store.full;
      const LipschitzEstimate est = estimate_lipschitz_and_grad_bound(enc, xq, feats, rng, 32);
      for (std::size_t step = 0; step < c.w; ++step) {
        const auto i = Eigen::Index(rng.below(std::uint64_t(xq.rows())));
        const LossGrad lg = exact_loss_and_grad(enc, xq.row(i).transpose(), rng.below(48), store, sp);
        enc.params() -= c.eta * lg.grad;
        store.reencode(enc, step + 1);
      }
      const double bound = drift_bound({double(c.w), c.eta, c.beta, est.L_hat, est.M_hat});
      const double measured = max_pair_change(start, store.full);
      r.values["measured"].push_back(measured);
      r.values["bound"].push_back(bound);
      worst = std::max(worst, measured / bound);
      ok += measured <= bound;
    }
    r.passed = ok == c.runs;
    std::ostringstream os;
    os << ok << "/" << c.runs << " SGD runs within 4 w eta beta L M (worst measured/bound " << worst << ")";
    r.detail = os.str();
  });
}

CheckResult check_repair_economy(const EconomyCheck& c) {
  return timed("repair-economy", [&](CheckResult& r) {
    const Rng meta(c.seed);
    double worst = 0.0;
    bool valid = true;
    for (std::size_t s = 0; s < c.seeds; ++s) {
      Rng rng = meta.split(s);
      RowMat pts;
      if (c.clustered) {
        SyntheticTask t;
        t.num_targets = c.num_targets;
        t.dim = c.dim;
        t.train_size = 1;
        t.eval_size = 1;
        t.seed = c.seed * 1000 + s;
        pts = gen_synthetic(t).target_features;
      } else {
        pts = unit_rows(Eigen::Index(c.num_targets), c.dim, rng);
      }
      SGForest f = build_forest(TreeMetric::euclidean(pts), {});
      perturb_on_sphere(pts, c.fraction, c.bound / 2.0, rng);
      RepairOptions ro;
      ro.bound = c.bound;
      const RebuildStats st = update_sg_tree(f, TreeMetric::euclidean(pts), ro);
      valid = valid && verify_invariants(f).empty();
      const double frac = double(st.leaves_reinserted) / double(c.num_targets);
      r.values["fractions"].push_back(frac);
      worst = std::max(worst, frac);
    }
    r.passed = valid && worst < 0.5;
    r.values["worst"] = worst;
    std::ostringstream os;
    os << "largest reinserted fraction " << worst << " (full rebuild 1.0)" << (valid ? "" : "; invariants broken");
    r.detail = os.str();
  });
}

CheckResult check_nystrom_exactness(const NystromCheck& c) {
  return timed("nystrom-exactness", [&](CheckResult& r) {
    Rng rng(c.seed);
    auto kernel_error = [](const NystromSketch& sk, const RowMat& full) {
      const RowMat q = embed_low_rows(sk, full, Side::Query);
      const RowMat t = embed_low_rows(sk, full, Side::Target);
      return (q * t.transpose() - full * full.transpose()).cwiseAbs().maxCoeff();
    };
    double worst = 0.0;
    for (auto [n, d] : {std::pair{30, 40}, std::pair{60, 12}}) {
      TargetStore st;
      st.full = unit_rows(n, d, rng);
      st.features = st.full;
      worst = std::max(worst, kernel_error(fit_nystrom(st, n, rng), st.full));
    }
    r.values["fullLandmarks"] = worst;
    double worst_rank = 0.0;
    for (int rank : {2, 5, 8}) {
      TargetStore st;
      st.full = gaussian_rows(200, rank, rng) * gaussian_rows(rank, 16, rng);
      st.full.rowwise().normalize();
      st.features = st.full;
      worst_rank = std::max(worst_rank, kernel_error(fit_nystrom(st, rank + 3, rng), st.full));
    }
    r.values["rankR"] = worst_rank;
    r.passed = worst <= c.tolerance && worst_rank <= c.tolerance;
    std::ostringstream os;
    os << "full-landmark error " << worst << ", rank-r error " << worst_rank << " (tolerance " << c.tolerance << ")";
    r.detail = os.str();
  });
}

CheckResult check_reencoder(const ReencoderCheck& c) {
  return timed("reencoder", [&](CheckResult& r) {
    const Rng meta(c.seed);
    std::size_t better = 0, exact_calls = 0;
    for (std::size_t s = 0; s < c.scenarios; ++s) {
      Rng rng = meta.split(s);
      DualEncoder enc = random_linear(20, 16, rng);
      TargetStore st = TargetStore::encode(gaussian_rows(Eigen::Index(c.num_targets), 20, rng), enc);
      NystromSketch sk = fit_nystrom(st, c.dim_low, rng);
      refresh_low(st, sk);
      const RowMat stale = st.full;
      DualEncoder moved = enc;
      const TowerSpec& t = moved.spec(Side::Target);
      Eigen::Map<Mat> wt(moved.params().data() + moved.offset(Side::Target), t.output_dim, t.input_dim);
      wt = random_rotation(16, 0.2 + 0.05 * double(s), rng) * Mat(wt);
      moved.reset_call_counters();
      Reencoder re = fit_reencoder(sk, st, moved, c.train_size, 1e-4, rng);
      apply_reencoder(re, sk, st, moved, 1);
      exact_calls += moved.target_calls() == std::uint64_t(c.train_size + c.dim_low);
      const RowMat exact = moved.encode_rows(Side::Target, st.features);
      const double e_pred = (st.full - exact).rowwise().norm().mean();
      const double e_stale = (stale - exact).rowwise().norm().mean();
      r.values["predicted"].push_back(e_pred);
      r.values["stale"].push_back(e_stale);
      better += e_pred < e_stale;
    }
    r.passed = better == c.scenarios && exact_calls == c.scenarios;
    std::ostringstream os;
    os << better << "/" << c.scenarios << " scenarios beat the stale cache; " << exact_calls << "/" << c.scenarios
       << " used exactly s'+d' = " << c.train_size + c.dim_low << " encoder calls";
    r.detail = os.str();
  });
}

CheckResult check_degenerate_equivalence(const EquivalenceCheck& c) {
  return timed("degenerate-equivalence", [&](CheckResult& r) {
    SyntheticTask t;
    t.num_targets = c.num_targets;
    t.dim = 8;
    t.num_clusters = 8;
    t.train_size = 256;
    t.eval_size = 50;
    t.seed = c.seed;
    const SyntheticData sd = gen_synthetic(t);
    TrainConfig cfg;
    cfg.strategy = Strategy::Exhaustive;
    cfg.num_steps = c.steps;
    cfg.batch_size = 8;
    cfg.k = c.num_targets - 1;
    cfg.uniform_k = 0;
    cfg.warmup_fraction = 0.0;
    cfg.w = 10;
    cfg.repair_bound = 0.05;
    cfg.seed = c.seed;
    // Deep enough that every cluster is a single target.
    cfg.m = -200;
    cfg.max_frontier = 4 * c.num_targets;
    auto run = [&](Strategy s) {
      cfg.strategy = s;
      Rng rng(c.seed + 1);
      DualEncoder enc = random_linear(t.dim, t.dim, rng);
      TargetStore st;
      st.features = sd.target_features;
      return train(cfg, sd.data, enc, st);
    };
    const RunReport ex = run(Strategy::Exhaustive);
    const RunReport dy = run(Strategy::Dynnibal);
    double worst = 0.0;
    for (std::size_t i = 0; i < c.steps; ++i) worst = std::max(worst, std::abs(ex.step_loss[i] - dy.step_loss[i]));
    r.passed = worst <= c.tolerance && ex.step_loss.size() == c.steps;
    r.values["maxLossDifference"] = worst;
    std::ostringstream os;
    os << "largest per-step loss difference " << worst << " over " << c.steps << " steps";
    r.detail = os.str();
  });
}

CheckResult check_tree_build(const TreeBuildCheck& c) {
  return timed("tree-build", [&](CheckResult& r) {
    const Rng meta(c.seed);
    std::size_t clean = 0, exact_knn = 0;
    std::string first;
    for (std::size_t t = 0; t < c.trees; ++t) {
      Rng rng = meta.split(t);
      const auto n = Eigen::Index(2 + rng.below(c.max_targets - 1));
      const int d = 2 + int(rng.below(15));
      RowMat pts = unit_rows(n, d, rng);
      BuildOptions o;
      o.base = 1.2 + 0.6 * rng.uniform();
      o.forest_size = 1 + rng.below(std::min<std::uint64_t>(3, std::uint64_t(n)));
      o.mode = rng.below(4) == 0 ? TreeMode::Cover : TreeMode::SG;
      SGForest f = build_forest(TreeMetric::euclidean(pts), o);
      const auto v = verify_invariants(f);
      if (!v.empty() && first.empty()) first = describe(v.front());
      clean += v.empty() && sorted_leaves(f).size() == std::size_t(n);
      const Vec q = unit_vec(d, rng);
      const std::size_t k = std::min<std::size_t>(10, std::size_t(n));
      std::vector<TargetId> scan(static_cast<std::size_t>(n));
      for (TargetId i = 0; i < scan.size(); ++i) scan[i] = i;
      const Vec dist = (pts.rowwise() - q.transpose()).rowwise().norm();
      std::stable_sort(scan.begin(), scan.end(),
                       [&](TargetId a, TargetId b) { return dist[Eigen::Index(a)] < dist[Eigen::Index(b)]; });
      std::vector<TargetId> found = knn(f, q, k);
      bool same = found.size() == k;
      for (std::size_t i = 0; same && i < k; ++i) same = dist[Eigen::Index(found[i])] == dist[Eigen::Index(scan[i])];
      exact_knn += same;
    }
    r.passed = clean == c.trees && exact_knn == c.trees;
    std::ostringstream os;
    os << clean << "/" << c.trees << " builds clean, " << exact_knn << "/" << c.trees << " knn equal to a linear scan";
    if (!first.empty()) os << "; " << first;
    r.detail = os.str();
  });
}

CheckResult check_bias_ordering(const BiasOrderingCheck& c) {
  return timed("bias-ordering", [&](CheckResult& r) {
    const SoftmaxParams sp{20.0};
    const Rng meta(c.seed);
    std::size_t wins = 0;
    for (std::size_t i = 0; i < c.instances; ++i) {
      Rng rng = meta.split(i);
      DualEncoder enc = random_linear(16, 16, rng);
      TargetStore store = TargetStore::encode(gaussian_rows(Eigen::Index(c.num_targets), 16, rng), enc);
      SGForest f = build(store, 1.3);
      const Vec x = gaussian_rows(1, 16, rng).row(0).transpose();
      const Vec q = enc.encode(Side::Query, x);
      const TargetId pos = rng.below(c.num_targets);
      const Vec exact = exact_loss_and_grad(enc, x, pos, store, sp).grad;
      ClusterProposal prop = proposal_from_clustering(f, q, find_clustering(f, q, sp, {}).clusters, sp);
      Vec mean_mh = Vec::Zero(exact.size()), mean_uni = Vec::Zero(exact.size());
      const std::vector<TargetId> exclude{pos};
      for (std::size_t rep = 0; rep < c.repetitions; ++rep) {
        std::vector<TargetId> neg = mh_sample(prop, c.chain_length, c.k, rng.split(rep)).finals;
        std::sort(neg.begin(), neg.end());
        neg.erase(std::unique(neg.begin(), neg.end()), neg.end());
        neg.erase(std::remove(neg.begin(), neg.end(), pos), neg.end());
        if (!neg.empty()) mean_mh += sampled_loss_and_grad(enc, x, pos, neg, store, sp).grad;
        Rng ur = rng.split(1000000 + rep);
        std::vector<TargetId> uni = negatives_uniform(c.num_targets, c.k, exclude, ur);
        std::sort(uni.begin(), uni.end());
        mean_uni += sampled_loss_and_grad(enc, x, pos, uni, store, sp).grad;
      }
      const double b_mh = (mean_mh / double(c.repetitions) - exact).norm();
      const double b_uni = (mean_uni / double(c.repetitions) - exact).norm();
      r.values["chain"].push_back(b_mh);
      r.values["uniform"].push_back(b_uni);
      wins += b_mh < b_uni;
    }
    r.passed = wins >= c.required;
    std::ostringstream os;
    os << "short-chain negatives less biased than uniform on " << wins << "/" << c.instances << " instances";
    r.detail = os.str();
  });
}

bool SuiteReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

nlohmann::json SuiteReport::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : checks)
    j.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}, {"values", c.values}});
  return {{"passed", passed()}, {"checks", j}};
}

SuiteReport stat_suite(const StatSuiteOptions& o) {
  if (o.max_targets < 64 || o.max_targets > 1024) throw InvalidInput("stat suite sizes must lie in [64, 1024]");
  SuiteReport rep;
  const std::size_t cap = o.max_targets;

  RejectionCheck rj;
  rj.draws = 20000;
  rj.seed = o.seed;
  rj.mutate = o.mutate;
  rep.checks.push_back(check_rejection_exactness(rj));

  TvCheck tv;
  tv.draws = 20000;
  tv.seed = o.seed;
  tv.mutate = o.mutate;
  rep.checks.push_back(check_mh_tv_decay(tv, &rep.tv));

  TreeBuildCheck tb;
  tb.max_targets = std::min<std::size_t>(cap, 512);
  tb.seed = o.seed;
  rep.checks.push_back(check_tree_build(tb));

  ProposalRatioCheck pr;
  pr.trials = 30;
  pr.max_targets = cap;
  pr.seed = o.seed;
  rep.checks.push_back(check_proposal_ratio(pr));

  BiasCheck bc;
  bc.num_targets = std::min<std::size_t>(cap, 256);
  bc.samples = 4000;
  bc.seed = o.seed;
  rep.checks.push_back(check_gradient_bias_bound(bc, &rep.bias));

  BiasOrderingCheck bo;
  bo.num_targets = std::min<std::size_t>(cap, 256);
  bo.seed = o.seed;
  rep.checks.push_back(check_bias_ordering(bo));

  RepairSoundnessCheck rs;
  rs.scenarios = 30;
  rs.max_targets = std::min<std::size_t>(cap, 300);
  rs.seed = o.seed;
  rep.checks.push_back(check_repair_soundness(rs));

  DriftCheck dc;
  dc.seed = o.seed;
  rep.checks.push_back(check_sgd_drift(dc));

  EconomyCheck ec;
  ec.num_targets = cap;
  ec.seeds = 2;
  ec.seed = o.seed;
  rep.checks.push_back(check_repair_economy(ec));

  NystromCheck nc;
  nc.seed = o.seed;
  rep.checks.push_back(check_nystrom_exactness(nc));

  ReencoderCheck re;
  re.seed = o.seed;
  rep.checks.push_back(check_reencoder(re));

  EquivalenceCheck eq;
  eq.steps = 50;
  eq.seed = o.seed;
  rep.checks.push_back(check_degenerate_equivalence(eq));
  return rep;
}

void write_tv_csv(std::ostream& os, const std::vector<TvRow>& rows) {
  os << "instance,s,empirical_tv,chain_tv,standard_error,gamma_measured,bound\n";
  os.precision(10);
  for (const auto& r : rows)
    os << r.instance << ',' << r.s << ',' << r.empirical_tv << ',' << r.chain_tv << ',' << r.standard_error << ','
       << r.gamma_measured << ',' << r.bound << '\n';
}

void write_bias_csv(std::ostream& os, const std::vector<BiasRow>& rows) {
  os << "instance,epsilon,m_hat,sigma,error,bound\n";
  os.precision(10);
  for (const auto& r : rows)
    os << r.instance << ',' << r.epsilon << ',' << r.m_hat << ',' << r.sigma << ',' << r.error << ',' << r.bound
       << '\n';
}

}  // namespace negtree
