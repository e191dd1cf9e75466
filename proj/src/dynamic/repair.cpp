// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#include "negtree/dynamic/repair.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <future>
#include <limits>
#include <thread>

#include <json.hpp>

namespace negtree {

double drift_bound(const DriftBudget& b) {
  for (double v : {b.w, b.eta, b.beta, b.L, b.M})
    require(std::isfinite(v) && v >= 0.0, "drift budget fields must be finite and nonnegative");
  return 4.0 * b.w * b.eta * b.beta * b.L * b.M;
}

NodeValidity node_still_valid(const SGNode& node, double bound, double base) {
  NodeValidity v;
  v.covering = node.maxd + bound <= level_scale(base, node.level);
  v.separation = node.mind - bound >= level_scale(base, node.level - 1);
  return v;
}

int level_cut_for_bound(double bound, double base) {
  require(bound > 0.0, "level cut needs a positive bound");
  return level_for_distance(bound, base);
}

std::string RebuildStats::to_json() const {
  nlohmann::json j = {{"nodesVisited", nodes_visited},
                      {"subtreesRebuilt", subtrees_rebuilt},
                      {"leavesReinserted", leaves_reinserted},
                      {"wallTime", wall_time}};
  return j.dump();
}

namespace {

struct Task {
  std::unique_ptr<SGNode>* slot;
  std::size_t tree;
  SGNode* parent;  // null for a whole-tree rebuild
  const char* reason;
  bool dissolve = false;  // drop the subtree and re-insert its members from the parent
};

class Repairer {
 public:
  Repairer(const TreeMetric& m, double b, const RepairOptions& o) : m_(m), b_(b), o_(o) {}

  void refresh(SGNode& n, const SGTree& tree) const {
    n.maxd = 0.0;
    for (TargetId y : tree.members(n)) n.maxd = std::max(n.maxd, m_.between(n.rep, y));
    n.mind = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n.children.size(); ++i)
      for (std::size_t j = i + 1; j < n.children.size(); ++j) {
        const double d = m_.between(n.children[i]->rep, n.children[j]->rep);
        if (d > 0.0) n.mind = std::min(n.mind, d);
      }
  }

  bool guard(const SGNode& n) const {
    if (o_.level_cut) return n.level < *o_.level_cut;
    return level_scale(b_, n.level) <= o_.bound;
  }

  void visit(std::unique_ptr<SGNode>& slot, SGNode* parent, const SGTree& tree, std::size_t t,
             std::vector<Task>& tasks, RebuildStats& st) const {
    SGNode& n = *slot;
    if (n.leaf()) return;
    ++st.nodes_visited;
    if (guard(n)) {
      tasks.push_back({&slot, t, parent, "guard"});
      return;
    }
    refresh(n, tree);
    const double margin = o_.anticipate ? o_.bound : 0.0;
    const NodeValidity v = node_still_valid(n, margin, b_);
    if (!v.covering) {
      tasks.push_back({&slot, t, parent, "covering"});
      return;
    }
    std::vector<bool> keep(n.children.size(), true);
    if (!v.separation) keep = separated_children(n, margin);
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      if (keep[i]) {
        visit(n.children[i], &n, tree, t, tasks, st);
      } else {
        tasks.push_back({&n.children[i], t, &n, "separation", true});
      }
    }
  }

  // Greedy separated subset of the children: the self child first, then larger
  // subtrees before smaller ones, each kept if far enough from all kept so far.
  std::vector<bool> separated_children(const SGNode& n, double margin) const {
    const double sep = level_scale(b_, n.level - 1);
    std::vector<std::size_t> order(n.children.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) {
      const SGNode& x = *n.children[a];
      const SGNode& y = *n.children[c];
      if (x.self_child != y.self_child) return x.self_child;
      return x.count > y.count;
    });
    std::vector<bool> keep(n.children.size(), false);
    std::vector<std::size_t> kept;
    for (std::size_t i : order) {
      bool ok = true;
      for (std::size_t j : kept) {
        const double d = m_.between(n.children[i]->rep, n.children[j]->rep);
        if (d > 0.0 && d - margin < sep) {
          ok = false;
          break;
        }
      }
      if (ok) {
        keep[i] = true;
        kept.push_back(i);
      }
    }
    return keep;
  }

 private:
  const TreeMetric& m_;
  double b_;
  const RepairOptions& o_;
};

}  // namespace

RebuildStats update_sg_tree(SGForest& forest, TreeMetric metric, const RepairOptions& opts) {
  require(std::isfinite(opts.bound) && opts.bound >= 0.0, "repair bound must be finite and nonnegative");
  const auto t0 = std::chrono::steady_clock::now();
  forest.set_metric(std::move(metric));
  const TreeMetric& m = forest.metric();
  const double b = forest.base();
  RebuildStats st;

  if (forest.options().mode == TreeMode::Cover) {
    forest = build_forest(m, forest.options());
    st.subtrees_rebuilt = forest.num_trees();
    st.leaves_reinserted = forest.num_targets();
    st.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return st;
  }

  Repairer rep(m, b, opts);
  std::vector<Task> tasks;
  for (std::size_t t = 0; t < forest.num_trees(); ++t) {
    SGTree& tree = forest.mutable_tree(t);
    rep.visit(tree.root_slot(), nullptr, tree, t, tasks, st);
  }

  // Members are gathered before any rebuild since rebuilding invalidates leaf
  // ranges. A subtree keeps the members that still fit under its parent, i.e.
  // within b^(parent level - 1) of its representative; the rest are orphans,
  // re-inserted from the parent, which covers them.
  std::vector<std::vector<TargetId>> kept(tasks.size()), orphans(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Task& k = tasks[i];
    const SGNode& n = **k.slot;
    auto mem = forest.tree(k.tree).members(n);
    std::vector<TargetId> pts(mem.begin(), mem.end());
    std::sort(pts.begin(), pts.end());
    if (k.dissolve) {
      orphans[i] = std::move(pts);
    } else if (k.parent) {
      const double fit = level_scale(b, k.parent->level - 1);
      kept[i].push_back(n.rep);
      for (TargetId y : pts) {
        if (y == n.rep) continue;
        (m.between(n.rep, y) <= fit ? kept[i] : orphans[i]).push_back(y);
      }
    } else {
      kept[i] = std::move(pts);
    }
    st.rebuilt.push_back({k.tree, n.rep, n.level, mem.size(), k.reason});
    st.leaves_reinserted += mem.size();
  }
  st.subtrees_rebuilt = tasks.size();

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const Task& k = tasks[i];
      if (!k.dissolve) *k.slot = build_subtree(m, b, kept[i], k.parent ? k.parent->level - 1 : 0);
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(tasks.size())));
  std::vector<std::future<void>> pool;
  for (unsigned i = 1; i < n_threads; ++i) pool.push_back(std::async(std::launch::async, worker));
  worker();
  for (auto& f : pool) f.get();
  for (const Task& k : tasks)
    if (k.dissolve) k.slot->reset();
  for (const Task& k : tasks) {
    if (!k.dissolve) continue;
    auto& ch = k.parent->children;
    ch.erase(std::remove(ch.begin(), ch.end(), nullptr), ch.end());
  }
  for (std::size_t i = 0; i < tasks.size(); ++i)
    for (TargetId y : orphans[i]) insert_below(m, b, *tasks[i].parent, y);

  forest.refresh_stats();
  st.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return st;
}

std::vector<TargetId> perturb_on_sphere(RowMat& rows, double fraction, double distance, Rng& rng) {
  require(fraction >= 0.0 && fraction <= 1.0, "perturbed fraction must lie in [0, 1]");
  require(distance >= 0.0 && distance <= 2.0, "chord distance must lie in [0, 2]");
  const auto n = static_cast<std::size_t>(rows.rows());
  const auto d = rows.cols();
  std::vector<TargetId> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  const auto k = static_cast<std::size_t>(std::llround(fraction * double(n)));
  for (std::size_t i = 0; i < k; ++i) std::swap(all[i], all[i + rng.below(n - i)]);
  all.resize(k);
  std::sort(all.begin(), all.end());

  const double theta = 2.0 * std::asin(distance / 2.0);
  for (TargetId y : all) {
    Vec v = rows.row(static_cast<Eigen::Index>(y)).transpose();
    v.normalize();
    Vec u(d);
    do {
      for (Eigen::Index j = 0; j < d; ++j) u[j] = rng.normal();
      u -= u.dot(v) * v;
    } while (u.norm() < 1e-9);
    u.normalize();
    rows.row(static_cast<Eigen::Index>(y)) = (std::cos(theta) * v + std::sin(theta) * u).transpose();
  }
  return all;
}

}  // namespace negtree
