// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "negtree/core/store.hpp"
#include "negtree/sgtree/metric.hpp"

namespace negtree {

struct SGNode {
  TargetId rep = 0;
  int level = 0;
  std::uint64_t count = 1;
  double maxd = 0.0;
  // Closest pair of distinct (non-duplicate) children.
  double mind = std::numeric_limits<double>::infinity();
  bool self_child = false;  // shares its parent's representative
  std::size_t leaf_begin = 0;
  std::vector<std::unique_ptr<SGNode>> children;

  bool leaf() const { return children.empty(); }
};

class SGTree {
 public:
  SGTree() = default;
  explicit SGTree(std::unique_ptr<SGNode> root) : root_(std::move(root)) {}

  const SGNode* root() const { return root_.get(); }
  std::unique_ptr<SGNode>& root_slot() { return root_; }
  std::span<const TargetId> leaf_order() const { return leaf_order_; }
  // Members of `n` in leaf order.
  std::span<const TargetId> members(const SGNode& n) const {
    return std::span<const TargetId>(leaf_order_).subspan(n.leaf_begin, n.count);
  }

  // Recompute leaf order, counts, leaf levels and distance statistics.
  void finalize(const TreeMetric& metric);

 private:
  std::unique_ptr<SGNode> root_;
  std::vector<TargetId> leaf_order_;
};

enum class TreeMode { SG, Cover };

struct BuildOptions {
  double base = 1.3;
  std::size_t forest_size = 1;
  TreeMode mode = TreeMode::SG;
};

class SGForest {
 public:
  SGForest() = default;
  SGForest(TreeMetric metric, BuildOptions opts, std::vector<SGTree> trees);

  const TreeMetric& metric() const { return metric_; }
  void set_metric(TreeMetric m);
  double base() const { return opts_.base; }
  const BuildOptions& options() const { return opts_; }
  std::size_t num_trees() const { return trees_.size(); }
  const SGTree& tree(std::size_t i) const { return trees_[i]; }
  SGTree& mutable_tree(std::size_t i) { return trees_[i]; }
  std::size_t num_targets() const { return static_cast<std::size_t>(metric_.size()); }
  int min_level() const;
  int max_level() const;
  // Recompute every tree's statistics against the current metric.
  void refresh_stats();

 private:
  TreeMetric metric_;
  BuildOptions opts_;
  std::vector<SGTree> trees_;
};

// Smallest integer j with b^j >= d (d > 0).
int level_for_distance(double d, double base);
inline double level_scale(double base, int level) { return std::pow(base, level); }

SGForest build_forest(TreeMetric metric, const BuildOptions& opts);
SGForest build(const TargetStore& store, double base, std::size_t forest_size = 1);

// SG-mode subtree over `points` by sequential insertion; points[0] becomes the
// root representative. A root holding only exact duplicates sits at
// `duplicate_level`. Used for fresh builds and in-place repair.
std::unique_ptr<SGNode> build_subtree(const TreeMetric& metric, double base, std::span<const TargetId> points,
                                      int duplicate_level = 0);

// SG insertion of p into the subtree at internal `node`, which must already
// cover it (distance to node.rep <= b^node.level). Statistics are not updated.
void insert_below(const TreeMetric& metric, double base, SGNode& node, TargetId p);

struct Violation {
  const SGNode* node = nullptr;
  TargetId rep = 0;
  int level = 0;
  std::string property;
  double measured = 0.0;
  double bound = 0.0;
};

// Properties: nesting, covering (child hop), separation (siblings in SG mode,
// whole level slices in cover mode), count, maxd (stored value current and
// within the radius bound), mind (stored value current), level, partition.
std::vector<Violation> verify_invariants(const SGForest& forest);
std::string describe(const Violation& v);

// Nodes with level <= l whose parent's level > l, plus leaves above that cut.
struct ClusterRef {
  const SGNode* node;
  std::size_t tree;
};
std::vector<ClusterRef> level_clustering(const SGForest& forest, int level);

// k nearest targets by metric distance, ties by lower index; exact in euclidean mode.
std::vector<TargetId> knn(const SGForest& forest, VecRef query_embedding, std::size_t k);

// Node records as in the snapshot format, one "FRST" section.
std::string serialize_forest(const SGForest& forest);
// Rebuilds the forest over `metric`; statistics are recomputed from it.
SGForest deserialize_forest(const std::string& payload, TreeMetric metric);
void save_forest(std::ostream& os, const SGForest& forest);
SGForest load_forest(std::istream& is, TreeMetric metric);

}  // namespace negtree
