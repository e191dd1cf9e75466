// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "negtree/core/rng.hpp"
#include "negtree/core/types.hpp"
#include "negtree/sgtree/tree.hpp"

namespace negtree {

struct DriftBudget {
  double w = 0.0;
  double eta = 0.0;
  double beta = 0.0;
  double L = 0.0;
  double M = 0.0;
};

// Largest change of any pairwise embedding distance after w SGD steps: 4 w eta beta L M.
double drift_bound(const DriftBudget& budget);

struct NodeValidity {
  bool covering = true;
  bool separation = true;
  bool ok() const { return covering && separation; }
};

// Reads node.maxd / node.mind as stored; callers refresh them first.
NodeValidity node_still_valid(const SGNode& node, double bound, double base);

// Smallest level j with b^j >= bound; the level cut matching a numeric bound.
int level_cut_for_bound(double bound, double base);

struct RepairOptions {
  double bound = 0.0;
  // When set, subtrees with level < level_cut are rebuilt instead of those with b^level <= bound.
  std::optional<int> level_cut;
  // Also demand the `bound` margin on refreshed statistics, so the repaired
  // tree stays valid through a further epoch of drift. Off: test current validity.
  bool anticipate = false;
  unsigned threads = 1;
};

struct RebuiltSubtree {
  std::size_t tree = 0;
  TargetId rep = 0;
  int level = 0;
  std::uint64_t leaves = 0;
  std::string reason;  // "guard", "covering" or "separation"
};

struct RebuildStats {
  std::uint64_t nodes_visited = 0;
  std::uint64_t subtrees_rebuilt = 0;
  std::uint64_t leaves_reinserted = 0;
  double wall_time = 0.0;  // seconds
  std::vector<RebuiltSubtree> rebuilt;

  std::string to_json() const;
};

// Repairs every tree against `metric` (the refreshed embeddings) and installs it
// as the forest metric. Cover-mode forests are rebuilt from scratch.
RebuildStats update_sg_tree(SGForest& forest, TreeMetric metric, const RepairOptions& opts);

// Moves `fraction` of the rows (chosen uniformly) along a random tangent
// direction of the unit sphere so each chosen row travels exactly `distance`
// (chord length, at most 2). Rows are renormalized first. Returns moved rows.
std::vector<TargetId> perturb_on_sphere(RowMat& rows, double fraction, double distance, Rng& rng);

}  // namespace negtree
