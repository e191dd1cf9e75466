// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#include "negtree/harness/synthetic.hpp"

#include <cmath>

#include "negtree/core/rng.hpp"

namespace negtree {

void SyntheticTask::validate() const {
  require(num_targets >= 2, "numTargets must be >= 2");
  require(dim >= 1, "dim must be >= 1");
  require(num_clusters >= 1 && num_clusters <= num_targets, "numClusters must lie in [1, numTargets]");
  require(spread >= 0.0 && noise >= 0.0, "spread and noise must be >= 0");
  require(train_size >= 1, "trainSize must be >= 1");
}

SyntheticData gen_synthetic(const SyntheticTask& t) {
  t.validate();
  const Rng root(t.seed);
  const double scale = 1.0 / std::sqrt(double(t.dim));
  auto gauss = [&](Rng& r) {
    Vec g(t.dim);
    for (int j = 0; j < t.dim; ++j) g[j] = r.normal();
    return g;
  };

  Rng rc = root.split(1);
  RowMat centres(static_cast<Eigen::Index>(t.num_clusters), t.dim);
  for (Eigen::Index c = 0; c < centres.rows(); ++c) centres.row(c) = gauss(rc).normalized().transpose();

  SyntheticData out;
  Rng rt = root.split(2);
  out.target_features.resize(static_cast<Eigen::Index>(t.num_targets), t.dim);
  out.cluster_of.resize(t.num_targets);
  for (std::size_t y = 0; y < t.num_targets; ++y) {
    const std::size_t c = y % t.num_clusters;
    out.cluster_of[y] = c;
    Vec f = centres.row(static_cast<Eigen::Index>(c)).transpose() + t.spread * scale * gauss(rt);
    const double n = f.norm();
    out.target_features.row(static_cast<Eigen::Index>(y)) = (n > 0 ? f / n : f).transpose();
  }

  auto queries = [&](std::size_t count, Rng r, RowMat& x, std::vector<TargetId>& labels) {
    x.resize(static_cast<Eigen::Index>(count), t.dim);
    labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const TargetId y = r.below(t.num_targets);
      labels[i] = y;
      x.row(static_cast<Eigen::Index>(i)) =
          out.target_features.row(static_cast<Eigen::Index>(y)) + t.noise * scale * gauss(r).transpose();
    }
  };
  queries(t.train_size, root.split(3), out.data.train_x, out.data.train_y);
  queries(t.eval_size, root.split(4), out.data.eval_x, out.data.eval_y);
  return out;
}

nlohmann::json to_json(const SyntheticTask& t) {
  return {{"numTargets", t.num_targets}, {"dim", t.dim},     {"numClusters", t.num_clusters},
          {"spread", t.spread},          {"noise", t.noise}, {"trainSize", t.train_size},
          {"evalSize", t.eval_size},     {"seed", t.seed}};
}

SyntheticTask task_from_json(const nlohmann::json& j) {
  require(j.is_object(), "task must be a JSON object");
  SyntheticTask t;
  for (const auto& [key, v] : j.items()) {
    if (key == "numTargets") t.num_targets = v.get<std::size_t>();
    else if (key == "dim") t.dim = v.get<int>();
    else if (key == "numClusters") t.num_clusters = v.get<std::size_t>();
    else if (key == "spread") t.spread = v.get<double>();
    else if (key == "noise") t.noise = v.get<double>();
    else if (key == "trainSize") t.train_size = v.get<std::size_t>();
    else if (key == "evalSize") t.eval_size = v.get<std::size_t>();
    else if (key == "seed") t.seed = v.get<std::uint64_t>();
    else throw InvalidInput("unknown task key '" + key + "'");
  }
  t.validate();
  return t;
}

}  // namespace negtree
