// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#pragma once

#include <string>

#include "negtree/core/types.hpp"

namespace negtree {

enum class MetricKind { Euclidean, NystromExp };

std::string to_string(MetricKind k);
MetricKind metric_from_string(const std::string& s);

// Distances the tree is built over. Euclidean: rows are unit embeddings.
// NystromExp: d(a, b) = exp(-<k_a W, k_b>) with k = landmark similarities and
// W the landmark cross weights; d(a, a) is defined as 0.
class TreeMetric {
 public:
  TreeMetric() = default;
  static TreeMetric euclidean(RowMat points);
  static TreeMetric nystrom(RowMat low_targets, Mat landmarks, Mat cross_weights);

  MetricKind kind() const { return kind_; }
  Eigen::Index size() const { return points_.rows(); }
  const RowMat& points() const { return points_; }

  double between(TargetId a, TargetId b) const;
  // Map a full-dim query embedding into the space distance()/similarity() expect.
  Vec query_point(VecRef query_embedding) const;
  double distance(VecRef qp, TargetId b) const;
  double similarity(VecRef qp, TargetId b) const { return qp.dot(points_.row(b)); }
  Vec similarities(VecRef qp) const { return points_ * qp; }

 private:
  MetricKind kind_ = MetricKind::Euclidean;
  RowMat points_;
  RowMat query_side_;  // Nystrom: k W per target
  Mat landmarks_;      // Nystrom: d' x d
  Mat cross_weights_;  // Nystrom: d' x d'
};

}  // namespace negtree
