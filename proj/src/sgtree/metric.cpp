// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#include "negtree/sgtree/metric.hpp"

#include <cmath>

namespace negtree {

std::string to_string(MetricKind k) { return k == MetricKind::Euclidean ? "euclidean" : "nystrom"; }

MetricKind metric_from_string(const std::string& s) {
  if (s == "euclidean") return MetricKind::Euclidean;
  if (s == "nystrom") return MetricKind::NystromExp;
  throw InvalidInput("unknown metric '" + s + "'");
}

TreeMetric TreeMetric::euclidean(RowMat points) {
  require(points.allFinite(), "tree metric needs finite embeddings");
  TreeMetric m;
  m.kind_ = MetricKind::Euclidean;
  m.points_ = std::move(points);
  return m;
}

TreeMetric TreeMetric::nystrom(RowMat low_targets, Mat landmarks, Mat cross_weights) {
  require(low_targets.allFinite(), "tree metric needs finite embeddings");
  require(cross_weights.rows() == low_targets.cols() && cross_weights.cols() == low_targets.cols(),
          "cross weights must be d' x d'");
  require(landmarks.rows() == low_targets.cols(), "landmark matrix must have d' rows");
  TreeMetric m;
  m.kind_ = MetricKind::NystromExp;
  m.query_side_ = low_targets * cross_weights;
  m.points_ = std::move(low_targets);
  m.landmarks_ = std::move(landmarks);
  m.cross_weights_ = std::move(cross_weights);
  return m;
}

double TreeMetric::between(TargetId a, TargetId b) const {
  if (a == b) return 0.0;
  if (kind_ == MetricKind::Euclidean) return (points_.row(a) - points_.row(b)).norm();
  return std::exp(-query_side_.row(a).dot(points_.row(b)));
}

Vec TreeMetric::query_point(VecRef q) const {
  if (kind_ == MetricKind::Euclidean) return q;
  return cross_weights_ * (landmarks_ * q);
}

double TreeMetric::distance(VecRef qp, TargetId b) const {
  if (kind_ == MetricKind::Euclidean) return (qp.transpose() - points_.row(b)).norm();
  return std::exp(-similarity(qp, b));
}

}  // namespace negtree
