// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "negtree/core/encoder.hpp"
#include "negtree/core/rng.hpp"
#include "negtree/core/store.hpp"
#include "negtree/core/types.hpp"
#include "negtree/sgtree/metric.hpp"

namespace negtree {

// Nystrom factorization of the inner-product kernel over target embeddings,
// K ~ K S (S^T K S)^+ S^T K with S the landmark selection.
struct NystromSketch {
  std::vector<TargetId> landmark_ids;
  Mat landmarks;      // d' x d, current full-dim landmark embeddings
  Mat cross_weights;  // d' x d', pseudo-inverse of the landmark Gram block
  Eigen::Index effective_rank = 0;

  Eigen::Index dim_low() const { return landmarks.rows(); }
};

// Relative eigenvalue cutoff of the Gram pseudo-inverse.
constexpr double kPinvCutoff = 1e-8;

NystromSketch sketch_from_landmarks(std::vector<TargetId> ids, Mat landmarks);
// d' landmarks uniformly without replacement from the store's targets.
NystromSketch fit_nystrom(const TargetStore& store, Eigen::Index dim_low, Rng& rng);

// Targets map to their landmark similarities L y; queries to W L q, so
// <embed_low(q, Query), embed_low(y, Target)> = q^T L^T W L y.
Vec embed_low(const NystromSketch& sketch, VecRef full, Side side);
RowMat embed_low_rows(const NystromSketch& sketch, const RowMat& full, Side side);

inline double sim_to_distance(double similarity) { return std::exp(-similarity); }

// store.low <- target-side low-dim rows of store.full.
void refresh_low(TargetStore& store, const NystromSketch& sketch);
// Tree metric exp(-approximate similarity) over store.low.
TreeMetric nystrom_metric(const TargetStore& store, const NystromSketch& sketch);

// Ridge regression from Nystrom features of the cached embeddings,
// phi(y) = W^(1/2) L y, to the change of embedding under the new parameters:
// prediction = normalize(cached + weights^T phi).
struct Reencoder {
  Mat weights;      // d' x d
  Mat feature_map;  // W^(1/2) L, d' x d, of the sketch fitted against
  double lambda = 1e-4;
  std::vector<TargetId> train_ids;
  RowMat train_targets;  // exact new embeddings of train_ids

  Vec predict(VecRef cached) const;
};

// Re-encodes s' uniformly drawn targets with `enc` (s' encoder calls) and fits
// the ridge map against the store's current cache.
Reencoder fit_reencoder(const NystromSketch& sketch, const TargetStore& store, const DualEncoder& enc,
                        Eigen::Index train_size, double lambda, Rng& rng);

// Re-encodes the d' landmarks exactly, replaces every cached embedding by its
// normalized prediction (exact for training targets and landmarks), refits the
// sketch on the new landmark embeddings and recomputes store.low. Marks the
// store approximate at `version`.
void apply_reencoder(const Reencoder& r, NystromSketch& sketch, TargetStore& store, const DualEncoder& enc,
                     std::uint64_t version);

// "SKCH" section payload.
std::string serialize_sketch(const NystromSketch& sketch);
NystromSketch deserialize_sketch(const std::string& payload);

}  // namespace negtree
