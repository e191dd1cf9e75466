// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#include "negtree/sketch/nystrom.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "negtree/core/io.hpp"

namespace negtree {

namespace {

// Pseudo-inverse and square root of the pseudo-inverse of a PSD matrix.
struct PsdInverse {
  Mat pinv;
  Mat pinv_sqrt;
  Eigen::Index rank = 0;
};

PsdInverse psd_inverse(const Mat& g) {
  Eigen::SelfAdjointEigenSolver<Mat> es(g);
  if (es.info() != Eigen::Success) throw NumericError("landmark Gram eigendecomposition failed");
  const Vec& ev = es.eigenvalues();
  const double top = ev.size() ? std::max(ev.maxCoeff(), 0.0) : 0.0;
  Vec inv = Vec::Zero(ev.size());
  Vec inv_sqrt = Vec::Zero(ev.size());
  PsdInverse out;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (top > 0.0 && ev[i] > kPinvCutoff * top) {
      inv[i] = 1.0 / ev[i];
      inv_sqrt[i] = 1.0 / std::sqrt(ev[i]);
      ++out.rank;
    }
  }
  const Mat& u = es.eigenvectors();
  out.pinv = u * inv.asDiagonal() * u.transpose();
  out.pinv_sqrt = u * inv_sqrt.asDiagonal() * u.transpose();
  return out;
}

std::vector<TargetId> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<TargetId> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  for (std::size_t i = 0; i < k; ++i) std::swap(all[i], all[i + rng.below(n - i)]);
  all.resize(k);
  return all;
}

}  // namespace

NystromSketch sketch_from_landmarks(std::vector<TargetId> ids, Mat landmarks) {
  require(landmarks.rows() >= 1, "sketch needs at least one landmark");
  require(static_cast<Eigen::Index>(ids.size()) == landmarks.rows(), "one id per landmark row");
  NystromSketch s;
  s.landmark_ids = std::move(ids);
  s.landmarks = std::move(landmarks);
  const Mat gram = s.landmarks * s.landmarks.transpose();
  PsdInverse inv = psd_inverse(gram);
  s.cross_weights = inv.pinv;
  s.effective_rank = inv.rank;
  return s;
}

NystromSketch fit_nystrom(const TargetStore& store, Eigen::Index dim_low, Rng& rng) {
  require(dim_low >= 1 && dim_low <= store.size(), "landmark count must lie in [1, |Y|]");
  auto ids = sample_without_replacement(static_cast<std::size_t>(store.size()), static_cast<std::size_t>(dim_low), rng);
  Mat lm(dim_low, store.full.cols());
  for (Eigen::Index i = 0; i < dim_low; ++i) lm.row(i) = store.full.row(static_cast<Eigen::Index>(ids[i]));
  return sketch_from_landmarks(std::move(ids), std::move(lm));
}

Vec embed_low(const NystromSketch& s, VecRef full, Side side) {
  Vec k = s.landmarks * full;
  if (side == Side::Query) return s.cross_weights * k;
  return k;
}

RowMat embed_low_rows(const NystromSketch& s, const RowMat& full, Side side) {
  RowMat k = full * s.landmarks.transpose();
  if (side == Side::Query) return k * s.cross_weights;
  return k;
}

void refresh_low(TargetStore& store, const NystromSketch& sketch) {
  store.low = embed_low_rows(sketch, store.full, Side::Target);
  store.low_version = store.full_version;
}

TreeMetric nystrom_metric(const TargetStore& store, const NystromSketch& sketch) {
  require(store.low.rows() == store.size() && store.low.cols() == sketch.dim_low(),
          "store.low must be refreshed against this sketch");
  return TreeMetric::nystrom(store.low, sketch.landmarks, sketch.cross_weights);
}

Vec Reencoder::predict(VecRef cached) const {
  Vec y = cached + weights.transpose() * (feature_map * cached);
  const double n = y.norm();
  if (n > 0.0) y /= n;
  return y;
}

Reencoder fit_reencoder(const NystromSketch& sketch, const TargetStore& store, const DualEncoder& enc,
                        Eigen::Index train_size, double lambda, Rng& rng) {
  require(lambda > 0.0, "ridge lambda must be > 0");
  require(train_size >= 1 && train_size <= store.size(), "training size must lie in [1, |Y|]");
  require(store.full.cols() == sketch.landmarks.cols(), "sketch and store dimensions differ");
  Reencoder r;
  r.lambda = lambda;
  r.train_ids = sample_without_replacement(static_cast<std::size_t>(store.size()),
                                           static_cast<std::size_t>(train_size), rng);
  std::sort(r.train_ids.begin(), r.train_ids.end());
  r.feature_map = psd_inverse(sketch.landmarks * sketch.landmarks.transpose()).pinv_sqrt * sketch.landmarks;

  const Eigen::Index dl = sketch.dim_low();
  Mat phi(train_size, dl);
  r.train_targets.resize(train_size, enc.dim());
  for (Eigen::Index i = 0; i < train_size; ++i) {
    const auto y = static_cast<Eigen::Index>(r.train_ids[i]);
    phi.row(i) = (r.feature_map * store.full.row(y).transpose()).transpose();
    r.train_targets.row(i) = enc.encode(Side::Target, store.features.row(y).transpose()).transpose();
  }
  RowMat delta = r.train_targets;
  for (Eigen::Index i = 0; i < train_size; ++i) delta.row(i) -= store.full.row(static_cast<Eigen::Index>(r.train_ids[i]));
  const Mat a = phi.transpose() * phi + lambda * Mat::Identity(dl, dl);
  r.weights = a.ldlt().solve(phi.transpose() * delta);
  return r;
}

void apply_reencoder(const Reencoder& r, NystromSketch& sketch, TargetStore& store, const DualEncoder& enc,
                     std::uint64_t version) {
  require(r.weights.rows() == sketch.dim_low(), "re-encoder was fitted against a different sketch");
  const Eigen::Index dl = sketch.dim_low();
  Mat fresh(dl, enc.dim());
  for (Eigen::Index i = 0; i < dl; ++i) {
    const auto y = static_cast<Eigen::Index>(sketch.landmark_ids[i]);
    fresh.row(i) = enc.encode(Side::Target, store.features.row(y).transpose()).transpose();
  }

  RowMat pred = store.full + (store.full * r.feature_map.transpose()) * r.weights;
  pred.rowwise().normalize();
  for (std::size_t i = 0; i < r.train_ids.size(); ++i)
    pred.row(static_cast<Eigen::Index>(r.train_ids[i])) = r.train_targets.row(static_cast<Eigen::Index>(i));
  for (Eigen::Index i = 0; i < dl; ++i) pred.row(static_cast<Eigen::Index>(sketch.landmark_ids[i])) = fresh.row(i);

  store.full = std::move(pred);
  store.full_version = version;
  store.approximate = true;
  sketch = sketch_from_landmarks(sketch.landmark_ids, std::move(fresh));
  refresh_low(store, sketch);
}

std::string serialize_sketch(const NystromSketch& s) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(s.dim_low()));
  w.u32(static_cast<std::uint32_t>(s.landmarks.cols()));
  for (TargetId id : s.landmark_ids) w.u64(id);
  for (Eigen::Index i = 0; i < s.landmarks.rows(); ++i)
    for (Eigen::Index j = 0; j < s.landmarks.cols(); ++j) w.f64(s.landmarks(i, j));
  return w.str();
}

NystromSketch deserialize_sketch(const std::string& payload) {
  ByteReader r(payload);
  const auto dl = static_cast<Eigen::Index>(r.u32());
  const auto d = static_cast<Eigen::Index>(r.u32());
  require(dl >= 1 && d >= 1, "sketch section has empty dimensions");
  std::vector<TargetId> ids(static_cast<std::size_t>(dl));
  for (auto& id : ids) id = r.u64();
  Mat lm(dl, d);
  for (Eigen::Index i = 0; i < dl; ++i)
    for (Eigen::Index j = 0; j < d; ++j) lm(i, j) = r.f64();
  if (!r.done()) throw IoError("trailing bytes in sketch section");
  return sketch_from_landmarks(std::move(ids), std::move(lm));
}

}  // namespace negtree
