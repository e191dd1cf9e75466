// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "negtree/core/encoder.hpp"
#include "negtree/core/store.hpp"
#include "negtree/core/types.hpp"

namespace negtree {

struct SoftmaxParams {
  double beta = 20.0;
};

// beta = 0 is accepted as the uniform limit.
void validate(const SoftmaxParams& p);

template <typename Derived>
double log_sum_exp(const Eigen::DenseBase<Derived>& v) {
  if (v.size() == 0) return -std::numeric_limits<double>::infinity();
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.derived().array() - m).exp().sum());
}

template <typename Derived>
Vec softmax(const Eigen::DenseBase<Derived>& logits) {
  const double lse = log_sum_exp(logits);
  return (logits.derived().array() - lse).exp().matrix();
}

double logit(VecRef query_embedding, VecRef target_embedding, const SoftmaxParams& p);
double logit(const DualEncoder& enc, VecRef x, VecRef y, const SoftmaxParams& p);

// Softmax over precomputed target embeddings (one per row).
Vec exact_softmax(VecRef query_embedding, const RowMat& targets, const SoftmaxParams& p);
// Softmax with every target freshly encoded.
Vec exact_softmax(const DualEncoder& enc, VecRef x, const TargetStore& store, const SoftmaxParams& p);

struct LossGrad {
  double loss = 0.0;
  Vec grad;
};

// Mean cross-entropy over a batch. candidates[i][0] is example i's positive,
// the rest its negatives (duplicates among negatives count repeatedly).
LossGrad batch_loss_and_grad(const DualEncoder& enc, const RowMat& queries,
                             std::span<const std::vector<TargetId>> candidates, const TargetStore& store,
                             const SoftmaxParams& p);

LossGrad exact_loss_and_grad(const DualEncoder& enc, VecRef x, TargetId y_pos, const TargetStore& store,
                             const SoftmaxParams& p);

LossGrad sampled_loss_and_grad(const DualEncoder& enc, VecRef x, TargetId y_pos,
                               std::span<const TargetId> negatives, const TargetStore& store,
                               const SoftmaxParams& p);

// Gradient of <f_theta(x), f_phi(y)> wrt all parameters.
Vec inner_product_grad(const DualEncoder& enc, VecRef x, VecRef y);

}  // namespace negtree
