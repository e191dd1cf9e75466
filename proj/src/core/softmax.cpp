// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#include "negtree/core/softmax.hpp"

#include <numeric>
#include <string>
#include <unordered_map>

namespace negtree {

void validate(const SoftmaxParams& p) {
  if (!std::isfinite(p.beta) || p.beta < 0.0) throw InvalidInput("beta must be finite and >= 0");
}

double logit(VecRef q, VecRef t, const SoftmaxParams& p) {
  const double s = p.beta * q.dot(t);
  if (!std::isfinite(s)) throw NumericError("non-finite logit");
  return s;
}

double logit(const DualEncoder& enc, VecRef x, VecRef y, const SoftmaxParams& p) {
  return logit(enc.encode(Side::Query, x), enc.encode(Side::Target, y), p);
}

Vec exact_softmax(VecRef q, const RowMat& targets, const SoftmaxParams& p) {
  validate(p);
  require(targets.rows() >= 1, "exact_softmax needs a non-empty target set");
  Vec logits = p.beta * (targets * q);
  if (!logits.allFinite()) throw NumericError("non-finite logit");
  return softmax(logits);
}

Vec exact_softmax(const DualEncoder& enc, VecRef x, const TargetStore& store, const SoftmaxParams& p) {
  require(store.size() >= 1, "exact_softmax needs a non-empty target set");
  return exact_softmax(enc.encode(Side::Query, x), enc.encode_rows(Side::Target, store.features), p);
}

LossGrad batch_loss_and_grad(const DualEncoder& enc, const RowMat& queries,
                             std::span<const std::vector<TargetId>> candidates, const TargetStore& store,
                             const SoftmaxParams& p) {
  validate(p);
  const auto batch = static_cast<Eigen::Index>(candidates.size());
  require(batch >= 1 && queries.rows() == batch, "batch_loss_and_grad: queries and candidate lists disagree");
  const auto n = static_cast<TargetId>(store.size());

  // Encode every distinct target once; dense slots when the batch touches most of the corpus.
  std::size_t touched = 0;
  for (const auto& c : candidates) touched += c.size();
  const bool dense = touched >= static_cast<std::size_t>(n) / 4;
  std::vector<int> dense_slot(dense ? n : 0, -1);
  std::unordered_map<TargetId, int> sparse_slot;
  std::vector<TargetId> ids;
  auto slot_of = [&](TargetId id) -> int {
    if (id >= n) throw InvalidInput("target id " + std::to_string(id) + " out of range");
    int& s = dense ? dense_slot[id] : sparse_slot.try_emplace(id, -1).first->second;
    if (s < 0) {
      s = static_cast<int>(ids.size());
      ids.push_back(id);
    }
    return s;
  };
  std::vector<std::vector<int>> slots(batch);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const auto& c = candidates[i];
    require(!c.empty(), "candidate list must start with the positive");
    for (std::size_t j = 1; j < c.size(); ++j)
      if (c[j] == c[0]) throw InvalidInput("positive target duplicated among negatives");
    slots[i].reserve(c.size());
    for (TargetId id : c) slots[i].push_back(slot_of(id));
  }

  std::vector<Trace> tt;
  tt.reserve(ids.size());
  for (TargetId id : ids) tt.push_back(enc.forward(Side::Target, store.features.row(id).transpose()));
  std::vector<Vec> gt(ids.size(), Vec::Zero(enc.dim()));

  LossGrad out;
  out.grad = Vec::Zero(enc.num_params());
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (Eigen::Index i = 0; i < batch; ++i) {
    Trace tq = enc.forward(Side::Query, queries.row(i).transpose());
    const auto& sl = slots[i];
    Vec logits(sl.size());
    for (std::size_t j = 0; j < sl.size(); ++j) logits[j] = p.beta * tq.out.dot(tt[sl[j]].out);
    if (!logits.allFinite()) throw NumericError("non-finite logit");
    const double lse = log_sum_exp(logits);
    out.loss += (lse - logits[0]) * inv_b;
    Vec coef = (logits.array() - lse).exp().matrix();
    coef[0] -= 1.0;
    Vec gq = Vec::Zero(enc.dim());
    for (std::size_t j = 0; j < sl.size(); ++j) {
      gq += (p.beta * coef[j]) * tt[sl[j]].out;
      gt[sl[j]] += (p.beta * coef[j] * inv_b) * tq.out;
    }
    enc.backward(Side::Query, tq, gq * inv_b, out.grad);
  }
  for (std::size_t s = 0; s < ids.size(); ++s) enc.backward(Side::Target, tt[s], gt[s], out.grad);
  if (!std::isfinite(out.loss) || !out.grad.allFinite()) throw NumericError("non-finite loss or gradient");
  return out;
}

LossGrad exact_loss_and_grad(const DualEncoder& enc, VecRef x, TargetId y_pos, const TargetStore& store,
                             const SoftmaxParams& p) {
  const auto n = static_cast<TargetId>(store.size());
  require(n >= 1, "exact_loss_and_grad needs a non-empty store");
  require(y_pos < n, "positive target out of range");
  std::vector<std::vector<TargetId>> c(1);
  c[0].reserve(n);
  c[0].push_back(y_pos);
  for (TargetId y = 0; y < n; ++y)
    if (y != y_pos) c[0].push_back(y);
  RowMat q = x.transpose();
  return batch_loss_and_grad(enc, q, c, store, p);
}

LossGrad sampled_loss_and_grad(const DualEncoder& enc, VecRef x, TargetId y_pos,
                               std::span<const TargetId> negatives, const TargetStore& store,
                               const SoftmaxParams& p) {
  require(!negatives.empty(), "sampled_loss_and_grad needs at least one negative");
  std::vector<std::vector<TargetId>> c(1);
  c[0].push_back(y_pos);
  c[0].insert(c[0].end(), negatives.begin(), negatives.end());
  RowMat q = x.transpose();
  return batch_loss_and_grad(enc, q, c, store, p);
}

Vec inner_product_grad(const DualEncoder& enc, VecRef x, VecRef y) {
  Trace tq = enc.forward(Side::Query, x);
  Trace tt = enc.forward(Side::Target, y);
  Vec g = Vec::Zero(enc.num_params());
  enc.backward(Side::Query, tq, tt.out, g);
  enc.backward(Side::Target, tt, tq.out, g);
  return g;
}

}  // namespace negtree
