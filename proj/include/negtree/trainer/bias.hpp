// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#pragma once

#include <cstddef>
#include <span>

#include "negtree/core/encoder.hpp"
#include "negtree/core/softmax.hpp"
#include "negtree/core/store.hpp"
#include "negtree/sampling/proposal.hpp"

namespace negtree {

// Law of an independent MH chain's state after s proposal draws (s = 1 is Q).
Vec mh_marginal(const ClusterProposal& q, std::size_t s);

// sum_y weights[y] * beta * grad <f(x), g(y)>. With weights = softmax this is grad log Z.
Vec expected_logit_gradient(const DualEncoder& enc, VecRef x, const TargetStore& store, const Vec& weights,
                            const SoftmaxParams& p);

// max_y |grad <f(x), g(y)>|, the per-query gradient bound M.
double max_inner_product_gradient(const DualEncoder& enc, VecRef x, const TargetStore& store);

struct SampledGradient {
  Vec mean;
  double sigma = 0.0;  // sqrt(E |g - mean|^2) over the samples
};

SampledGradient sampled_logit_gradient(const DualEncoder& enc, VecRef x, const TargetStore& store,
                                       std::span<const TargetId> samples, const SoftmaxParams& p);

}  // namespace negtree
