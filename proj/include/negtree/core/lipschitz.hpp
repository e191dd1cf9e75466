// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#pragma once

#include <optional>

#include "negtree/core/encoder.hpp"
#include "negtree/core/rng.hpp"

namespace negtree {

struct LipschitzEstimate {
  double L_hat = 0.0;
  double M_hat = 0.0;
  int probes_used = 0;
  int probes_skipped = 0;  // zero-norm perturbations
};

// Spectral norm of d f(x) / d Theta for one tower at one input.
double jacobian_norm(const DualEncoder& enc, Side s, VecRef x);

// ||f_{Theta+delta}(x) - f_Theta(x)|| / ||delta||; nullopt when delta == 0.
std::optional<double> probe_ratio(const DualEncoder& enc, Side s, VecRef x, VecRef delta);

// L_hat: max over sampled inputs of the local Jacobian norm and of `probes`
// finite perturbation ratios of norm `probe_scale`. M_hat: max over all
// query/target pairs of ||grad <f_theta(x), f_phi(y)>||.
LipschitzEstimate estimate_lipschitz_and_grad_bound(const DualEncoder& enc, const RowMat& queries,
                                                    const RowMat& targets, Rng& rng, int probes = 0,
                                                    double probe_scale = 1e-3);

}  // namespace negtree
