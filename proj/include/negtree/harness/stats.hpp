// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "negtree/core/types.hpp"

namespace negtree {

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

// Goodness of fit of observed counts against probabilities. Bins with
// expected count below `min_expected` are pooled into one bin.
ChiSquareResult chi_square_gof(std::span<const std::uint64_t> counts, const Vec& probs, double min_expected = 5.0);

std::vector<std::uint64_t> histogram(std::span<const TargetId> draws, std::size_t bins);

double tv_distance(const Vec& p, const Vec& q);
// Standard error of the empirical TV from n draws: 0.5 * sum sqrt(p (1 - p) / n).
double tv_standard_error(const Vec& p, std::uint64_t n);

double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace negtree
