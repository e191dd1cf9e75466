// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#include "negtree/sampling/alias.hpp"

#include <algorithm>
#include <cmath>

namespace negtree {

AliasTable::AliasTable(const std::vector<double>& log_weights) {
  const std::size_t n = log_weights.size();
  require(n >= 1, "alias table needs at least one outcome");
  const double mx = *std::max_element(log_weights.begin(), log_weights.end());
  if (!std::isfinite(mx)) throw NumericError("alias table weights are not finite");
  p_.resize(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += p_[i] = std::exp(log_weights[i] - mx);
  for (double& x : p_) x /= total;

  prob_.assign(n, 1.0);
  alias_.resize(n);
  std::vector<double> scaled(n);
  std::vector<std::size_t> small, large;
  for (std::size_t i = 0; i < n; ++i) {
    alias_[i] = i;
    scaled[i] = p_[i] * static_cast<double>(n);
    (scaled[i] < 1.0 ? small : large).push_back(i);
  }
  while (!small.empty() && !large.empty()) {
    const std::size_t s = small.back(), l = large.back();
    small.pop_back();
    large.pop_back();
    prob_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] -= 1.0 - scaled[s];
    (scaled[l] < 1.0 ? small : large).push_back(l);
  }
  // Leftovers are 1 up to rounding.
  for (std::size_t i : small) prob_[i] = 1.0;
  for (std::size_t i : large) prob_[i] = 1.0;
}

std::size_t AliasTable::sample(Rng& rng) const {
  const std::size_t i = rng.below(prob_.size());
  return rng.uniform() < prob_[i] ? i : alias_[i];
}

}  // namespace negtree
