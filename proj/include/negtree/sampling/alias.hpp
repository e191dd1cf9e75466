// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "negtree/core/rng.hpp"
#include "negtree/core/types.hpp"

namespace negtree {

// Walker/Vose alias table over unnormalized log-weights; O(1) draws.
class AliasTable {
 public:
  AliasTable() = default;
  explicit AliasTable(const std::vector<double>& log_weights);

  std::size_t sample(Rng& rng) const;
  std::size_t size() const { return prob_.size(); }
  // Normalized probability of outcome i.
  double probability(std::size_t i) const { return p_[i]; }

 private:
  std::vector<double> prob_;
  std::vector<std::size_t> alias_;
  std::vector<double> p_;
};

}  // namespace negtree
