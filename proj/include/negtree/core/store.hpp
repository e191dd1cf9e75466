// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#pragma once

#include <cstdint>

#include "negtree/core/encoder.hpp"
#include "negtree/core/types.hpp"

namespace negtree {

// Featurized targets plus cached embeddings. `full` holds f_phi(y) at
// `full_version` (exact unless `approximate`); `low` holds the sketch-side
// representation used by the Nystrom tree metric.
struct TargetStore {
  RowMat features;
  RowMat full;
  std::uint64_t full_version = 0;
  RowMat low;
  std::uint64_t low_version = 0;
  bool approximate = false;

  Eigen::Index size() const { return features.rows(); }

  static TargetStore encode(RowMat features, const DualEncoder& enc, std::uint64_t version = 0);
  // Exact re-encode of every target; clears the approximate flag.
  void reencode(const DualEncoder& enc, std::uint64_t version);
};

}  // namespace negtree
