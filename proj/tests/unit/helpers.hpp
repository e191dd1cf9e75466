// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#pragma once

#include "negtree/core/encoder.hpp"
#include "negtree/core/rng.hpp"
#include "negtree/core/types.hpp"

namespace negtree::testing {

inline RowMat random_rows(Eigen::Index n, Eigen::Index d, Rng& rng) {
  RowMat m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rng.normal();
  return m;
}

inline RowMat random_unit_rows(Eigen::Index n, Eigen::Index d, Rng& rng) {
  RowMat m = random_rows(n, d, rng);
  m.rowwise().normalize();
  return m;
}

inline DualEncoder linear_encoder(int in, int out, Rng& rng, bool normalize = true) {
  TowerSpec t{Architecture::Linear, in, out, 0, normalize};
  return DualEncoder::random(t, t, rng);
}

inline DualEncoder mlp_encoder(int in, int hidden, int out, Rng& rng) {
  TowerSpec t{Architecture::Mlp, in, out, hidden, true};
  DualEncoder e = DualEncoder::random(t, t, rng);
  for (Eigen::Index i = 0; i < e.num_params(); ++i) e.params()[i] += 0.05 * rng.normal();
  return e;
}

// Identity encoder: the target tower passes unit inputs through unchanged.
inline DualEncoder identity_encoder(int d, bool normalize = true) {
  TowerSpec t{Architecture::Linear, d, d, 0, normalize};
  DualEncoder e(t, t);
  Eigen::Map<Mat>(e.params().data(), d, d).setIdentity();
  Eigen::Map<Mat>(e.params().data() + d * d, d, d).setIdentity();
  return e;
}

}  // namespace negtree::testing
