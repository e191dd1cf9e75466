// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#include "negtree/core/lipschitz.hpp"

#include <algorithm>
#include <cmath>

#include "negtree/core/softmax.hpp"

namespace negtree {

double jacobian_norm(const DualEncoder& enc, Side s, VecRef x) {
  const Trace tr = enc.forward(s, x);
  const int d = enc.dim();
  Mat jac(d, enc.size(s));
  Vec g = Vec::Zero(d);
  Vec row(enc.num_params());
  for (int i = 0; i < d; ++i) {
    row.setZero();
    g.setZero();
    g[i] = 1.0;
    enc.backward(s, tr, g, row);
    jac.row(i) = row.segment(enc.offset(s), enc.size(s)).transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(jac * jac.transpose(), Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

std::optional<double> probe_ratio(const DualEncoder& enc, Side s, VecRef x, VecRef delta) {
  const double dn = delta.norm();
  if (!(dn > 0.0)) return std::nullopt;
  DualEncoder moved = enc;
  moved.params() += delta;
  return (moved.encode(s, x) - enc.encode(s, x)).norm() / dn;
}

LipschitzEstimate estimate_lipschitz_and_grad_bound(const DualEncoder& enc, const RowMat& queries,
                                                    const RowMat& targets, Rng& rng, int probes,
                                                    double probe_scale) {
  require(queries.rows() + targets.rows() >= 1, "lipschitz estimate needs a non-empty sample");
  LipschitzEstimate est;
  auto visit = [&](Side s, const RowMat& xs) {
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
      est.L_hat = std::max(est.L_hat, jacobian_norm(enc, s, xs.row(i).transpose()));
      for (int k = 0; k < probes; ++k) {
        Vec delta = Vec::Zero(enc.num_params());
        for (Eigen::Index j = 0; j < enc.size(s); ++j) delta[enc.offset(s) + j] = rng.normal();
        const double n = delta.norm();
        if (n > 0.0) delta *= probe_scale / n;
        if (auto r = probe_ratio(enc, s, xs.row(i).transpose(), delta)) {
          est.L_hat = std::max(est.L_hat, *r);
          ++est.probes_used;
        } else {
          ++est.probes_skipped;
        }
      }
    }
  };
  visit(Side::Query, queries);
  visit(Side::Target, targets);
  for (Eigen::Index i = 0; i < queries.rows(); ++i)
    for (Eigen::Index j = 0; j < targets.rows(); ++j)
      est.M_hat = std::max(est.M_hat,
                           inner_product_grad(enc, queries.row(i).transpose(), targets.row(j).transpose()).norm());
  return est;
}

}  // namespace negtree
