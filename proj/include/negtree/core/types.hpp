// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace negtree {

using Scalar = double;
using TargetId = std::uint64_t;

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
// One embedding per row.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using VecRef = Eigen::Ref<const Vec>;
using MutVecRef = Eigen::Ref<Vec>;

class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when an algorithmic invariant that should hold by construction breaks.
class InternalInvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidInput(what);
}

}  // namespace negtree
