// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <string>

#include "negtree/core/rng.hpp"
#include "negtree/core/types.hpp"

namespace negtree {

enum class Architecture { Linear, Mlp };
enum class Side { Query, Target };

struct TowerSpec {
  Architecture arch = Architecture::Linear;
  int input_dim = 0;
  int output_dim = 0;
  int hidden_dim = 0;  // Mlp only
  bool normalize = true;
};

std::string to_string(Architecture a);
Architecture architecture_from_string(const std::string& s);

// Activations kept from a forward pass so the VJP can run without recomputing.
struct Trace {
  Vec input;
  Vec hidden;  // tanh activations, Mlp only
  Vec raw;     // pre-normalization output
  double norm = 1.0;
  Vec out;
};

// Query and target towers over one flat parameter vector [query | target].
// Linear: out = W x. Mlp: out = W2 tanh(W1 x + b1). Both optionally L2-normalized.
class DualEncoder {
 public:
  DualEncoder() = default;
  DualEncoder(TowerSpec query, TowerSpec target);
  DualEncoder(const DualEncoder& o);
  DualEncoder& operator=(const DualEncoder& o);

  // Gaussian init with per-layer scale 1/sqrt(fan_in).
  static DualEncoder random(TowerSpec query, TowerSpec target, Rng& rng);

  const TowerSpec& spec(Side s) const { return s == Side::Query ? query_ : target_; }
  int dim() const { return query_.output_dim; }
  Eigen::Index num_params() const { return params_.size(); }
  Eigen::Index offset(Side s) const { return s == Side::Query ? 0 : tower_size(query_); }
  Eigen::Index size(Side s) const { return tower_size(spec(s)); }

  Vec& params() { return params_; }
  const Vec& params() const { return params_; }

  Vec encode(Side s, VecRef x) const;
  RowMat encode_rows(Side s, const RowMat& xs) const;
  Trace forward(Side s, VecRef x) const;
  // grad += J(x)^T g, where J is the Jacobian of the tower output wrt the full
  // parameter vector (nonzero only on the tower's own block).
  void backward(Side s, const Trace& t, VecRef g, MutVecRef grad) const;

  std::uint64_t target_calls() const { return target_calls_.load(); }
  std::uint64_t query_calls() const { return query_calls_.load(); }
  void reset_call_counters() const;

  static Eigen::Index tower_size(const TowerSpec& t);

 private:
  TowerSpec query_{};
  TowerSpec target_{};
  Vec params_;
  mutable std::atomic<std::uint64_t> target_calls_{0};
  mutable std::atomic<std::uint64_t> query_calls_{0};
};

}  // namespace negtree
