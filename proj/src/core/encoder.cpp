// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#include "negtree/core/encoder.hpp"

#include <cmath>

namespace negtree {

namespace {

void validate_tower(const TowerSpec& t) {
  require(t.input_dim >= 1, "tower input_dim must be >= 1");
  require(t.output_dim >= 1, "tower output_dim must be >= 1");
  if (t.arch == Architecture::Mlp) require(t.hidden_dim >= 1, "mlp hidden_dim must be >= 1");
}

using MatMap = Eigen::Map<const Mat>;
using MutMatMap = Eigen::Map<Mat>;

}  // namespace

std::string to_string(Architecture a) { return a == Architecture::Linear ? "linear" : "mlp"; }

Architecture architecture_from_string(const std::string& s) {
  if (s == "linear") return Architecture::Linear;
  if (s == "mlp") return Architecture::Mlp;
  throw InvalidInput("unknown architecture '" + s + "'");
}

Eigen::Index DualEncoder::tower_size(const TowerSpec& t) {
  if (t.arch == Architecture::Linear) return Eigen::Index(t.output_dim) * t.input_dim;
  return Eigen::Index(t.hidden_dim) * t.input_dim + t.hidden_dim + Eigen::Index(t.output_dim) * t.hidden_dim;
}

DualEncoder::DualEncoder(TowerSpec query, TowerSpec target) : query_(query), target_(target) {
  validate_tower(query_);
  validate_tower(target_);
  require(query_.output_dim == target_.output_dim, "query and target towers must share output_dim");
  params_ = Vec::Zero(tower_size(query_) + tower_size(target_));
}

DualEncoder::DualEncoder(const DualEncoder& o)
    : query_(o.query_), target_(o.target_), params_(o.params_), target_calls_(o.target_calls_.load()),
      query_calls_(o.query_calls_.load()) {}

DualEncoder& DualEncoder::operator=(const DualEncoder& o) {
  query_ = o.query_;
  target_ = o.target_;
  params_ = o.params_;
  target_calls_ = o.target_calls_.load();
  query_calls_ = o.query_calls_.load();
  return *this;
}

DualEncoder DualEncoder::random(TowerSpec query, TowerSpec target, Rng& rng) {
  DualEncoder enc(query, target);
  for (Side s : {Side::Query, Side::Target}) {
    const TowerSpec& t = enc.spec(s);
    double* p = enc.params_.data() + enc.offset(s);
    auto fill = [&](Eigen::Index n, double scale) {
      for (Eigen::Index i = 0; i < n; ++i) *p++ = rng.normal() * scale;
    };
    if (t.arch == Architecture::Linear) {
      fill(Eigen::Index(t.output_dim) * t.input_dim, 1.0 / std::sqrt(double(t.input_dim)));
    } else {
      fill(Eigen::Index(t.hidden_dim) * t.input_dim, 1.0 / std::sqrt(double(t.input_dim)));
      fill(t.hidden_dim, 0.0);
      fill(Eigen::Index(t.output_dim) * t.hidden_dim, 1.0 / std::sqrt(double(t.hidden_dim)));
    }
  }
  return enc;
}

void DualEncoder::reset_call_counters() const {
  target_calls_ = 0;
  query_calls_ = 0;
}

Trace DualEncoder::forward(Side s, VecRef x) const {
  const TowerSpec& t = spec(s);
  if (x.size() != t.input_dim) throw InvalidInput("encoder input has wrong dimension");
  (s == Side::Target ? target_calls_ : query_calls_).fetch_add(1, std::memory_order_relaxed);
  const double* p = params_.data() + offset(s);
  Trace tr;
  tr.input = x;
  if (t.arch == Architecture::Linear) {
    tr.raw = MatMap(p, t.output_dim, t.input_dim) * x;
  } else {
    MatMap w1(p, t.hidden_dim, t.input_dim);
    Eigen::Map<const Vec> b1(p + w1.size(), t.hidden_dim);
    MatMap w2(p + w1.size() + t.hidden_dim, t.output_dim, t.hidden_dim);
    tr.hidden = (w1 * x + b1).array().tanh().matrix();
    tr.raw = w2 * tr.hidden;
  }
  if (t.normalize) {
    tr.norm = tr.raw.norm();
    if (!(tr.norm > 0.0) || !std::isfinite(tr.norm)) throw NumericError("encoder output has zero or non-finite norm");
    tr.out = tr.raw / tr.norm;
  } else {
    tr.norm = 1.0;
    tr.out = tr.raw;
  }
  if (!tr.out.allFinite()) throw NumericError("non-finite embedding");
  return tr;
}

Vec DualEncoder::encode(Side s, VecRef x) const { return forward(s, x).out; }

RowMat DualEncoder::encode_rows(Side s, const RowMat& xs) const {
  RowMat out(xs.rows(), dim());
  for (Eigen::Index i = 0; i < xs.rows(); ++i) out.row(i) = encode(s, xs.row(i).transpose()).transpose();
  return out;
}

void DualEncoder::backward(Side s, const Trace& tr, VecRef g, MutVecRef grad) const {
  const TowerSpec& t = spec(s);
  Vec graw = t.normalize ? Vec((g - tr.out * tr.out.dot(g)) / tr.norm) : Vec(g);
  double* gp = grad.data() + offset(s);
  if (t.arch == Architecture::Linear) {
    MutMatMap(gp, t.output_dim, t.input_dim).noalias() += graw * tr.input.transpose();
    return;
  }
  const double* p = params_.data() + offset(s);
  const Eigen::Index n1 = Eigen::Index(t.hidden_dim) * t.input_dim;
  MatMap w2(p + n1 + t.hidden_dim, t.output_dim, t.hidden_dim);
  MutMatMap(gp + n1 + t.hidden_dim, t.output_dim, t.hidden_dim).noalias() += graw * tr.hidden.transpose();
  Vec gpre = (w2.transpose() * graw).cwiseProduct((1.0 - tr.hidden.array().square()).matrix());
  MutMatMap(gp, t.hidden_dim, t.input_dim).noalias() += gpre * tr.input.transpose();
  Eigen::Map<Vec>(gp + n1, t.hidden_dim) += gpre;
}

}  // namespace negtree
