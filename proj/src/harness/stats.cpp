// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#include "negtree/harness/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>

namespace negtree {

ChiSquareResult chi_square_gof(std::span<const std::uint64_t> counts, const Vec& probs, double min_expected) {
  require(static_cast<Eigen::Index>(counts.size()) == probs.size(), "counts and probabilities differ in length");
  const double n = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}));
  require(n > 0, "chi-square needs at least one observation");
  ChiSquareResult r;
  double pooled_obs = 0.0, pooled_exp = 0.0;
  int bins = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double e = n * probs[static_cast<Eigen::Index>(i)];
    if (e < min_expected) {
      pooled_obs += static_cast<double>(counts[i]);
      pooled_exp += e;
      continue;
    }
    r.statistic += (counts[i] - e) * (counts[i] - e) / e;
    ++bins;
  }
  if (pooled_exp > 0.0) {
    r.statistic += (pooled_obs - pooled_exp) * (pooled_obs - pooled_exp) / pooled_exp;
    ++bins;
  } else if (pooled_obs > 0.0) {
    r.statistic = std::numeric_limits<double>::infinity();
  }
  r.dof = std::max(1, bins - 1);
  if (!std::isfinite(r.statistic)) {
    r.p_value = 0.0;
  } else {
    boost::math::chi_squared dist(r.dof);
    r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
  }
  return r;
}

std::vector<std::uint64_t> histogram(std::span<const TargetId> draws, std::size_t bins) {
  std::vector<std::uint64_t> h(bins, 0);
  for (TargetId y : draws) {
    require(y < bins, "draw outside histogram range");
    ++h[y];
  }
  return h;
}

double tv_distance(const Vec& p, const Vec& q) {
  require(p.size() == q.size(), "tv_distance needs equal-length vectors");
  return 0.5 * (p - q).cwiseAbs().sum();
}

double tv_standard_error(const Vec& p, std::uint64_t n) {
  return 0.5 * (p.array() * (1.0 - p.array()) / static_cast<double>(n)).sqrt().sum();
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * double(i + j) + 1.0;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size() && a.size() >= 2, "spearman needs two equal-length samples");
  const auto ra = ranks(a), rb = ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / ra.size();
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / rb.size();
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  if (da == 0 || db == 0) return 0.0;
  return num / std::sqrt(da * db);
}

}  // namespace negtree
