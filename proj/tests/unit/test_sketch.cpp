// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "negtree/core/io.hpp"
#include "negtree/core/store.hpp"
#include "negtree/sketch/nystrom.hpp"

using namespace negtree;
using namespace negtree::testing;

namespace {

TargetStore store_of(RowMat full) {
  TargetStore s;
  s.features = full;
  s.full = std::move(full);
  return s;
}

// Kernel reconstructed from the sketch: rows of K S W S^T K.
Mat reconstructed(const NystromSketch& sk, const RowMat& full) {
  RowMat q = embed_low_rows(sk, full, Side::Query);
  RowMat t = embed_low_rows(sk, full, Side::Target);
  return q * t.transpose();
}

// Unit rows spanning a random rank-r subspace of R^d.
RowMat rank_r_rows(Eigen::Index n, Eigen::Index d, Eigen::Index r, Rng& rng) {
  RowMat basis = random_rows(r, d, rng);
  RowMat m = random_rows(n, r, rng) * basis;
  m.rowwise().normalize();
  return m;
}

// Cayley rotation (I - A)(I + A)^-1 of a random skew matrix scaled by `angle`.
Mat random_rotation(Eigen::Index d, double angle, Rng& rng) {
  Mat g = random_rows(d, d, rng);
  Mat a = angle * (g - g.transpose()) / std::sqrt(double(d));
  Mat id = Mat::Identity(d, d);
  return (id - a) * (id + a).inverse();
}

void rotate_target_tower(DualEncoder& enc, const Mat& rot) {
  const TowerSpec& t = enc.spec(Side::Target);
  Eigen::Map<Mat> w(enc.params().data() + enc.offset(Side::Target), t.output_dim, t.input_dim);
  w = rot * Mat(w);
}

double mean_row_error(const RowMat& a, const RowMat& b) { return (a - b).rowwise().norm().mean(); }

}  // namespace

TEST_CASE("all targets as landmarks reproduce the kernel") {
  for (auto [n, d] : {std::pair{30, 40}, std::pair{60, 12}}) {
    Rng rng(1 + n);
    TargetStore st = store_of(random_unit_rows(n, d, rng));
    NystromSketch sk = fit_nystrom(st, n, rng);
    const Mat k = st.full * st.full.transpose();
    CHECK((reconstructed(sk, st.full) - k).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(sk.effective_rank == std::min(n, d));
    CHECK((sk.cross_weights - sk.cross_weights.transpose()).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("rank-r data is reconstructed from r or more landmarks") {
  for (int r : {2, 5, 8}) {
    Rng rng(10 + r);
    TargetStore st = store_of(rank_r_rows(200, 16, r, rng));
    NystromSketch sk = fit_nystrom(st, r + 3, rng);
    CHECK(sk.effective_rank == r);
    const Mat k = st.full * st.full.transpose();
    CHECK((reconstructed(sk, st.full) - k).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("a single landmark gives the rank-one kernel") {
  Rng rng(3);
  TargetStore st = store_of(random_unit_rows(20, 6, rng));
  NystromSketch sk = fit_nystrom(st, 1, rng);
  const Vec s = st.full.row(static_cast<Eigen::Index>(sk.landmark_ids[0])).transpose();
  const Vec k = st.full * s;
  const Mat expect = k * k.transpose() / s.squaredNorm();
  CHECK((reconstructed(sk, st.full) - expect).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("landmark self similarity and null projection") {
  Rng rng(4);
  TargetStore st = store_of(random_unit_rows(50, 20, rng));
  NystromSketch sk = fit_nystrom(st, 10, rng);
  for (TargetId id : sk.landmark_ids) {
    const Vec y = st.full.row(static_cast<Eigen::Index>(id)).transpose();
    CHECK(embed_low(sk, y, Side::Query).dot(embed_low(sk, y, Side::Target)) == doctest::Approx(1.0).epsilon(1e-5));
  }
  // Orthogonal to the landmark span.
  Mat basis = sk.landmarks.transpose();
  Vec z = Vec::NullaryExpr(20, [&] { return rng.normal(); });
  z -= basis * basis.colPivHouseholderQr().solve(z);
  z.normalize();
  CHECK(embed_low(sk, z, Side::Target).norm() < 1e-10);
  CHECK(embed_low(sk, z, Side::Query).norm() < 1e-8);
}

TEST_CASE("duplicate landmarks truncate the pseudo-inverse") {
  Rng rng(5);
  RowMat pts = random_unit_rows(4, 8, rng);
  Mat lm(3, 8);
  lm << pts.row(0), pts.row(0), pts.row(1);
  NystromSketch sk = sketch_from_landmarks({0, 0, 1}, lm);
  CHECK(sk.effective_rank == 2);
  const Mat k = pts * pts.transpose();
  // Both distinct landmark rows are reproduced exactly.
  Mat rec = reconstructed(sk, pts);
  CHECK(std::abs(rec(0, 1) - k(0, 1)) < 1e-10);
  CHECK(std::abs(rec(2, 0) - k(2, 0)) < 1e-10);
}

TEST_CASE("similarity to distance") {
  CHECK(sim_to_distance(0.0) == 1.0);
  CHECK(sim_to_distance(1.0) == doctest::Approx(0.36787944117));
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    const double a = 4 * rng.uniform() - 2, b = 4 * rng.uniform() - 2;
    if (a > b) CHECK(sim_to_distance(a) < sim_to_distance(b));
  }
}

TEST_CASE("nystrom tree metric uses the approximate kernel") {
  Rng rng(7);
  TargetStore st = store_of(random_unit_rows(40, 10, rng));
  NystromSketch sk = fit_nystrom(st, 6, rng);
  CHECK_THROWS_AS(nystrom_metric(st, sk), InvalidInput);
  refresh_low(st, sk);
  TreeMetric m = nystrom_metric(st, sk);
  const Mat rec = reconstructed(sk, st.full);
  CHECK(m.between(3, 3) == 0.0);
  CHECK(m.between(3, 17) == doctest::Approx(sim_to_distance(rec(3, 17))));
  const Vec q = st.full.row(5).transpose();
  CHECK(m.similarity(m.query_point(q), 9) == doctest::Approx(rec(5, 9)));
}

TEST_CASE("re-encoder with unchanged parameters keeps the cache") {
  Rng rng(8);
  DualEncoder enc = linear_encoder(12, 8, rng);
  TargetStore st = TargetStore::encode(random_rows(200, 12, rng), enc);
  NystromSketch sk = fit_nystrom(st, 16, rng);
  refresh_low(st, sk);
  const RowMat before = st.full;
  Reencoder r = fit_reencoder(sk, st, enc, 40, 1e-4, rng);
  apply_reencoder(r, sk, st, enc, 1);
  CHECK((st.full - before).cwiseAbs().maxCoeff() < 1e-3);
  CHECK(st.approximate);
  CHECK(st.full_version == 1);
  CHECK(st.low_version == 1);
}

TEST_CASE("rotation drift is predicted on held-out targets") {
  Rng rng(9);
  DualEncoder enc = linear_encoder(12, 8, rng);
  TargetStore st = TargetStore::encode(random_rows(300, 12, rng), enc);
  NystromSketch sk = fit_nystrom(st, 16, rng);
  DualEncoder moved = enc;
  rotate_target_tower(moved, random_rotation(8, 0.3, rng));
  Reencoder r = fit_reencoder(sk, st, moved, 50, 1e-4, rng);
  double worst = 0.0;
  for (Eigen::Index y = 0; y < st.size(); ++y) {
    if (std::binary_search(r.train_ids.begin(), r.train_ids.end(), TargetId(y))) continue;
    const Vec exact = moved.encode(Side::Target, st.features.row(y).transpose());
    worst = std::max(worst, (r.predict(st.full.row(y).transpose()) - exact).norm());
  }
  CHECK(worst <= 1e-2);
}

TEST_CASE("all targets in training interpolate") {
  Rng rng(10);
  DualEncoder enc = linear_encoder(12, 16, rng);
  TargetStore st = TargetStore::encode(random_rows(10, 12, rng), enc);
  NystromSketch sk = fit_nystrom(st, 10, rng);
  DualEncoder moved = mlp_encoder(12, 10, 16, rng);
  Reencoder r = fit_reencoder(sk, st, moved, 10, 1e-12, rng);
  for (std::size_t i = 0; i < r.train_ids.size(); ++i) {
    const auto y = static_cast<Eigen::Index>(r.train_ids[i]);
    Vec raw = st.full.row(y).transpose() + r.weights.transpose() * (r.feature_map * st.full.row(y).transpose());
    CHECK((raw - r.train_targets.row(static_cast<Eigen::Index>(i)).transpose()).norm() < 1e-5);
  }
  CHECK_THROWS_AS(fit_reencoder(sk, st, moved, 10, 0.0, rng), InvalidInput);
  CHECK_THROWS_AS(fit_reencoder(sk, st, moved, 11, 1e-4, rng), InvalidInput);
}

TEST_CASE("apply_reencoder beats the stale cache and counts encoder calls") {
  const Eigen::Index s_train = 64, d_low = 24;
  int better = 0;
  double worst_ratio = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    DualEncoder enc = linear_encoder(20, 16, rng);
    TargetStore st = TargetStore::encode(random_rows(500, 20, rng), enc);
    NystromSketch sk = fit_nystrom(st, d_low, rng);
    refresh_low(st, sk);
    const RowMat stale = st.full;
    DualEncoder moved = enc;
    rotate_target_tower(moved, random_rotation(16, 0.2 + 0.05 * double(seed), rng));
    moved.reset_call_counters();
    Reencoder r = fit_reencoder(sk, st, moved, s_train, 1e-4, rng);
    apply_reencoder(r, sk, st, moved, 1);
    CHECK(moved.target_calls() == std::uint64_t(s_train + d_low));
    CHECK(moved.query_calls() == 0);
    CHECK((st.full.rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-6);
    const RowMat exact = moved.encode_rows(Side::Target, st.features);
    const double e_pred = mean_row_error(st.full, exact);
    const double e_stale = mean_row_error(stale, exact);
    better += e_pred < e_stale;
    worst_ratio = std::max(worst_ratio, e_pred / e_stale);
    CHECK((st.low - embed_low_rows(sk, st.full, Side::Target)).cwiseAbs().maxCoeff() < 1e-12);
  }
  MESSAGE("largest predicted/stale error ratio " << worst_ratio);
  CHECK(better == 10);
  CHECK(worst_ratio <= 0.25);
}

TEST_CASE("sketch section round trip") {
  Rng rng(11);
  TargetStore st = store_of(random_unit_rows(30, 7, rng));
  NystromSketch sk = fit_nystrom(st, 5, rng);
  std::stringstream ss;
  write_sections(ss, {{"SKCH", serialize_sketch(sk)}});
  auto secs = read_sections(ss);
  NystromSketch back = deserialize_sketch(find_section(secs, "SKCH")->payload);
  CHECK(back.landmark_ids == sk.landmark_ids);
  CHECK(back.landmarks == sk.landmarks);
  CHECK(back.cross_weights == sk.cross_weights);
  CHECK(back.effective_rank == sk.effective_rank);
  CHECK_THROWS(deserialize_sketch(serialize_sketch(sk) + "x"));
}

TEST_CASE("nonlinear drift with fewer landmarks than dimensions still beats staleness") {
  int better = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(300 + seed);
    DualEncoder enc = mlp_encoder(16, 24, 32, rng);
    TargetStore st = TargetStore::encode(random_rows(600, 16, rng), enc);
    NystromSketch sk = fit_nystrom(st, 12, rng);
    const RowMat stale = st.full;
    DualEncoder moved = enc;
    for (Eigen::Index i = enc.offset(Side::Target); i < enc.num_params(); ++i)
      moved.params()[i] += 0.05 * rng.normal();
    Reencoder r = fit_reencoder(sk, st, moved, 64, 1e-4, rng);
    apply_reencoder(r, sk, st, moved, 1);
    const RowMat exact = moved.encode_rows(Side::Target, st.features);
    const double e_pred = mean_row_error(st.full, exact), e_stale = mean_row_error(stale, exact);
    better += e_pred < e_stale;
  }
  CHECK(better == 10);
}
