// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "negtree/core/io.hpp"
#include "negtree/core/lipschitz.hpp"
#include "negtree/core/softmax.hpp"

using namespace negtree;
using namespace negtree::testing;

namespace {

Vec central_diff(const std::function<double(const DualEncoder&)>& f, const DualEncoder& enc, double h = 1e-5) {
  Vec g(enc.num_params());
  DualEncoder e = enc;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double orig = e.params()[i];
    e.params()[i] = orig + h;
    const double up = f(e);
    e.params()[i] = orig - h;
    const double down = f(e);
    e.params()[i] = orig;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

double rel_err(const Vec& a, const Vec& b) { return (a - b).norm() / std::max(1e-8, b.norm()); }

}  // namespace

TEST_CASE("logit of identical and orthogonal unit vectors") {
  Vec e1 = Vec::Unit(4, 0), e2 = Vec::Unit(4, 1);
  CHECK(logit(e1, e1, {2.0}) == doctest::Approx(2.0));
  CHECK(logit(e1, e2, {5.0}) == doctest::Approx(0.0));
}

TEST_CASE("logit matches an independent dot product") {
  Rng rng(3);
  RowMat uv = random_unit_rows(2, 4, rng);
  double dot = 0;
  for (int i = 0; i < 4; ++i) dot += uv(0, i) * uv(1, i);
  CHECK(logit(uv.row(0).transpose(), uv.row(1).transpose(), {1.0}) == doctest::Approx(dot).epsilon(1e-14));
}

TEST_CASE("logit through an encoder lies in [-beta, beta]") {
  Rng rng(4);
  DualEncoder enc = linear_encoder(6, 4, rng);
  RowMat xs = random_rows(20, 6, rng);
  for (int i = 0; i + 1 < 20; ++i) {
    const double s = logit(enc, xs.row(i).transpose(), xs.row(i + 1).transpose(), {3.0});
    CHECK(std::abs(s) <= 3.0 + 1e-12);
  }
}

TEST_CASE("non-finite parameters raise a numeric error") {
  Rng rng(5);
  DualEncoder enc = linear_encoder(3, 3, rng);
  enc.params()[0] = std::numeric_limits<double>::quiet_NaN();
  Vec x = Vec::Ones(3);
  CHECK_THROWS_AS(logit(enc, x, x, {1.0}), NumericError);
}

TEST_CASE("exact_softmax closed forms") {
  SUBCASE("shared embedding gives uniform") {
    RowMat t = RowMat::Ones(5, 3) / std::sqrt(3.0);
    Vec p = exact_softmax(Vec::Unit(3, 0), t, {20.0});
    for (int i = 0; i < 5; ++i) CHECK(p[i] == doctest::Approx(0.2));
  }
  SUBCASE("beta zero gives uniform") {
    Rng rng(1);
    RowMat t = random_unit_rows(7, 3, rng);
    Vec p = exact_softmax(Vec::Unit(3, 1), t, {0.0});
    for (int i = 0; i < 7; ++i) CHECK(p[i] == doctest::Approx(1.0 / 7));
  }
  SUBCASE("three-way closed form") {
    RowMat t(3, 2);
    t << 1, 0, 0, 1, 0, 1;
    Vec p = exact_softmax(Vec::Unit(2, 0), t, {1.0});
    const double e = std::numbers::e;
    CHECK(p[0] == doctest::Approx(e / (e + 2)));
    CHECK(p[1] == doctest::Approx(1 / (e + 2)));
    CHECK(p[2] == doctest::Approx(1 / (e + 2)));
  }
  SUBCASE("empty store is invalid") {
    CHECK_THROWS_AS(exact_softmax(Vec::Unit(2, 0), RowMat(0, 2), {1.0}), InvalidInput);
  }
  SUBCASE("large beta stays normalized") {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
      RowMat t = random_unit_rows(50, 8, rng);
      Vec q = random_unit_rows(1, 8, rng).row(0).transpose();
      Vec p = exact_softmax(q, t, {500.0});
      CHECK(std::abs(p.sum() - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("exact loss for a single target is zero") {
  Rng rng(6);
  DualEncoder enc = linear_encoder(4, 4, rng);
  TargetStore store = TargetStore::encode(random_rows(1, 4, rng), enc);
  LossGrad lg = exact_loss_and_grad(enc, Vec::Ones(4), 0, store, {5.0});
  CHECK(lg.loss == doctest::Approx(0.0).scale(1.0));
  CHECK(lg.grad.norm() <= 1e-12);
}

TEST_CASE("exact loss equals minus log softmax of the positive") {
  Rng rng(7);
  DualEncoder enc = mlp_encoder(5, 6, 4, rng);
  TargetStore store = TargetStore::encode(random_rows(12, 5, rng), enc);
  Vec x = random_rows(1, 5, rng).row(0).transpose();
  Vec p = exact_softmax(enc, x, store, {3.0});
  for (TargetId y : {0u, 5u, 11u})
    CHECK(exact_loss_and_grad(enc, x, y, store, {3.0}).loss == doctest::Approx(-std::log(p[y])).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(8);
  const SoftmaxParams sp{2.0};
  int instances = 0;
  for (Architecture arch : {Architecture::Linear, Architecture::Mlp}) {
    for (int trial = 0; trial < 20; ++trial) {
      DualEncoder enc = arch == Architecture::Linear ? linear_encoder(4, 4, rng) : mlp_encoder(4, 5, 4, rng);
      TargetStore store = TargetStore::encode(random_rows(8, 4, rng), enc);
      Vec x = random_rows(1, 4, rng).row(0).transpose();
      const TargetId pos = rng.below(8);

      LossGrad exact = exact_loss_and_grad(enc, x, pos, store, sp);
      Vec fd = central_diff(
          [&](const DualEncoder& e) {
            TargetStore s = store;
            return exact_loss_and_grad(e, x, pos, s, sp).loss;
          },
          enc);
      CHECK(rel_err(exact.grad, fd) <= 1e-4);

      std::vector<TargetId> neg;
      for (TargetId y = 0; y < 8; ++y)
        if (y != pos && rng.uniform() < 0.5) neg.push_back(y);
      if (neg.empty()) neg.push_back((pos + 1) % 8);
      LossGrad sampled = sampled_loss_and_grad(enc, x, pos, neg, store, sp);
      Vec fd2 = central_diff([&](const DualEncoder& e) { return sampled_loss_and_grad(e, x, pos, neg, store, sp).loss; },
                             enc);
      CHECK(rel_err(sampled.grad, fd2) <= 1e-4);
      ++instances;
    }
  }
  CHECK(instances >= 40);
}

TEST_CASE("sampled loss with the full negative set equals the exact loss") {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    DualEncoder enc = mlp_encoder(6, 7, 5, rng);
    TargetStore store = TargetStore::encode(random_rows(16, 6, rng), enc);
    Vec x = random_rows(1, 6, rng).row(0).transpose();
    const TargetId pos = rng.below(16);
    std::vector<TargetId> neg;
    for (TargetId y = 16; y-- > 0;)
      if (y != pos) neg.push_back(y);
    LossGrad a = exact_loss_and_grad(enc, x, pos, store, {4.0});
    LossGrad b = sampled_loss_and_grad(enc, x, pos, neg, store, {4.0});
    CHECK(std::abs(a.loss - b.loss) <= 1e-9);
    CHECK((a.grad - b.grad).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("two-term sampled loss is a softplus of the logit gap") {
  DualEncoder enc = identity_encoder(3);
  RowMat feats(2, 3);
  feats << 1, 0, 0, 0.6, 0.8, 0;
  TargetStore store = TargetStore::encode(feats, enc);
  Vec x = Vec::Unit(3, 0);
  const double beta = 30.0;
  std::vector<TargetId> neg{1};
  const double gap = beta * 0.6 - beta * 1.0;
  const double softplus = std::log1p(std::exp(gap));
  CHECK(sampled_loss_and_grad(enc, x, 0, neg, store, {beta}).loss == doctest::Approx(softplus).epsilon(1e-12));
}

TEST_CASE("sampled loss input validation") {
  Rng rng(10);
  DualEncoder enc = linear_encoder(3, 3, rng);
  TargetStore store = TargetStore::encode(random_rows(4, 3, rng), enc);
  Vec x = Vec::Ones(3);
  std::vector<TargetId> none;
  CHECK_THROWS_AS(sampled_loss_and_grad(enc, x, 0, none, store, {1.0}), InvalidInput);
  std::vector<TargetId> dup{2, 0};
  CHECK_THROWS_AS(sampled_loss_and_grad(enc, x, 0, dup, store, {1.0}), InvalidInput);
}

TEST_CASE("batch loss is the mean of per-example losses") {
  Rng rng(11);
  DualEncoder enc = linear_encoder(5, 4, rng);
  TargetStore store = TargetStore::encode(random_rows(10, 5, rng), enc);
  RowMat qs = random_rows(3, 5, rng);
  std::vector<std::vector<TargetId>> c{{0, 1, 2}, {3, 0, 9}, {7, 8}};
  LossGrad all = batch_loss_and_grad(enc, qs, c, store, {3.0});
  double loss = 0;
  Vec grad = Vec::Zero(enc.num_params());
  for (int i = 0; i < 3; ++i) {
    std::vector<TargetId> neg(c[i].begin() + 1, c[i].end());
    LossGrad one = sampled_loss_and_grad(enc, qs.row(i).transpose(), c[i][0], neg, store, {3.0});
    loss += one.loss / 3;
    grad += one.grad / 3;
  }
  CHECK(all.loss == doctest::Approx(loss).epsilon(1e-12));
  CHECK((all.grad - grad).norm() <= 1e-12);
}

TEST_CASE("lipschitz estimate for the identity encoder on unit inputs") {
  Rng rng(12);
  DualEncoder enc = identity_encoder(4, false);
  RowMat xs = random_unit_rows(10, 4, rng);
  LipschitzEstimate est = estimate_lipschitz_and_grad_bound(enc, xs, xs, rng, 5);
  CHECK(est.L_hat == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("zero perturbation is excluded from the probe ratio") {
  Rng rng(13);
  DualEncoder enc = linear_encoder(4, 4, rng);
  CHECK_FALSE(probe_ratio(enc, Side::Query, Vec::Ones(4), Vec::Zero(enc.num_params())).has_value());
  Vec delta = Vec::Zero(enc.num_params());
  delta[0] = 1e-3;
  CHECK(probe_ratio(enc, Side::Query, Vec::Ones(4), delta).has_value());
}

TEST_CASE("lipschitz estimate matches the analytic operator bound of a linear map") {
  // Without normalization, ||dW x|| <= ||dW||_F ||x||, tight at dW = u x^T.
  Rng rng(14);
  DualEncoder enc = linear_encoder(4, 4, rng, false);
  RowMat xs = random_rows(100, 4, rng);
  double analytic = 0;
  for (int i = 0; i < 100; ++i) analytic = std::max(analytic, xs.row(i).norm());
  LipschitzEstimate est = estimate_lipschitz_and_grad_bound(enc, xs, RowMat(0, 4), rng, 1);
  CHECK(est.probes_used == 100);
  CHECK(std::abs(est.L_hat - analytic) <= 0.1 * analytic);
}

TEST_CASE("gradient bound dominates every sampled pair") {
  Rng rng(15);
  DualEncoder enc = mlp_encoder(4, 6, 3, rng);
  RowMat qs = random_rows(6, 4, rng), ts = random_rows(6, 4, rng);
  LipschitzEstimate est = estimate_lipschitz_and_grad_bound(enc, qs, ts, rng);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      CHECK(inner_product_grad(enc, qs.row(i).transpose(), ts.row(j).transpose()).norm() <= est.M_hat + 1e-12);
}

TEST_CASE("rng streams are deterministic and split independently of position") {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) CHECK(a() == b());
  Rng c(42);
  Rng s1 = c.split(7);
  c();
  c();
  Rng s2 = c.split(7);
  CHECK(s1() == s2());
  CHECK(Rng(1)() != Rng(2)());
  Rng u(5);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK((x >= 0.0 && x < 1.0));
    CHECK(u.below(7) < 7u);
  }
}

TEST_CASE("DYNB round trip") {
  Rng rng(16);
  RowMat m = random_rows(5, 3, rng).cast<float>().cast<double>();
  std::stringstream ss;
  write_dynb(ss, m);
  const std::string bytes = ss.str();
  CHECK(bytes.size() == 20 + 5 * 3 * 4);
  CHECK(bytes.substr(0, 4) == "DYNB");
  RowMat back = read_dynb(ss);
  CHECK(back == m);
  std::stringstream bad("XXXX");
  CHECK_THROWS_AS(read_dynb(bad), IoError);
}

TEST_CASE("section container round trip") {
  std::vector<Section> secs{{"TREE", std::string("abc\0def", 7)}, {"SKCH", ""}};
  std::stringstream ss;
  write_sections(ss, secs);
  auto back = read_sections(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].payload == secs[0].payload);
  CHECK(find_section(back, "SKCH") != nullptr);
  CHECK(find_section(back, "NOPE") == nullptr);
}
