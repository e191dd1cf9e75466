// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#include "negtree/trainer/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "negtree/core/lipschitz.hpp"
#include "negtree/core/softmax.hpp"
#include "negtree/sampling/proposal.hpp"
#include "negtree/sampling/samplers.hpp"
#include "negtree/sgtree/tree.hpp"
#include "negtree/sketch/nystrom.hpp"
#include "negtree/trainer/bias.hpp"

namespace negtree {

using nlohmann::json;

namespace {

const std::pair<Strategy, const char*> kStrategyNames[] = {{Strategy::InBatch, "in-batch"},
                                                           {Strategy::Uniform, "uniform"},
                                                           {Strategy::Snm, "stochastic-negative-mining"},
                                                           {Strategy::Exhaustive, "exhaustive"},
                                                           {Strategy::Dynnibal, "dynnibal"}};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void sorted_unique(std::vector<TargetId>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

std::string to_string(Strategy s) {
  for (auto [k, name] : kStrategyNames)
    if (k == s) return name;
  return "unknown";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "snm") return Strategy::Snm;
  for (auto [k, name] : kStrategyNames)
    if (s == name) return k;
  throw InvalidInput("unknown strategy '" + s + "'");
}

void TrainConfig::validate() const {
  require(eta >= 0.0 && std::isfinite(eta), "eta must be finite and >= 0");
  require(k >= 1, "k must be >= 1");
  require(w >= 1, "w must be >= 1");
  require(gamma > 1.0, "gamma must be > 1");
  require(batch_size >= 1, "batchSize must be >= 1");
  require(s >= 1, "s must be >= 1");
  require(max_frontier >= 1, "maxFrontier must be >= 1");
  require(pool_size >= 1, "poolSize must be >= 1");
  require(beta >= 0.0 && std::isfinite(beta), "beta must be finite and >= 0");
  require(warmup_fraction >= 0.0 && warmup_fraction <= 1.0, "warmupFraction must lie in [0, 1]");
  require(dim_low >= 1, "dimLow must be >= 1");
  require(reencode_train >= 1, "reencodeTrain must be >= 1");
  require(ridge > 0.0, "ridge must be > 0");
  require(tree_base > 1.0, "treeBase must be > 1");
  require(forest_size >= 1, "forestSize must be >= 1");
  require(!repair_bound || *repair_bound >= 0.0, "repairBound must be >= 0");
}

std::size_t TrainConfig::warmup_steps() const {
  if (strategy != Strategy::Dynnibal) return 0;
  return static_cast<std::size_t>(std::llround(warmup_fraction * double(num_steps)));
}

std::size_t TrainConfig::eval_period() const {
  return eval_every > 0 ? eval_every : std::max<std::size_t>(1, num_steps / 20);
}

TrainConfig config_from_json(const json& j) {
  require(j.is_object(), "config must be a JSON object");
  TrainConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "strategy") c.strategy = strategy_from_string(v.get<std::string>());
    else if (key == "k") c.k = v.get<std::size_t>();
    else if (key == "uniformK") c.uniform_k = v.get<std::size_t>();
    else if (key == "batchSize") c.batch_size = v.get<std::size_t>();
    else if (key == "eta") c.eta = v.get<double>();
    else if (key == "numSteps") c.num_steps = v.get<std::size_t>();
    else if (key == "w") c.w = v.get<std::size_t>();
    else if (key == "gamma") c.gamma = v.get<double>();
    else if (key == "m") c.m = v.is_null() ? std::nullopt : std::optional<int>(v.get<int>());
    else if (key == "s") c.s = v.get<std::size_t>();
    else if (key == "maxFrontier") c.max_frontier = v.get<std::size_t>();
    else if (key == "poolSize") c.pool_size = v.get<std::size_t>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "beta") c.beta = v.get<double>();
    else if (key == "warmupFraction") c.warmup_fraction = v.get<double>();
    else if (key == "sharedNegatives") c.shared_negatives = v.get<bool>();
    else if (key == "optimizer") {
      const auto o = v.get<std::string>();
      require(o == "sgd" || o == "adam", "optimizer must be sgd or adam");
      c.optimizer = o == "sgd" ? Optimizer::Sgd : Optimizer::Adam;
    } else if (key == "reencode") {
      const auto r = v.get<std::string>();
      require(r == "exact" || r == "approximate", "reencode must be exact or approximate");
      c.reencode = r == "exact" ? ReencodeMode::Exact : ReencodeMode::Approximate;
    } else if (key == "dimLow") c.dim_low = v.get<std::size_t>();
    else if (key == "reencodeTrain") c.reencode_train = v.get<std::size_t>();
    else if (key == "ridge") c.ridge = v.get<double>();
    else if (key == "treeBase") c.tree_base = v.get<double>();
    else if (key == "forestSize") c.forest_size = v.get<std::size_t>();
    else if (key == "repairBound") c.repair_bound = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
    else if (key == "levelCut") c.level_cut = v.is_null() ? std::nullopt : std::optional<int>(v.get<int>());
    else if (key == "evalEvery") c.eval_every = v.get<std::size_t>();
    else if (key == "evalQueries") c.eval_queries = v.get<std::size_t>();
    else throw InvalidInput("unknown config key '" + key + "'");
  }
  c.validate();
  return c;
}

json to_json(const TrainConfig& c) {
  json j = {{"strategy", to_string(c.strategy)},
            {"k", c.k},
            {"uniformK", c.uniform_k},
            {"batchSize", c.batch_size},
            {"eta", c.eta},
            {"numSteps", c.num_steps},
            {"w", c.w},
            {"gamma", c.gamma},
            {"m", c.m ? json(*c.m) : json(nullptr)},
            {"s", c.s},
            {"maxFrontier", c.max_frontier},
            {"poolSize", c.pool_size},
            {"seed", c.seed},
            {"beta", c.beta},
            {"warmupFraction", c.warmup_fraction},
            {"sharedNegatives", c.shared_negatives},
            {"optimizer", c.optimizer == Optimizer::Sgd ? "sgd" : "adam"},
            {"reencode", c.reencode == ReencodeMode::Exact ? "exact" : "approximate"},
            {"dimLow", c.dim_low},
            {"reencodeTrain", c.reencode_train},
            {"ridge", c.ridge},
            {"treeBase", c.tree_base},
            {"forestSize", c.forest_size},
            {"repairBound", c.repair_bound ? json(*c.repair_bound) : json(nullptr)},
            {"levelCut", c.level_cut ? json(*c.level_cut) : json(nullptr)},
            {"evalEvery", c.eval_every},
            {"evalQueries", c.eval_queries}};
  return j;
}

std::vector<std::vector<TargetId>> negatives_in_batch(std::span<const TargetId> positives) {
  std::vector<std::vector<TargetId>> out(positives.size());
  for (std::size_t i = 0; i < positives.size(); ++i) {
    for (TargetId y : positives)
      if (y != positives[i]) out[i].push_back(y);
    sorted_unique(out[i]);
  }
  return out;
}

std::vector<TargetId> negatives_uniform(std::size_t n, std::size_t k, std::span<const TargetId> exclude, Rng& rng) {
  std::vector<TargetId> ex(exclude.begin(), exclude.end());
  sorted_unique(ex);
  std::vector<TargetId> allowed;
  allowed.reserve(n);
  std::size_t e = 0;
  for (TargetId y = 0; y < n; ++y) {
    while (e < ex.size() && ex[e] < y) ++e;
    if (e < ex.size() && ex[e] == y) continue;
    allowed.push_back(y);
  }
  const std::size_t take = std::min(k, allowed.size());
  for (std::size_t i = 0; i < take; ++i) std::swap(allowed[i], allowed[i + rng.below(allowed.size() - i)]);
  allowed.resize(take);
  return allowed;
}

std::vector<TargetId> negatives_snm(std::span<const TargetId> pool, const RowMat& pool_embeddings,
                                    VecRef query_embedding, std::size_t k, TargetId exclude) {
  require(static_cast<Eigen::Index>(pool.size()) == pool_embeddings.rows(), "one embedding per pool member");
  const Vec scores = pool_embeddings * query_embedding;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (pool[i] != exclude) idx.push_back(i);
  const std::size_t take = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double sa = scores[static_cast<Eigen::Index>(a)], sb = scores[static_cast<Eigen::Index>(b)];
                      return sa != sb ? sa > sb : pool[a] < pool[b];
                    });
  std::vector<TargetId> out;
  for (std::size_t i = 0; i < take; ++i) out.push_back(pool[idx[i]]);
  return out;
}

std::vector<std::size_t> label_ranks(const RowMat& queries, const RowMat& targets, std::span<const TargetId> labels) {
  require(static_cast<Eigen::Index>(labels.size()) == queries.rows(), "one label per query");
  const Mat scores = targets * queries.transpose();
  std::vector<std::size_t> ranks(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    const auto y = static_cast<Eigen::Index>(labels[i]);
    require(y < targets.rows(), "label out of range");
    const double sy = scores(y, col);
    std::size_t r = 1;
    for (Eigen::Index t = 0; t < targets.rows(); ++t) {
      const double st = scores(t, col);
      if (st > sy || (st == sy && t < y)) ++r;
    }
    ranks[i] = r;
  }
  return ranks;
}

MetricMap ranking_metrics(std::span<const std::size_t> ranks) {
  MetricMap m;
  const double n = std::max<double>(1.0, double(ranks.size()));
  for (std::size_t k : {1, 5, 10, 20, 100}) {
    double hit = 0.0;
    for (std::size_t r : ranks) hit += r <= k;
    m["recall@" + std::to_string(k)] = hit / n;
  }
  for (std::size_t k : {1, 10, 100}) {
    double rr = 0.0;
    for (std::size_t r : ranks) rr += r <= k ? 1.0 / double(r) : 0.0;
    m["mrr@" + std::to_string(k)] = rr / n;
  }
  return m;
}

MetricMap evaluate(const DualEncoder& enc, const RowMat& target_features, const RowMat& eval_x,
                   std::span<const TargetId> eval_y) {
  const RowMat targets = enc.encode_rows(Side::Target, target_features);
  const RowMat queries = enc.encode_rows(Side::Query, eval_x);
  return ranking_metrics(label_ranks(queries, targets, eval_y));
}

std::string RunReport::to_jsonl(bool timing) const {
  std::ostringstream os;
  os << json{{"type", "config"}, {"config", to_json(config)}}.dump() << '\n';
  for (std::size_t t = 0; t < step_loss.size(); ++t) {
    json j = {{"type", "step"}, {"step", t + 1}, {"loss", step_loss[t]}};
    if (timing) j["seconds"] = step_seconds[t];
    os << j.dump() << '\n';
  }
  for (const auto& e : epochs) {
    json st = {{"nodesVisited", e.stats.nodes_visited},
               {"subtreesRebuilt", e.stats.subtrees_rebuilt},
               {"leavesReinserted", e.stats.leaves_reinserted}};
    if (timing) st["wallTime"] = e.stats.wall_time;
    os << json{{"type", "epoch"}, {"step", e.step}, {"bound", e.bound}, {"rebuildStats", st}}.dump() << '\n';
  }
  for (const auto& s : sampler)
    os << json{{"type", "sampler"},
               {"step", s.step},
               {"acceptanceRate", s.acceptance_rate},
               {"proposalTv", s.proposal_tv},
               {"measuredGamma", s.measured_gamma},
               {"gradientBias", s.gradient_bias}}
              .dump()
       << '\n';
  for (const auto& c : checkpoints)
    os << json{{"type", "checkpoint"}, {"step", c.step}, {"trainLoss", c.train_loss}, {"metrics", c.metrics}}.dump()
       << '\n';
  json summary = {{"type", "summary"},
                  {"strategy", to_string(config.strategy)},
                  {"finalStep", checkpoints.empty() ? 0 : checkpoints.back().step},
                  {"metrics", checkpoints.empty() ? json::object() : json(checkpoints.back().metrics)},
                  {"targetEncoderCalls", target_encoder_calls}};
  if (timing) summary["wallTime"] = wall_time;
  os << summary.dump() << '\n';
  return os.str();
}

namespace {

class Trainer {
 public:
  Trainer(const TrainConfig& c, const Dataset& d, DualEncoder& enc, TargetStore& store)
      : c_(c), d_(d), enc_(enc), store_(store), master_(c.seed), batch_rng_(master_.split(1)) {
    p_.beta = c.beta;
    n_ = static_cast<std::size_t>(store.size());
  }

  RunReport run() {
    const auto t_start = std::chrono::steady_clock::now();
    report_.config = c_;
    enc_.reset_call_counters();
    store_.reencode(enc_, 0);
    if (c_.strategy == Strategy::Dynnibal) init_index();
    if (c_.strategy == Strategy::Snm) refresh_pool(0);
    checkpoint(0);
    double loss_acc = 0.0;
    std::size_t loss_n = 0;
    for (std::size_t t = 0; t < c_.num_steps; ++t) {
      const auto t0 = std::chrono::steady_clock::now();
      const double loss = step(t);
      loss_acc += loss;
      ++loss_n;
      const std::size_t done = t + 1;
      if (done % c_.w == 0) {
        if (c_.strategy == Strategy::Dynnibal) refresh_index(done);
        if (c_.strategy == Strategy::Snm) refresh_pool(done);
      }
      report_.step_seconds.push_back(seconds_since(t0));
      if (done % c_.eval_period() == 0 || done == c_.num_steps) {
        checkpoint(done, loss_acc / double(loss_n));
        loss_acc = 0.0;
        loss_n = 0;
      }
    }
    report_.target_encoder_calls = enc_.target_calls() - enc_eval_calls_;
    report_.wall_time = seconds_since(t_start);
    return std::move(report_);
  }

 private:
  double step(std::size_t t) {
    const std::size_t bsz = c_.batch_size;
    RowMat xb(static_cast<Eigen::Index>(bsz), d_.train_x.cols());
    std::vector<TargetId> pos(bsz);
    for (std::size_t i = 0; i < bsz; ++i) {
      const auto e = static_cast<Eigen::Index>(batch_rng_.below(d_.train_y.size()));
      xb.row(static_cast<Eigen::Index>(i)) = d_.train_x.row(e);
      pos[i] = d_.train_y[static_cast<std::size_t>(e)];
    }
    Rng rng = master_.split(2).split(t);
    auto negs = negatives_in_batch(pos);
    auto extra = strategy_negatives(t, xb, pos, rng);
    if (c_.shared_negatives) {
      std::vector<TargetId> all;
      for (const auto& e : extra) all.insert(all.end(), e.begin(), e.end());
      sorted_unique(all);
      for (auto& e : extra) e = all;
    }
    std::vector<std::vector<TargetId>> cand(bsz);
    for (std::size_t i = 0; i < bsz; ++i) {
      std::vector<TargetId> n = negs[i];
      n.insert(n.end(), extra[i].begin(), extra[i].end());
      sorted_unique(n);
      cand[i].push_back(pos[i]);
      for (TargetId y : n)
        if (y != pos[i]) cand[i].push_back(y);
    }
    LossGrad lg;
    try {
      lg = batch_loss_and_grad(enc_, xb, cand, store_, p_);
    } catch (const NumericError& e) {
      throw NumericError("training diverged at step " + std::to_string(t + 1) + ": " + e.what());
    }
    update(lg.grad, t);
    report_.step_loss.push_back(lg.loss);
    return lg.loss;
  }

  std::vector<std::vector<TargetId>> strategy_negatives(std::size_t t, const RowMat& xb,
                                                        const std::vector<TargetId>& pos, Rng& rng) {
    const std::size_t bsz = pos.size();
    std::vector<std::vector<TargetId>> extra(bsz);
    Strategy s = c_.strategy;
    if (s == Strategy::Dynnibal && t < c_.warmup_steps()) s = Strategy::Uniform;
    auto add_uniform = [&](std::size_t k) {
      if (k == 0) return;
      if (c_.shared_negatives) {
        extra[0] = negatives_uniform(n_, k, pos, rng);
        return;
      }
      for (std::size_t i = 0; i < bsz; ++i) {
        auto u = negatives_uniform(n_, k, std::span<const TargetId>(&pos[i], 1), rng);
        extra[i].insert(extra[i].end(), u.begin(), u.end());
      }
    };
    switch (s) {
      case Strategy::InBatch:
        break;
      case Strategy::Uniform:
        add_uniform(c_.k);
        break;
      case Strategy::Snm: {
        for (std::size_t i = 0; i < bsz; ++i) {
          const Vec q = enc_.encode(Side::Query, xb.row(static_cast<Eigen::Index>(i)).transpose());
          extra[i] = negatives_snm(pool_, pool_emb_, q, c_.k, pos[i]);
        }
        std::vector<TargetId> u_shared;
        if (c_.shared_negatives && c_.uniform_k > 0) u_shared = negatives_uniform(n_, c_.uniform_k, pos, rng);
        extra[0].insert(extra[0].end(), u_shared.begin(), u_shared.end());
        if (!c_.shared_negatives) add_uniform(c_.uniform_k);
        break;
      }
      case Strategy::Exhaustive: {
        const RowMat full = enc_.encode_rows(Side::Target, store_.features);
        for (std::size_t i = 0; i < bsz; ++i) {
          const Vec q = enc_.encode(Side::Query, xb.row(static_cast<Eigen::Index>(i)).transpose());
          std::vector<TargetId> all(n_);
          std::iota(all.begin(), all.end(), TargetId(0));
          extra[i] = negatives_snm(all, full, q, c_.k, pos[i]);
        }
        break;
      }
      case Strategy::Dynnibal: {
        FindOptions fo;
        fo.gamma = c_.gamma;
        fo.deepest_level = c_.m;
        fo.max_frontier = c_.max_frontier;
        MhOptions mo;
        mo.keep_trace = true;
        for (std::size_t i = 0; i < bsz; ++i) {
          const Vec q = enc_.encode(Side::Query, xb.row(static_cast<Eigen::Index>(i)).transpose());
          FindResult fr = find_clustering(forest_, q, p_, fo);
          ClusterProposal prop = proposal_from_clustering(forest_, q, fr.clusters, p_, fr.truncated);
          MhResult mh = mh_sample(prop, c_.s, c_.k, rng.split(1000 + i), mo);
          mh_proposals_ += mh.proposals;
          mh_accepted_ += mh.accepted;
          extra[i] = topk_hard_negatives(prop, mh.visited, c_.k, pos[i]);
        }
        std::vector<TargetId> u_shared;
        if (c_.shared_negatives && c_.uniform_k > 0) u_shared = negatives_uniform(n_, c_.uniform_k, pos, rng);
        extra[0].insert(extra[0].end(), u_shared.begin(), u_shared.end());
        if (!c_.shared_negatives) add_uniform(c_.uniform_k);
        break;
      }
    }
    return extra;
  }

  void update(const Vec& g, std::size_t t) {
    Vec& th = enc_.params();
    if (c_.optimizer == Optimizer::Sgd) {
      th -= c_.eta * g;
      return;
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    if (adam_m_.size() == 0) {
      adam_m_ = Vec::Zero(th.size());
      adam_v_ = Vec::Zero(th.size());
    }
    adam_m_ = b1 * adam_m_ + (1 - b1) * g;
    adam_v_ = b2 * adam_v_ + (1 - b2) * g.cwiseAbs2();
    const double c1 = 1 - std::pow(b1, double(t + 1)), c2 = 1 - std::pow(b2, double(t + 1));
    th.array() -= c_.eta * (adam_m_.array() / c1) / ((adam_v_.array() / c2).sqrt() + eps);
  }

  void init_index() {
    BuildOptions o;
    o.base = c_.tree_base;
    o.forest_size = c_.forest_size;
    forest_ = build_forest(TreeMetric::euclidean(store_.full), o);
    if (c_.reencode == ReencodeMode::Approximate) {
      Rng r = master_.split(3);
      sketch_ = fit_nystrom(store_, static_cast<Eigen::Index>(std::min(c_.dim_low, n_)), r);
      refresh_low(store_, sketch_);
    }
    if (!c_.repair_bound && !c_.level_cut) {
      Rng r = master_.split(4);
      const Eigen::Index nq = std::min<Eigen::Index>(64, d_.train_x.rows());
      const Eigen::Index nt = std::min<Eigen::Index>(64, store_.features.rows());
      const auto est = estimate_lipschitz_and_grad_bound(enc_, d_.train_x.topRows(nq), store_.features.topRows(nt), r);
      lip_ = est.L_hat;
      grad_bound_ = est.M_hat;
    }
  }

  void refresh_index(std::size_t done) {
    if (c_.reencode == ReencodeMode::Exact) {
      store_.reencode(enc_, done);
    } else {
      Rng r = master_.split(5).split(done);
      Reencoder re = fit_reencoder(sketch_, store_, enc_, static_cast<Eigen::Index>(std::min(c_.reencode_train, n_)),
                                   c_.ridge, r);
      apply_reencoder(re, sketch_, store_, enc_, done);
    }
    RepairOptions ro;
    ro.level_cut = c_.level_cut;
    if (c_.repair_bound) {
      ro.bound = *c_.repair_bound;
    } else if (!c_.level_cut) {
      ro.bound = drift_bound({double(c_.w), c_.eta, c_.beta, lip_, grad_bound_});
    }
    EpochRecord rec;
    rec.step = done;
    rec.bound = ro.bound;
    rec.stats = update_sg_tree(forest_, TreeMetric::euclidean(store_.full), ro);
    report_.epochs.push_back(std::move(rec));
  }

  void refresh_pool(std::size_t done) {
    Rng r = master_.split(6).split(done);
    pool_ = negatives_uniform(n_, c_.pool_size, {}, r);
    std::sort(pool_.begin(), pool_.end());
    RowMat feats(static_cast<Eigen::Index>(pool_.size()), store_.features.cols());
    for (std::size_t i = 0; i < pool_.size(); ++i)
      feats.row(static_cast<Eigen::Index>(i)) = store_.features.row(static_cast<Eigen::Index>(pool_[i]));
    pool_emb_ = enc_.encode_rows(Side::Target, feats);
  }

  void checkpoint(std::size_t step, double loss = 0.0) {
    const std::uint64_t calls = enc_.target_calls();
    Checkpoint cp;
    cp.step = step;
    cp.train_loss = loss;
    const Eigen::Index ne = c_.eval_queries > 0 ? std::min<Eigen::Index>(Eigen::Index(c_.eval_queries), d_.eval_x.rows())
                                                : d_.eval_x.rows();
    cp.metrics = evaluate(enc_, store_.features, d_.eval_x.topRows(ne),
                          std::span<const TargetId>(d_.eval_y).first(static_cast<std::size_t>(ne)));
    report_.checkpoints.push_back(std::move(cp));
    if (c_.strategy == Strategy::Dynnibal) diagnose(step);
    // Evaluation re-encodes are not part of the training cost.
    enc_eval_calls_ += enc_.target_calls() - calls;
    report_.target_encoder_calls = enc_.target_calls() - enc_eval_calls_;
  }

  void diagnose(std::size_t step) {
    SamplerDiagnostics sd;
    sd.step = step;
    sd.acceptance_rate = mh_proposals_ ? double(mh_accepted_) / double(mh_proposals_) : 0.0;
    mh_proposals_ = mh_accepted_ = 0;
    FindOptions fo;
    fo.gamma = c_.gamma;
    fo.deepest_level = c_.m;
    fo.max_frontier = c_.max_frontier;
    const Eigen::Index probes = std::min<Eigen::Index>(4, d_.train_x.rows());
    for (Eigen::Index i = 0; i < probes; ++i) {
      const Vec q = enc_.encode(Side::Query, d_.train_x.row(i).transpose());
      FindResult fr = find_clustering(forest_, q, p_, fo);
      ClusterProposal prop = proposal_from_clustering(forest_, q, fr.clusters, p_, fr.truncated);
      const Vec qd = proposal_distribution(prop);
      const Vec pd = exact_softmax(q, store_.full, p_);
      sd.proposal_tv += 0.5 * (pd - qd).cwiseAbs().sum() / double(probes);
      for (Eigen::Index y = 0; y < pd.size(); ++y)
        if (qd[y] > 0.0) sd.measured_gamma = std::max(sd.measured_gamma, pd[y] / qd[y]);
      const Vec diff = mh_marginal(prop, c_.s) - pd;
      sd.gradient_bias +=
          expected_logit_gradient(enc_, d_.train_x.row(i).transpose(), store_, diff, p_).norm() / double(probes);
    }
    report_.sampler.push_back(sd);
  }

  const TrainConfig& c_;
  const Dataset& d_;
  DualEncoder& enc_;
  TargetStore& store_;
  SoftmaxParams p_;
  std::size_t n_ = 0;
  Rng master_;
  Rng batch_rng_;
  RunReport report_;
  SGForest forest_;
  NystromSketch sketch_;
  double lip_ = 0.0;
  double grad_bound_ = 0.0;
  std::vector<TargetId> pool_;
  RowMat pool_emb_;
  Vec adam_m_, adam_v_;
  std::uint64_t mh_proposals_ = 0, mh_accepted_ = 0;
  std::uint64_t enc_eval_calls_ = 0;
};

}  // namespace

RunReport train(const TrainConfig& config, const Dataset& data, DualEncoder& enc, TargetStore& store) {
  config.validate();
  require(!data.train_y.empty(), "training split is empty");
  require(data.train_x.rows() == static_cast<Eigen::Index>(data.train_y.size()), "one label per training query");
  require(data.eval_x.rows() == static_cast<Eigen::Index>(data.eval_y.size()), "one label per eval query");
  require(store.size() >= 2, "need at least two targets");
  for (TargetId y : data.train_y) require(y < static_cast<TargetId>(store.size()), "training label out of range");
  return Trainer(config, data, enc, store).run();
}

}  // namespace negtree
