// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
// Command-line driver: data generation, index building, sampling, training,
// evaluation, the statistical suite and the repair benchmark.
//
// Exit status: 0 success, 1 invariant failure, 2 invalid configuration.
#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <json.hpp>

#include "negtree/core/io.hpp"
#include "negtree/core/softmax.hpp"
#include "negtree/dynamic/repair.hpp"
#include "negtree/harness/checks.hpp"
#include "negtree/harness/experiment.hpp"
#include "negtree/harness/persist.hpp"
#include "negtree/harness/stats.hpp"
#include "negtree/sampling/samplers.hpp"

using namespace negtree;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kInvariantFailure = 1;
constexpr int kInvalidConfig = 2;

struct InvariantFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string default_out_dir() {
  const char* env = std::getenv("NEGTREE_OUT_DIR");
  return env && *env ? env : "negtree-out";
}

// One --key option per JSON field of `defaults`; values are parsed with the field's type.
class JsonFlags {
 public:
  JsonFlags(CLI::App* app, json defaults) : defaults_(std::move(defaults)) {
    for (const auto& [k, v] : defaults_.items())
      app->add_option("--" + k, values_[k], "default " + (v.is_null() ? std::string("unset") : v.dump()));
  }

  json overrides() const {
    json out = json::object();
    for (const auto& [k, v] : values_) {
      if (v.empty()) continue;
      if (defaults_.at(k).is_string()) {
        out[k] = v;
        continue;
      }
      try {
        out[k] = json::parse(v);
      } catch (const json::parse_error&) {
        throw InvalidInput("--" + k + ": cannot parse '" + v + "'");
      }
    }
    return out;
  }

 private:
  json defaults_;
  std::map<std::string, std::string> values_;
};

json read_json_file(const std::string& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw InvalidInput(path + ": " + e.what());
  }
}

SyntheticTask task_with(const JsonFlags& flags) {
  json j = to_json(SyntheticTask{});
  j.merge_patch(flags.overrides());
  return task_from_json(j);
}

TrainConfig config_with(const std::string& file, const JsonFlags& flags) {
  json j = to_json(TrainConfig{});
  if (!file.empty()) j.merge_patch(read_json_file(file));
  j.merge_patch(flags.overrides());
  return config_from_json(j);
}

SyntheticData data_from(const std::string& dir, const SyntheticTask& task) {
  return dir.empty() ? gen_synthetic(task) : load_dataset(dir);
}

// Target embeddings: the encoder's target tower, or the raw features when no encoder is given.
RowMat target_embeddings(const SyntheticData& d, const std::string& encoder_path) {
  if (encoder_path.empty()) {
    RowMat e = d.target_features;
    e.rowwise().normalize();
    return e;
  }
  return load_encoder(encoder_path).encode_rows(Side::Target, d.target_features);
}

Vec query_embedding(const SyntheticData& d, const std::string& encoder_path, std::size_t i) {
  require(Eigen::Index(i) < d.data.eval_x.rows(), "query index out of range");
  const Vec x = d.data.eval_x.row(Eigen::Index(i)).transpose();
  if (encoder_path.empty()) return x.normalized();
  return load_encoder(encoder_path).encode(Side::Query, x);
}

void print(const json& j) { std::cout << j.dump(2) << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"negtree: tree-structured negative sampling for dual encoders"};
  app.require_subcommand(1);
  std::string out_dir = default_out_dir();
  app.add_option("--out", out_dir, "output directory (env NEGTREE_OUT_DIR)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic retrieval task");
  JsonFlags gen_flags(gen, to_json(SyntheticTask{}));

  // build-index
  auto* bi = app.add_subcommand("build-index", "build and verify a tree forest over target embeddings");
  std::string bi_data, bi_encoder, bi_mode = "sg";
  double bi_base = 1.3;
  std::size_t bi_forest = 1;
  bi->add_option("--data", bi_data, "dataset directory from gen-data")->required();
  bi->add_option("--encoder", bi_encoder, "encoder JSON; default embeds raw features");
  bi->add_option("--treeBase", bi_base, "tree base b > 1");
  bi->add_option("--forestSize", bi_forest, "number of trees");
  bi->add_option("--mode", bi_mode, "sg or cover")->check(CLI::IsMember({"sg", "cover"}));

  // sample
  auto* sa = app.add_subcommand("sample", "draw negatives for one evaluation query");
  std::string sa_data, sa_encoder, sa_sampler = "mh";
  std::size_t sa_query = 0, sa_s = 5, sa_k = 16, sa_frontier = 100;
  double sa_beta = 20.0, sa_gamma = 7.38905609893065, sa_base = 1.3;
  std::uint64_t sa_seed = 0;
  sa->add_option("--data", sa_data, "dataset directory")->required();
  sa->add_option("--encoder", sa_encoder, "encoder JSON");
  sa->add_option("--query", sa_query, "evaluation query index");
  sa->add_option("--sampler", sa_sampler, "mh, rejection or exact")
      ->check(CLI::IsMember({"mh", "rejection", "exact"}));
  sa->add_option("--s", sa_s, "MH chain length");
  sa->add_option("--k", sa_k, "number of draws");
  sa->add_option("--beta", sa_beta, "inverse temperature");
  sa->add_option("--gamma", sa_gamma, "proposal ratio target");
  sa->add_option("--maxFrontier", sa_frontier, "clustering frontier cap");
  sa->add_option("--treeBase", sa_base, "tree base");
  sa->add_option("--seed", sa_seed, "seed");

  // train
  auto* tr = app.add_subcommand("train", "train one configuration, or an experiment spec");
  std::string tr_data, tr_config, tr_experiment;
  tr->add_option("--data", tr_data, "dataset directory; default generates the task from the task flags");
  tr->add_option("--config", tr_config, "TrainConfig JSON, overridden by flags");
  tr->add_option("--experiment", tr_experiment, "experiment spec JSON; runs every configuration in it");
  JsonFlags tr_flags(tr, to_json(TrainConfig{}));
  std::string tr_task_json;
  tr->add_option("--task", tr_task_json, "SyntheticTask JSON file used when --data is absent");

  // eval
  auto* ev = app.add_subcommand("eval", "recall@k and MRR of an encoder on the evaluation split");
  std::string ev_data, ev_encoder;
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--encoder", ev_encoder, "encoder JSON")->required();

  // stat-suite
  auto* ss = app.add_subcommand("stat-suite", "run every invariant and statistical check");
  StatSuiteOptions ss_opts;
  ss->add_option("--maxTargets", ss_opts.max_targets, "largest instance size (64..1024)");
  ss->add_option("--seed", ss_opts.seed, "seed");
  ss->add_flag("--mutate", ss_opts.mutate, "negative control: accept every proposal");

  // repair-bench
  auto* rb = app.add_subcommand("repair-bench", "repair cost against perturbation size");
  std::size_t rb_n = 4096, rb_seeds = 3;
  int rb_dim = 32;
  std::vector<double> rb_fractions{0.01, 0.05, 0.2}, rb_distances{0.0125, 0.025, 0.05, 0.1};
  double rb_bound = 0.1;
  bool rb_uniform = false;
  rb->add_option("--numTargets", rb_n, "targets");
  rb->add_option("--dim", rb_dim, "embedding dimension");
  rb->add_option("--fractions", rb_fractions, "perturbed fractions");
  rb->add_option("--distances", rb_distances, "perturbation distances");
  rb->add_option("--bound", rb_bound, "repair bound");
  rb->add_option("--seeds", rb_seeds, "seeds per cell");
  rb->add_flag("--uniform", rb_uniform, "uniform directions instead of clustered synthetic targets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kInvalidConfig;
  }

  try {
    fs::create_directories(out_dir);
    const fs::path out(out_dir);

    if (*gen) {
      const SyntheticTask task = task_with(gen_flags);
      const SyntheticData d = gen_synthetic(task);
      save_dataset(out_dir, task, d);
      print({{"task", to_json(task)}, {"dir", out_dir}});
    } else if (*bi) {
      const SyntheticData d = load_dataset(bi_data);
      BuildOptions o;
      o.base = bi_base;
      o.forest_size = bi_forest;
      o.mode = bi_mode == "cover" ? TreeMode::Cover : TreeMode::SG;
      const RowMat emb = target_embeddings(d, bi_encoder);
      const auto t0 = std::chrono::steady_clock::now();
      SGForest f = build_forest(TreeMetric::euclidean(emb), o);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      write_dynb_file((out / "embeddings.dynb").string(), emb);
      {
        std::ofstream os(out / "index.bin", std::ios::binary);
        if (!os) throw IoError("cannot write index.bin");
        save_forest(os, f);
      }
      const auto v = verify_invariants(f);
      print({{"targets", f.num_targets()},
             {"trees", f.num_trees()},
             {"minLevel", f.min_level()},
             {"maxLevel", f.max_level()},
             {"violations", v.size()},
             {"seconds", secs}});
      if (!v.empty()) throw InvariantFailure(describe(v.front()));
    } else if (*sa) {
      const SyntheticData d = load_dataset(sa_data);
      const RowMat emb = target_embeddings(d, sa_encoder);
      const Vec q = query_embedding(d, sa_encoder, sa_query);
      const SoftmaxParams sp{sa_beta};
      validate(sp);
      require(sa_k >= 1, "--k must be >= 1");
      BuildOptions o;
      o.base = sa_base;
      SGForest f = build_forest(TreeMetric::euclidean(emb), o);
      Rng rng(sa_seed);
      std::vector<TargetId> draws;
      json info = json::object();
      if (sa_sampler == "mh") {
        FindOptions fo;
        fo.gamma = sa_gamma;
        fo.max_frontier = sa_frontier;
        FindResult fr = find_clustering(f, q, sp, fo);
        ClusterProposal prop = proposal_from_clustering(f, q, fr.clusters, sp, fr.truncated);
        MhResult mh = mh_sample(prop, sa_s, sa_k, rng);
        draws = mh.finals;
        info = {{"clusters", fr.clusters.size()}, {"startLevel", fr.start_level}, {"acceptanceRate", mh.acceptance_rate()}};
      } else if (sa_sampler == "rejection") {
        RejectionSampler rs(f, q, (f.min_level() + f.max_level()) / 2, sp);
        for (std::size_t i = 0; i < sa_k; ++i) draws.push_back(rs.sample(rng));
        info = {{"rounds", rs.stats().rounds}};
      } else {
        const Vec p = exact_softmax(q, emb, sp);
        std::vector<double> lw(static_cast<std::size_t>(p.size()));
        for (Eigen::Index i = 0; i < p.size(); ++i) lw[std::size_t(i)] = std::log(p[i]);
        AliasTable t(lw);
        for (std::size_t i = 0; i < sa_k; ++i) draws.push_back(t.sample(rng));
      }
      std::ofstream os(out / "samples.csv");
      os << "draw,target,logit\n";
      for (std::size_t i = 0; i < draws.size(); ++i)
        os << i << ',' << draws[i] << ',' << logit(q, emb.row(Eigen::Index(draws[i])).transpose(), sp) << '\n';
      info["sampler"] = sa_sampler;
      info["draws"] = draws;
      print(info);
    } else if (*tr) {
      if (!tr_experiment.empty()) {
        ExperimentSpec spec = experiment_from_json(read_json_file(tr_experiment));
        if (spec.output_dir.empty()) spec.output_dir = out_dir;
        const ExperimentResult res =
            tr_data.empty() ? run_experiment(spec) : run_experiment(spec, load_dataset(tr_data));
        json summary = json::array();
        std::size_t failed = 0;
        for (const auto& r : res.runs) {
          failed += !r.report;
          summary.push_back({{"run", r.name},
                             {"status", r.report ? "ok" : "failed"},
                             {"recall@1", r.report ? r.report->final_checkpoint().metrics.at("recall@1") : 0.0},
                             {"error", r.error}});
        }
        print({{"outputDir", spec.output_dir}, {"runs", summary}});
        for (const auto& c : res.checks)
          if (!c.passed) throw InvariantFailure(c.name + ": " + c.detail);
        if (failed) throw InvariantFailure(std::to_string(failed) + " sub-run(s) failed");
      } else {
        const TrainConfig cfg = config_with(tr_config, tr_flags);
        SyntheticTask task;
        if (!tr_task_json.empty()) task = task_from_json(read_json_file(tr_task_json));
        const SyntheticData d = data_from(tr_data, task);
        DualEncoder enc = initial_encoder(int(d.target_features.cols()), cfg.seed);
        TargetStore store;
        store.features = d.target_features;
        const RunReport rep = train(cfg, d.data, enc, store);
        write_text_file((out / "report.jsonl").string(), rep.to_jsonl());
        save_encoder((out / "encoder.json").string(), enc);
        print({{"strategy", to_string(cfg.strategy)},
               {"steps", cfg.num_steps},
               {"metrics", rep.final_checkpoint().metrics},
               {"targetEncoderCalls", rep.target_encoder_calls},
               {"wallTime", rep.wall_time}});
      }
    } else if (*ev) {
      const SyntheticData d = load_dataset(ev_data);
      const DualEncoder enc = load_encoder(ev_encoder);
      const MetricMap m = evaluate(enc, d.target_features, d.data.eval_x, d.data.eval_y);
      write_text_file((out / "eval.json").string(), json(m).dump(2));
      print(m);
    } else if (*ss) {
      const SuiteReport rep = stat_suite(ss_opts);
      write_text_file((out / "suite.json").string(), rep.to_json().dump(2));
      {
        std::ofstream os(out / "tv.csv");
        write_tv_csv(os, rep.tv);
      }
      {
        std::ofstream os(out / "bias.csv");
        write_bias_csv(os, rep.bias);
      }
      {
        std::ofstream os(out / "checks.csv");
        write_checks_csv(os, rep.checks);
      }
      for (const auto& c : rep.checks)
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
      if (!rep.passed()) throw InvariantFailure("stat suite failed");
    } else if (*rb) {
      require(rb_n >= 2 && rb_dim >= 1 && rb_seeds >= 1, "repair-bench needs numTargets >= 2, dim >= 1, seeds >= 1");
      std::ofstream os(out / "repair_bench.csv");
      os.precision(10);
      os << "num_targets,dim,fraction,distance,bound,seed,nodes_visited,subtrees_rebuilt,leaves_reinserted,"
            "reinserted_fraction,repair_seconds,rebuild_seconds\n";
      std::size_t broken = 0;
      for (double frac : rb_fractions)
        for (double dist : rb_distances)
          for (std::size_t s = 0; s < rb_seeds; ++s) {
            Rng rng = Rng(s).split(0xbe);
            RowMat pts;
            if (rb_uniform) {
              pts.resize(Eigen::Index(rb_n), rb_dim);
              for (Eigen::Index i = 0; i < pts.rows(); ++i)
                for (Eigen::Index j = 0; j < pts.cols(); ++j) pts(i, j) = rng.normal();
              pts.rowwise().normalize();
            } else {
              SyntheticTask t;
              t.num_targets = rb_n;
              t.dim = rb_dim;
              t.num_clusters = std::min<std::size_t>(64, rb_n);
              t.train_size = t.eval_size = 1;
              t.seed = s;
              pts = gen_synthetic(t).target_features;
            }
            SGForest f = build_forest(TreeMetric::euclidean(pts), {});
            perturb_on_sphere(pts, frac, dist, rng);
            RepairOptions ro;
            ro.bound = rb_bound;
            const RebuildStats st = update_sg_tree(f, TreeMetric::euclidean(pts), ro);
            broken += !verify_invariants(f).empty();
            const auto t0 = std::chrono::steady_clock::now();
            build_forest(TreeMetric::euclidean(pts), {});
            const double rebuild = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            os << rb_n << ',' << rb_dim << ',' << frac << ',' << dist << ',' << rb_bound << ',' << s << ','
               << st.nodes_visited << ',' << st.subtrees_rebuilt << ',' << st.leaves_reinserted << ','
               << double(st.leaves_reinserted) / double(rb_n) << ',' << st.wall_time << ',' << rebuild << '\n';
          }
      std::cout << "wrote " << (out / "repair_bench.csv").string() << '\n';
      if (broken) throw InvariantFailure(std::to_string(broken) + " repaired forests violate invariants");
    }
  } catch (const InvalidInput& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return kInvalidConfig;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kInvalidConfig;
  } catch (const InvariantFailure& e) {
    std::cerr << "invariant failure: " << e.what() << '\n';
    return kInvariantFailure;
  } catch (const InternalInvariantError& e) {
    std::cerr << "invariant failure: " << e.what() << '\n';
    return kInvariantFailure;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kInvariantFailure;
  }
  return 0;
}
