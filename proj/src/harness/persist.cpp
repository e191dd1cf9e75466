// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#include "negtree/harness/persist.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "negtree/core/io.hpp"

namespace negtree {

namespace {

nlohmann::json tower_json(const TowerSpec& t) {
  return {{"arch", to_string(t.arch)},
          {"inputDim", t.input_dim},
          {"outputDim", t.output_dim},
          {"hiddenDim", t.hidden_dim},
          {"normalize", t.normalize}};
}

TowerSpec tower_from_json(const nlohmann::json& j) {
  TowerSpec t;
  t.arch = architecture_from_string(j.at("arch").get<std::string>());
  t.input_dim = j.at("inputDim").get<int>();
  t.output_dim = j.at("outputDim").get<int>();
  t.hidden_dim = j.value("hiddenDim", 0);
  t.normalize = j.value("normalize", true);
  return t;
}

}  // namespace

nlohmann::json to_json(const DualEncoder& enc) {
  const Vec& p = enc.params();
  return {{"query", tower_json(enc.spec(Side::Query))},
          {"target", tower_json(enc.spec(Side::Target))},
          {"params", std::vector<double>(p.data(), p.data() + p.size())}};
}

DualEncoder encoder_from_json(const nlohmann::json& j) {
  try {
    DualEncoder enc(tower_from_json(j.at("query")), tower_from_json(j.at("target")));
    const auto p = j.at("params").get<std::vector<double>>();
    if (Eigen::Index(p.size()) != enc.num_params())
      throw InvalidInput("encoder has " + std::to_string(p.size()) + " parameters, expected " +
                         std::to_string(enc.num_params()));
    enc.params() = Eigen::Map<const Vec>(p.data(), Eigen::Index(p.size()));
    return enc;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("bad encoder JSON: ") + e.what());
  }
}

void save_encoder(const std::string& path, const DualEncoder& enc) { write_text_file(path, to_json(enc).dump()); }

DualEncoder load_encoder(const std::string& path) {
  try {
    return encoder_from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInput(path + ": " + e.what());
  }
}

DualEncoder initial_encoder(int dim, std::uint64_t seed) {
  TowerSpec t{Architecture::Linear, dim, dim, 0, true};
  Rng rng = Rng(seed).split(0xe7c);
  return DualEncoder::random(t, t, rng);
}

void save_dataset(const std::string& dir, const SyntheticTask& task, const SyntheticData& data) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path d(dir);
  write_text_file((d / "task.json").string(), to_json(task).dump(2));
  write_dynb_file((d / "targets.dynb").string(), data.target_features);
  write_dynb_file((d / "train_x.dynb").string(), data.data.train_x);
  write_dynb_file((d / "eval_x.dynb").string(), data.data.eval_x);
  nlohmann::json labels{{"train", data.data.train_y}, {"eval", data.data.eval_y}, {"cluster", data.cluster_of}};
  write_text_file((d / "labels.json").string(), labels.dump());
}

SyntheticData load_dataset(const std::string& dir) {
  const std::filesystem::path d(dir);
  SyntheticData out;
  out.target_features = read_dynb_file((d / "targets.dynb").string());
  out.data.train_x = read_dynb_file((d / "train_x.dynb").string());
  out.data.eval_x = read_dynb_file((d / "eval_x.dynb").string());
  try {
    const auto labels = nlohmann::json::parse(read_text_file((d / "labels.json").string()));
    out.data.train_y = labels.at("train").get<std::vector<TargetId>>();
    out.data.eval_y = labels.at("eval").get<std::vector<TargetId>>();
    out.cluster_of = labels.value("cluster", std::vector<std::size_t>{});
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(dir + "/labels.json: " + e.what());
  }
  const auto n = TargetId(out.target_features.rows());
  require(Eigen::Index(out.data.train_y.size()) == out.data.train_x.rows(), "train labels and queries differ in count");
  require(Eigen::Index(out.data.eval_y.size()) == out.data.eval_x.rows(), "eval labels and queries differ in count");
  for (TargetId y : out.data.train_y) require(y < n, "train label out of range");
  for (TargetId y : out.data.eval_y) require(y < n, "eval label out of range");
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace negtree
