// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#pragma once

#include <cstdint>

#include "negtree/core/encoder.hpp"
#include "negtree/core/types.hpp"
#include "negtree/trainer/trainer.hpp"

namespace negtree {

struct SyntheticTask {
  std::size_t num_targets = 4096;
  int dim = 32;
  std::size_t num_clusters = 64;
  double spread = 0.2;  // within-cluster scale of target features
  double noise = 0.2;   // query scale around the positive's feature
  std::size_t train_size = 8192;
  std::size_t eval_size = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticData {
  RowMat target_features;
  std::vector<std::size_t> cluster_of;
  Dataset data;
};

// Unit cluster centres; target feature = normalize(centre + spread g / sqrt(d));
// query = positive feature + noise g / sqrt(d). Train and eval queries are
// drawn independently, so the splits share no query.
SyntheticData gen_synthetic(const SyntheticTask& task);

nlohmann::json to_json(const SyntheticTask& t);
SyntheticTask task_from_json(const nlohmann::json& j);

}  // namespace negtree
