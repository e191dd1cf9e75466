// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "negtree/core/encoder.hpp"
#include "negtree/harness/synthetic.hpp"

namespace negtree {

nlohmann::json to_json(const DualEncoder& enc);
DualEncoder encoder_from_json(const nlohmann::json& j);
void save_encoder(const std::string& path, const DualEncoder& enc);
DualEncoder load_encoder(const std::string& path);

// Linear dim -> dim towers with unit outputs; shared by every strategy of a seed.
DualEncoder initial_encoder(int dim, std::uint64_t seed);

// Directory layout: task.json, targets.dynb, train_x.dynb, eval_x.dynb, labels.json.
void save_dataset(const std::string& dir, const SyntheticTask& task, const SyntheticData& data);
SyntheticData load_dataset(const std::string& dir);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace negtree
