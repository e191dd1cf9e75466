// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#include "negtree/core/store.hpp"

namespace negtree {

TargetStore TargetStore::encode(RowMat features, const DualEncoder& enc, std::uint64_t version) {
  require(features.rows() >= 1, "target store needs at least one target");
  TargetStore s;
  s.features = std::move(features);
  s.reencode(enc, version);
  return s;
}

void TargetStore::reencode(const DualEncoder& enc, std::uint64_t version) {
  full = enc.encode_rows(Side::Target, features);
  full_version = version;
  approximate = false;
}

}  // namespace negtree
