// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "negtree/core/types.hpp"

namespace negtree {

// Little-endian byte buffer helpers shared by every on-disk format.
class ByteWriter {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v);
  void f64(double v);
  void bytes(const std::string& s) { buf_ += s; }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& buf) : buf_(buf) {}
  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32();
  double f64();
  std::string bytes(std::size_t n);
  bool done() const { return pos_ == buf_.size(); }

 private:
  const std::string& buf_;
  std::size_t pos_ = 0;
};

// DYNB: magic, u32 version, u64 count, u32 dim, then count*dim f32 row-major.
constexpr std::uint32_t kDynbVersion = 1;
void write_dynb(std::ostream& os, const RowMat& m);
RowMat read_dynb(std::istream& is);
void write_dynb_file(const std::string& path, const RowMat& m);
RowMat read_dynb_file(const std::string& path);

// Section-tagged container ("DYNS"): u32 version, u32 section count, then per
// section a 4-byte tag, u64 length and the payload.
struct Section {
  std::string tag;
  std::string payload;
};
void write_sections(std::ostream& os, const std::vector<Section>& sections);
std::vector<Section> read_sections(std::istream& is);
const Section* find_section(const std::vector<Section>& sections, const std::string& tag);

}  // namespace negtree
