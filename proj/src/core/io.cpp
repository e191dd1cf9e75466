// Copyright 2026 The negtree Authors
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// at http://www.apache.org/licenses/LICENSE-2.0
#include "negtree/core/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>

namespace negtree {

static_assert(std::endian::native == std::endian::little, "byte helpers assume a little-endian host");

namespace {

template <typename T>
void put(std::string& buf, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  buf.append(b, sizeof(T));
}

std::string read_all(std::istream& is) {
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

constexpr char kDynbMagic[4] = {'D', 'Y', 'N', 'B'};
constexpr char kSectionMagic[4] = {'D', 'Y', 'N', 'S'};
constexpr std::uint32_t kSectionVersion = 1;

}  // namespace

void ByteWriter::u32(std::uint32_t v) { put(buf_, v); }
void ByteWriter::u64(std::uint64_t v) { put(buf_, v); }
void ByteWriter::f32(float v) { put(buf_, v); }
void ByteWriter::f64(double v) { put(buf_, v); }

std::string ByteReader::bytes(std::size_t n) {
  if (buf_.size() - pos_ < n) throw IoError("unexpected end of data");
  std::string s = buf_.substr(pos_, n);
  pos_ += n;
  return s;
}

std::uint32_t ByteReader::u32() {
  std::uint32_t v;
  std::memcpy(&v, bytes(4).data(), 4);
  return v;
}
std::uint64_t ByteReader::u64() {
  std::uint64_t v;
  std::memcpy(&v, bytes(8).data(), 8);
  return v;
}
float ByteReader::f32() {
  float v;
  std::memcpy(&v, bytes(4).data(), 4);
  return v;
}
double ByteReader::f64() {
  double v;
  std::memcpy(&v, bytes(8).data(), 8);
  return v;
}

void write_dynb(std::ostream& os, const RowMat& m) {
  ByteWriter w;
  w.bytes(std::string(kDynbMagic, 4));
  w.u32(kDynbVersion);
  w.u64(static_cast<std::uint64_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) w.f32(static_cast<float>(m(i, j)));
  os.write(w.str().data(), static_cast<std::streamsize>(w.str().size()));
  if (!os) throw IoError("failed writing DYNB data");
}

RowMat read_dynb(std::istream& is) {
  const std::string buf = read_all(is);
  ByteReader r(buf);
  if (r.bytes(4) != std::string(kDynbMagic, 4)) throw IoError("not a DYNB file (bad magic)");
  const auto version = r.u32();
  if (version != kDynbVersion) throw IoError("unsupported DYNB version " + std::to_string(version));
  const auto count = r.u64();
  const auto dim = r.u32();
  if (buf.size() - 20 != count * dim * 4) throw IoError("DYNB payload size does not match header");
  RowMat m(count, dim);
  for (std::uint64_t i = 0; i < count; ++i)
    for (std::uint32_t j = 0; j < dim; ++j) m(i, j) = r.f32();
  return m;
}

void write_dynb_file(const std::string& path, const RowMat& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_dynb(os, m);
}

RowMat read_dynb_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return read_dynb(is);
}

void write_sections(std::ostream& os, const std::vector<Section>& sections) {
  ByteWriter w;
  w.bytes(std::string(kSectionMagic, 4));
  w.u32(kSectionVersion);
  w.u32(static_cast<std::uint32_t>(sections.size()));
  for (const auto& s : sections) {
    if (s.tag.size() != 4) throw InvalidInput("section tags are 4 bytes");
    w.bytes(s.tag);
    w.u64(s.payload.size());
    w.bytes(s.payload);
  }
  os.write(w.str().data(), static_cast<std::streamsize>(w.str().size()));
  if (!os) throw IoError("failed writing snapshot");
}

std::vector<Section> read_sections(std::istream& is) {
  const std::string buf = read_all(is);
  ByteReader r(buf);
  if (r.bytes(4) != std::string(kSectionMagic, 4)) throw IoError("not a snapshot container (bad magic)");
  if (r.u32() != kSectionVersion) throw IoError("unsupported snapshot version");
  const auto n = r.u32();
  std::vector<Section> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    Section s;
    s.tag = r.bytes(4);
    s.payload = r.bytes(r.u64());
    out.push_back(std::move(s));
  }
  return out;
}

const Section* find_section(const std::vector<Section>& sections, const std::string& tag) {
  for (const auto& s : sections)
    if (s.tag == tag) return &s;
  return nullptr;
}

}  // namespace negtree
