// Copyright 2026 The nvfp4lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "nvfp4lab/tensor_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "nvfp4lab/error.hpp"

namespace nvfp4lab::io {

namespace {

static_assert(std::endian::native == std::endian::little, "dump formats assume a little-endian host");

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void bytes(const char* s, std::size_t n) { out_.insert(out_.end(), s, s + n); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const noexcept { return pos_; }
  void expect_end() const {
    if (pos_ != b_.size()) throw ParseError("trailing bytes after payload", pos_);
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (b_.size() - pos_ < n) {
      throw ParseError(std::string("truncated input while reading ") + what, b_.size());
    }
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

void write_header(Writer& w, const char* magic, std::uint8_t tag, const Shape& shape) {
  w.bytes(magic, 4);
  w.put<std::uint8_t>(1);
  w.put<std::uint8_t>(tag);
  w.put<std::uint16_t>(0);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(shape.size()));
  for (std::size_t d : shape) w.put<std::uint64_t>(d);
}

struct Header {
  std::uint8_t tag;
  Shape shape;
  std::size_t elements;
};

Header read_header(Reader& r, const char* magic) {
  const auto m = r.take(4, "magic");
  if (std::memcmp(m.data(), magic, 4) != 0) {
    throw ParseError(std::string("bad magic, expected ") + magic, 0);
  }
  const auto version = r.get<std::uint8_t>("version");
  if (version != 1) throw ParseError("unsupported version " + std::to_string(version), 4);
  Header h;
  h.tag = r.get<std::uint8_t>("tag");
  if (r.get<std::uint16_t>("reserved") != 0) throw ParseError("reserved bytes are not zero", 6);
  const auto rank = r.get<std::uint32_t>("rank");
  if (rank == 0 || rank > 8) throw ParseError("unsupported rank " + std::to_string(rank), 8);
  h.elements = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::size_t at = r.pos();
    const auto d = r.get<std::uint64_t>("dims");
    if (d == 0 || h.elements > std::numeric_limits<std::uint32_t>::max() / d) {
      throw ParseError("invalid dimension " + std::to_string(d), at);
    }
    h.shape.push_back(static_cast<std::size_t>(d));
    h.elements *= static_cast<std::size_t>(d);
  }
  return h;
}

}  // namespace

std::vector<std::uint8_t> encode_nvt1(const Tensor& t) {
  Writer w;
  write_header(w, "NVT1", 0, t.shape());
  for (double v : t.values()) {
    if (std::abs(v) > std::numeric_limits<float>::max()) {
      throw CodecError("encode_nvt1: value does not fit binary32");
    }
    w.put<float>(static_cast<float>(v));
  }
  return w.take();
}

Tensor decode_nvt1(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const Header h = read_header(r, "NVT1");
  if (h.tag != 0) throw ParseError("unsupported dtype tag " + std::to_string(h.tag), 5);
  std::vector<double> data(h.elements);
  for (std::size_t i = 0; i < h.elements; ++i) {
    const std::size_t at = r.pos();
    const float f = r.get<float>("payload");
    if (!std::isfinite(f)) throw ParseError("non-finite payload value", at);
    data[i] = f;
  }
  r.expect_end();
  return Tensor(h.shape, std::move(data));
}

std::vector<std::uint8_t> encode_nvq1(const micro::QuantizedTensor& q) {
  Writer w;
  write_header(w, "NVQ1", static_cast<std::uint8_t>(q.layout().kind), q.shape());
  w.put<double>(q.scales().s_dec);
  for (auto c : q.scales().block_scales) w.put<std::uint8_t>(c.bits);
  for (auto b : q.packed_codes()) w.put<std::uint8_t>(b);
  return w.take();
}

micro::QuantizedTensor decode_nvq1(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const Header h = read_header(r, "NVQ1");
  if (h.tag > 1) throw ParseError("unknown layout tag " + std::to_string(h.tag), 5);
  const micro::BlockLayout layout{static_cast<micro::BlockKind>(h.tag)};
  std::size_t rows = 1;
  for (std::size_t i = 0; i + 1 < h.shape.size(); ++i) rows *= h.shape[i];
  const std::size_t cols = h.shape.back();
  const std::size_t header_end = r.pos();
  try {
    layout.check_divides(rows, cols);
  } catch (const DimensionError& e) {
    throw ParseError(e.what(), header_end);
  }
  const std::size_t s_dec_at = r.pos();
  const double s_dec = r.get<double>("s_dec");
  if (!std::isfinite(s_dec) || !(s_dec > 0.0)) throw ParseError("invalid s_dec", s_dec_at);

  micro::ScaleSet scales;
  scales.s_dec = s_dec;
  scales.s_enc = 1.0 / s_dec;
  const std::size_t blocks = layout.block_count(rows, cols);
  const auto raw = r.take(blocks, "block scales");
  for (std::size_t b = 0; b < blocks; ++b) {
    const codec::Fp8E4M3Code c{raw[b]};
    if (codec::is_nan(c)) throw ParseError("NaN block scale", s_dec_at + 8 + b);
    const double stored = codec::decode_e4m3(c);
    scales.block_scales.push_back(c);
    scales.eff_enc.push_back(stored > 0.0 ? 1.0 / (stored * s_dec) : 0.0);
  }
  const auto packed = r.take((h.elements + 1) / 2, "codes");
  r.expect_end();
  return micro::QuantizedTensor(h.shape, layout,
                                std::vector<std::uint8_t>(packed.begin(), packed.end()),
                                std::move(scales));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Tensor read_nvt1(const std::filesystem::path& path) { return decode_nvt1(read_file(path)); }

void write_nvt1(const std::filesystem::path& path, const Tensor& t) {
  write_file(path, encode_nvt1(t));
}

}  // namespace nvfp4lab::io
