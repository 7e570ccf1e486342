// Copyright 2026 The MDC Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mdc/bitstream.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "mdc/errors.hpp"

namespace mdc::bitstream {
namespace {

constexpr char kMagic[4] = {'M', 'D', 'C', '1'};

void put_be16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<uint8_t>(v >> s));
}

uint16_t get_be16(const uint8_t* p) { return static_cast<uint16_t>(p[0] << 8 | p[1]); }

uint32_t get_be32(const uint8_t* p) {
  return uint32_t{p[0]} << 24 | uint32_t{p[1]} << 16 | uint32_t{p[2]} << 8 | p[3];
}

int ceil_div8(int v) { return (v + 7) / 8; }

class BitWriter {
 public:
  void put(int bit) {
    cur_ = static_cast<uint8_t>(cur_ << 1 | (bit & 1));
    if (++fill_ == 8) {
      bytes_.push_back(cur_);
      cur_ = 0;
      fill_ = 0;
    }
  }
  std::vector<uint8_t> finish() {
    if (fill_ > 0) bytes_.push_back(static_cast<uint8_t>(cur_ << (8 - fill_)));
    fill_ = 0;
    cur_ = 0;
    return std::move(bytes_);
  }

 private:
  std::vector<uint8_t> bytes_;
  uint8_t cur_ = 0;
  int fill_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const uint8_t> bytes) : bytes_(bytes) {}
  // Past the end the stream reads as zeros.
  int get() {
    const size_t byte = pos_ >> 3;
    const int bit = byte < bytes_.size() ? (bytes_[byte] >> (7 - (pos_ & 7))) & 1 : 0;
    ++pos_;
    return bit;
  }

 private:
  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

// 32-bit low/high binary arithmetic coder with deferred carry bits.
constexpr uint64_t kTop = 0xFFFFFFFFull;
constexpr uint64_t kHalf = 0x80000000ull;
constexpr uint64_t kQuarter = 0x40000000ull;

class RangeEncoder {
 public:
  void encode(uint32_t cum_lo, uint32_t cum_hi) {
    const uint64_t range = high_ - low_ + 1;
    high_ = low_ + range * cum_hi / kFreqTotal - 1;
    low_ = low_ + range * cum_lo / kFreqTotal;
    for (;;) {
      if (high_ < kHalf) {
        emit(0);
      } else if (low_ >= kHalf) {
        emit(1);
        low_ -= kHalf;
        high_ -= kHalf;
      } else if (low_ >= kQuarter && high_ < kHalf + kQuarter) {
        ++pending_;
        low_ -= kQuarter;
        high_ -= kQuarter;
      } else {
        break;
      }
      low_ <<= 1;
      high_ = high_ << 1 | 1;
    }
  }
  std::vector<uint8_t> finish() {
    ++pending_;
    emit(low_ < kQuarter ? 0 : 1);
    return out_.finish();
  }

 private:
  void emit(int bit) {
    out_.put(bit);
    for (; pending_ > 0; --pending_) out_.put(!bit);
  }
  BitWriter out_;
  uint64_t low_ = 0, high_ = kTop;
  uint64_t pending_ = 0;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const uint8_t> bytes) : in_(bytes) {
    for (int i = 0; i < 32; ++i) value_ = value_ << 1 | in_.get();
  }
  uint32_t target() const {
    const uint64_t range = high_ - low_ + 1;
    return static_cast<uint32_t>(((value_ - low_ + 1) * kFreqTotal - 1) / range);
  }
  void consume(uint32_t cum_lo, uint32_t cum_hi) {
    const uint64_t range = high_ - low_ + 1;
    high_ = low_ + range * cum_hi / kFreqTotal - 1;
    low_ = low_ + range * cum_lo / kFreqTotal;
    for (;;) {
      if (high_ < kHalf) {
        // no offset
      } else if (low_ >= kHalf) {
        low_ -= kHalf;
        high_ -= kHalf;
        value_ -= kHalf;
      } else if (low_ >= kQuarter && high_ < kHalf + kQuarter) {
        low_ -= kQuarter;
        high_ -= kQuarter;
        value_ -= kQuarter;
      } else {
        break;
      }
      low_ <<= 1;
      high_ = high_ << 1 | 1;
      value_ = value_ << 1 | in_.get();
    }
  }

 private:
  BitReader in_;
  uint64_t low_ = 0, high_ = kTop, value_ = 0;
};

void check_model(const DescriptionHeader& h, const SymbolModel& model) {
  if (model.levels() != h.l) {
    throw ModelMismatch("entropy model has " + std::to_string(model.levels()) +
                        " levels, description has " + std::to_string(h.l));
  }
  if (model.positions() != static_cast<size_t>(h.m) * h.n * h.k) {
    throw ModelMismatch("entropy model covers a different tensor size");
  }
}

}  // namespace

void DescriptionHeader::validate() const {
  if (version != kVersion) throw CorruptData("unsupported description version");
  if (desc_id > 1) throw CorruptData("description id must be 0 or 1");
  if (orig_h == 0 || orig_w == 0) throw CorruptData("zero image dimension in header");
  if (m != ceil_div8(orig_h) || n != ceil_div8(orig_w)) {
    throw CorruptData("feature dims inconsistent with image dims");
  }
  if (k == 0) throw CorruptData("zero channel count in header");
  if (l < 2) throw CorruptData("center count must be at least 2");
  if (mode != CodingMode::kRaw && mode != CodingMode::kArithmetic) {
    throw CorruptData("unknown coding mode");
  }
}

size_t DescriptionHeader::byte_size() const {
  return kBaseHeaderBytes + (mode == CodingMode::kArithmetic ? kModelCrcBytes : 0);
}

DescriptionHeader DescriptionHeader::for_image(int desc_id, int orig_h, int orig_w, int k, int l,
                                               CodingMode mode, uint32_t model_crc) {
  auto u16 = [](int v, const char* what) {
    if (v < 0 || v > 0xFFFF) throw std::invalid_argument(std::string(what) + " exceeds 16 bits");
    return static_cast<uint16_t>(v);
  };
  DescriptionHeader h;
  h.desc_id = static_cast<uint8_t>(desc_id);
  h.orig_h = u16(orig_h, "image height");
  h.orig_w = u16(orig_w, "image width");
  h.m = u16(ceil_div8(orig_h), "m");
  h.n = u16(ceil_div8(orig_w), "n");
  h.k = u16(k, "k");
  h.l = u16(l, "l");
  h.mode = mode;
  h.model_crc = mode == CodingMode::kArithmetic ? model_crc : 0;
  h.validate();
  return h;
}

int bits_per_symbol(int levels) {
  if (levels < 2) throw std::invalid_argument("levels must be >= 2");
  int b = 0;
  while ((1 << b) < levels) ++b;
  return b;
}

size_t raw_payload_bytes(int m, int n, int k, int levels) {
  const size_t bits = static_cast<size_t>(m) * n * k * bits_per_symbol(levels);
  return (bits + 7) / 8;
}

std::vector<uint8_t> to_bytes(const EncodedDescription& d) {
  const DescriptionHeader& h = d.header;
  h.validate();
  std::vector<uint8_t> out(kMagic, kMagic + 4);
  out.push_back(h.version);
  out.push_back(h.desc_id);
  for (uint16_t v : {h.orig_h, h.orig_w, h.m, h.n, h.k, h.l}) put_be16(out, v);
  out.push_back(static_cast<uint8_t>(h.mode));
  if (h.mode == CodingMode::kArithmetic) put_be32(out, h.model_crc);
  out.insert(out.end(), d.payload.begin(), d.payload.end());
  return out;
}

EncodedDescription from_bytes(std::span<const uint8_t> bytes) {
  if (bytes.size() < kBaseHeaderBytes) throw CorruptData("description shorter than its header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw CorruptData("bad description magic");
  EncodedDescription d;
  DescriptionHeader& h = d.header;
  const uint8_t* p = bytes.data();
  h.version = p[4];
  h.desc_id = p[5];
  h.orig_h = get_be16(p + 6);
  h.orig_w = get_be16(p + 8);
  h.m = get_be16(p + 10);
  h.n = get_be16(p + 12);
  h.k = get_be16(p + 14);
  h.l = get_be16(p + 16);
  if (p[18] > 1) throw CorruptData("unknown coding mode");
  h.mode = static_cast<CodingMode>(p[18]);
  h.validate();
  if (bytes.size() < h.byte_size()) throw CorruptData("truncated header extension");
  if (h.mode == CodingMode::kArithmetic) h.model_crc = get_be32(p + kBaseHeaderBytes);
  d.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.byte_size()), bytes.end());
  return d;
}

EncodedDescription serialize_raw(const quant::IndexTensor& v, const DescriptionHeader& header) {
  header.validate();
  if (header.mode != CodingMode::kRaw) throw std::invalid_argument("header is not raw mode");
  if (v.m() != header.m || v.n() != header.n || v.k() != header.k) {
    throw ShapeError("index tensor shape does not match header");
  }
  const int bits = bits_per_symbol(header.l);
  BitWriter w;
  for (size_t i = 0; i < v.size(); ++i) {
    if (v[i] >= header.l) throw std::invalid_argument("index out of range for header levels");
    for (int b = bits - 1; b >= 0; --b) w.put(v[i] >> b & 1);
  }
  return {header, w.finish()};
}

quant::IndexTensor deserialize_raw(const EncodedDescription& d) {
  const DescriptionHeader& h = d.header;
  h.validate();
  if (h.mode != CodingMode::kRaw) throw CorruptData("description is not raw mode");
  const size_t expect = raw_payload_bytes(h.m, h.n, h.k, h.l);
  if (d.payload.size() < expect) throw CorruptData("truncated raw payload");
  if (d.payload.size() > expect) throw CorruptData("trailing bytes after raw payload");
  const int bits = bits_per_symbol(h.l);
  quant::IndexTensor v(h.m, h.n, h.k);
  BitReader r(d.payload);
  for (size_t i = 0; i < v.size(); ++i) {
    int s = 0;
    for (int b = 0; b < bits; ++b) s = s << 1 | r.get();
    if (s >= h.l) throw CorruptData("decoded index exceeds center count");
    v[i] = static_cast<uint16_t>(s);
  }
  return v;
}

void quantize_frequencies(std::span<const double> probs, std::span<uint32_t> freq) {
  const size_t l = probs.size();
  if (freq.size() != l || l < 2 || l >= kFreqTotal / 2) {
    throw std::invalid_argument("bad frequency table size");
  }
  double total = 0.0;
  bool ok = true;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0) ok = false;
    total += p;
  }
  if (!ok || !(total > 0.0)) total = 0.0;
  const double budget = static_cast<double>(kFreqTotal - l);
  uint64_t sum = 0;
  size_t best = 0;
  for (size_t j = 0; j < l; ++j) {
    const double p = total > 0.0 ? probs[j] / total : 1.0 / static_cast<double>(l);
    freq[j] = 1 + static_cast<uint32_t>(std::min(budget, std::floor(p * budget)));
    sum += freq[j];
    if (freq[j] > freq[best]) best = j;
  }
  // Rounding can only leave a deficit (or, with denormal-level noise, a
  // tiny surplus); the most likely symbol absorbs it.
  freq[best] = static_cast<uint32_t>(static_cast<int64_t>(freq[best]) +
                                     (static_cast<int64_t>(kFreqTotal) - static_cast<int64_t>(sum)));
}

EncodedDescription ac_encode(const quant::IndexTensor& v, const DescriptionHeader& header,
                             SymbolModel& model) {
  header.validate();
  if (header.mode != CodingMode::kArithmetic) {
    throw std::invalid_argument("header is not arithmetic mode");
  }
  if (v.m() != header.m || v.n() != header.n || v.k() != header.k) {
    throw ShapeError("index tensor shape does not match header");
  }
  check_model(header, model);
  const int l = header.l;
  std::vector<double> p(l);
  std::vector<uint32_t> f(l);
  RangeEncoder enc;
  for (size_t pos = 0; pos < v.size(); ++pos) {
    const int s = v[pos];
    if (s >= l) throw std::invalid_argument("index out of range for header levels");
    model.probabilities(pos, p);
    quantize_frequencies(p, f);
    uint32_t lo = 0;
    for (int j = 0; j < s; ++j) lo += f[j];
    enc.encode(lo, lo + f[s]);
    model.commit(pos, s);
  }
  return {header, enc.finish()};
}

quant::IndexTensor ac_decode(const EncodedDescription& d, SymbolModel& model,
                             uint32_t model_crc) {
  const DescriptionHeader& h = d.header;
  h.validate();
  if (h.mode != CodingMode::kArithmetic) throw CorruptData("description is not arithmetic mode");
  if (h.model_crc != model_crc) {
    throw ModelMismatch("description was coded with a different entropy model");
  }
  check_model(h, model);
  const int l = h.l;
  std::vector<double> p(l);
  std::vector<uint32_t> f(l);
  quant::IndexTensor v(h.m, h.n, h.k);
  RangeDecoder dec(d.payload);
  for (size_t pos = 0; pos < v.size(); ++pos) {
    model.probabilities(pos, p);
    quantize_frequencies(p, f);
    const uint32_t t = dec.target();
    uint32_t lo = 0;
    int s = 0;
    while (s < l - 1 && lo + f[s] <= t) lo += f[s++];
    dec.consume(lo, lo + f[s]);
    v[pos] = static_cast<uint16_t>(s);
    model.commit(pos, s);
  }
  return v;
}

quant::IndexTensor decode_indices(const EncodedDescription& d, SymbolModel* model,
                                  uint32_t model_crc) {
  if (d.header.mode == CodingMode::kRaw) return deserialize_raw(d);
  if (!model) throw std::invalid_argument("arithmetic description needs an entropy model");
  return ac_decode(d, *model, model_crc);
}

TableModel::TableModel(int levels, std::vector<double> probs)
    : levels_(levels), probs_(std::move(probs)) {
  if (levels < 2 || probs_.size() % levels != 0) {
    throw std::invalid_argument("probability table size is not a multiple of levels");
  }
}

TableModel TableModel::from_volume(const Tensor& probs) {
  if (probs.rank() != 4) throw ShapeError("expected an [L,M,N,K] probability volume");
  const int l = probs.dim(0);
  const size_t positions = probs.size() / l;
  std::vector<double> table(probs.size());
  for (int j = 0; j < l; ++j) {
    for (size_t p = 0; p < positions; ++p) table[p * l + j] = probs[j * positions + p];
  }
  return TableModel(l, std::move(table));
}

TableModel TableModel::uniform(int levels, size_t positions) {
  return TableModel(levels, std::vector<double>(positions * levels, 1.0 / levels));
}

void TableModel::probabilities(size_t pos, std::span<double> out) {
  if (pos >= positions() || out.size() != static_cast<size_t>(levels_)) {
    throw std::out_of_range("table model position out of range");
  }
  std::copy_n(probs_.begin() + static_cast<std::ptrdiff_t>(pos * levels_), levels_, out.begin());
}

void write_description(const std::string& path, const EncodedDescription& d) {
  const std::vector<uint8_t> bytes = to_bytes(d);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

EncodedDescription read_description(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open description " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return from_bytes(bytes);
}

}  // namespace mdc::bitstream
