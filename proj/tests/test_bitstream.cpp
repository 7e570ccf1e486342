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


#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "gtest/gtest.h"
#include "mdc/bitstream.hpp"
#include "mdc/errors.hpp"
#include "mdc/networks.hpp"

namespace mdc::bitstream {
namespace {

quant::IndexTensor random_indices(int m, int n, int k, int levels, std::mt19937_64& rng) {
  quant::IndexTensor v(m, n, k);
  std::uniform_int_distribution<int> d(0, levels - 1);
  for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<uint16_t>(d(rng));
  return v;
}

DescriptionHeader header_for(const quant::IndexTensor& v, int levels, CodingMode mode,
                             uint32_t crc = 0) {
  return DescriptionHeader::for_image(0, v.m() * 8, v.n() * 8, v.k(), levels, mode, crc);
}

nn::ModelConfig coder_config(int k, int l) {
  nn::ModelConfig c;
  c.encoder.base_channels = 4;
  c.encoder.feature_channels = k;
  c.decoder.resconv_per_block = 1;
  c.entropy.channels = 6;
  c.levels = l;
  c.seed = 5;
  return c;
}

Tensor one_hot_volume(const quant::IndexTensor& v, int levels) {
  Tensor t({levels, v.m(), v.n(), v.k()});
  for (size_t i = 0; i < v.size(); ++i) t[static_cast<size_t>(v[i]) * v.size() + i] = 1.0;
  return t;
}

// ---- header ---------------------------------------------------------------

TEST(Header, BigEndianLayout) {
  auto h = DescriptionHeader::for_image(1, 100, 300, 8, 8, CodingMode::kRaw);
  EXPECT_EQ(h.m, 13);
  EXPECT_EQ(h.n, 38);
  EXPECT_EQ(h.byte_size(), kBaseHeaderBytes);
  EncodedDescription d{h, {}};
  const auto b = to_bytes(d);
  ASSERT_EQ(b.size(), 19u);
  const std::vector<uint8_t> expect{'M', 'D', 'C', '1', 1, 1, 0, 100, 1, 44, 0, 13,
                                    0,   38,  0,   8,   0, 8, 0};
  EXPECT_EQ(b, expect);
  auto ha = DescriptionHeader::for_image(0, 64, 64, 8, 8, CodingMode::kArithmetic, 0xA1B2C3D4u);
  const auto ba = to_bytes(EncodedDescription{ha, {}});
  ASSERT_EQ(ba.size(), 23u);
  EXPECT_EQ(ba[18], 1);
  EXPECT_EQ(ba[19], 0xA1);
  EXPECT_EQ(ba[22], 0xD4);
}

TEST(Header, RejectsInconsistentFields) {
  const auto good = DescriptionHeader::for_image(0, 64, 48, 8, 8, CodingMode::kRaw);
  EXPECT_NO_THROW(good.validate());
  std::mt19937_64 rng(1);
  const auto v = random_indices(8, 6, 8, 8, rng);
  const auto bytes = to_bytes(serialize_raw(v, good));
  EXPECT_EQ(deserialize_raw(from_bytes(bytes)), v);

  // {offset, new value}: each breaks exactly one header invariant.
  const std::vector<std::pair<size_t, uint8_t>> edits{
      {0, 'X'},  // magic
      {4, 2},    // version
      {5, 2},    // desc id
      {11, 9},   // m != ceil(h/8)
      {13, 7},   // n != ceil(w/8)
      {15, 0},   // k = 0
      {17, 1},   // l < 2
      {18, 5},   // coding mode
  };
  for (auto [off, val] : edits) {
    auto b = bytes;
    b[off] = val;
    EXPECT_THROW(from_bytes(b), CorruptData) << "offset " << off;
  }
  // Truncated inside the header and inside the payload.
  EXPECT_THROW(from_bytes(std::span(bytes).first(10)), CorruptData);
  auto shortened = from_bytes(bytes);
  shortened.payload.pop_back();
  EXPECT_THROW(deserialize_raw(shortened), CorruptData);
  auto h = good;
  h.l = 1;
  EXPECT_THROW(h.validate(), CorruptData);
}

// ---- raw mode ---------------------------------------------------------------

TEST(Raw, PayloadSizeClosedForm) {
  EXPECT_EQ(bits_per_symbol(2), 1);
  EXPECT_EQ(bits_per_symbol(3), 2);
  EXPECT_EQ(bits_per_symbol(8), 3);
  EXPECT_EQ(bits_per_symbol(9), 4);
  EXPECT_EQ(raw_payload_bytes(4, 4, 2, 8), 12u);
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 1 + rng() % 6, n = 1 + rng() % 6, k = 1 + rng() % 5, l = 2 + rng() % 30;
    const auto v = random_indices(m, n, k, l, rng);
    const auto d = serialize_raw(v, header_for(v, l, CodingMode::kRaw));
    const size_t bits = static_cast<size_t>(m) * n * k *
                        static_cast<size_t>(std::ceil(std::log2(static_cast<double>(l))));
    EXPECT_EQ(d.payload.size(), (bits + 7) / 8);
    EXPECT_EQ(deserialize_raw(from_bytes(to_bytes(d))), v);
  }
}

TEST(Raw, MsbFirstPacking) {
  quant::IndexTensor v(1, 1, 5);
  const uint16_t syms[5] = {1, 2, 3, 7, 0};
  for (int i = 0; i < 5; ++i) v[i] = syms[i];
  const auto d = serialize_raw(v, DescriptionHeader::for_image(0, 8, 8, 5, 8, CodingMode::kRaw));
  // 001 010 011 111 000 -> 00101001 11110000
  EXPECT_EQ(d.payload, (std::vector<uint8_t>{0x29, 0xF0}));
}

TEST(Raw, RejectsOutOfRangeSymbols) {
  quant::IndexTensor v(1, 1, 2);
  v[0] = 6;  // representable in 3 bits, invalid for l = 5
  auto h = DescriptionHeader::for_image(0, 8, 8, 2, 8, CodingMode::kRaw);
  auto d = serialize_raw(v, h);
  d.header.l = 5;
  EXPECT_THROW(deserialize_raw(d), CorruptData);
  EXPECT_THROW(serialize_raw(v, DescriptionHeader::for_image(0, 16, 8, 2, 8, CodingMode::kRaw)),
               std::exception);
}

// ---- arithmetic mode ------------------------------------------------------

TEST(Frequencies, SumAndFloor) {
  std::vector<uint32_t> f(4);
  quantize_frequencies(std::vector<double>{1.0, 0.0, 0.0, 0.0}, f);
  EXPECT_EQ(f[0] + f[1] + f[2] + f[3], kFreqTotal);
  EXPECT_EQ(f[1], 1u);
  quantize_frequencies(std::vector<double>{NAN, 0.5, 0.5, 0.0}, f);
  EXPECT_EQ(f, (std::vector<uint32_t>{kFreqTotal / 4, kFreqTotal / 4, kFreqTotal / 4,
                                      kFreqTotal / 4}));
}

TEST(Arithmetic, UniformModelCostsAboutRaw) {
  std::mt19937_64 rng(3);
  const auto v = random_indices(4, 4, 2, 8, rng);
  auto model = TableModel::uniform(8, v.size());
  const auto d = ac_encode(v, header_for(v, 8, CodingMode::kArithmetic), model);
  EXPECT_LE(d.payload.size() * 8, 96u + 32u);
  EXPECT_GE(d.payload.size() * 8, 96u - 8u);
  auto dec = TableModel::uniform(8, v.size());
  EXPECT_EQ(ac_decode(d, dec, 0), v);
}

TEST(Arithmetic, ConfidentModelIsTiny) {
  quant::IndexTensor v(8, 8, 8);
  std::mt19937_64 rng(4);
  for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<uint16_t>(rng() % 8);
  std::vector<double> probs(v.size() * 8, 1e-9);
  for (size_t i = 0; i < v.size(); ++i) probs[i * 8 + v[i]] = 1.0;
  TableModel enc(8, probs), dec(8, probs);
  const auto d = ac_encode(v, header_for(v, 8, CodingMode::kArithmetic), enc);
  EXPECT_LT(d.payload.size(), raw_payload_bytes(8, 8, 8, 8) / 20);
  EXPECT_EQ(ac_decode(d, dec, 0), v);
}

TEST(Arithmetic, RoundTripWithContextModelWithinEnvelope) {
  const int k = 3, l = 6;
  nn::Model model(coder_config(k, l));
  const auto& net = model.entropy_net(0);
  const uint32_t crc = model.description_checksum(0);
  std::mt19937_64 rng(5);
  int within = 0;
  const int trials = 30;
  NoGradGuard ng;
  for (int t = 0; t < trials; ++t) {
    const int m = 2 + rng() % 4, n = 2 + rng() % 4;
    const auto v = random_indices(m, n, k, l, rng);
    nn::ContextCursor enc(net, m, n, k);
    const auto d = ac_encode(v, header_for(v, l, CodingMode::kArithmetic, crc), enc);
    const auto parsed = from_bytes(to_bytes(d));
    nn::ContextCursor dec(net, m, n, k);
    ASSERT_EQ(ac_decode(parsed, dec, crc), v);
    const double bits = net.rate(Var(one_hot_volume(v, l))).bits.item();
    if (d.payload.size() * 8.0 <= bits + 32.0 + 0.02 * bits) ++within;
  }
  EXPECT_GE(within, (trials * 95 + 99) / 100);
}

TEST(Arithmetic, ModelMismatchIsDetected) {
  std::mt19937_64 rng(6);
  const auto v = random_indices(3, 3, 2, 4, rng);
  auto m1 = TableModel::uniform(4, v.size());
  const auto d = ac_encode(v, header_for(v, 4, CodingMode::kArithmetic, 0x1234), m1);
  auto m2 = TableModel::uniform(4, v.size());
  EXPECT_THROW(ac_decode(d, m2, 0x4321), ModelMismatch);
  auto wrong_levels = TableModel::uniform(5, v.size());
  EXPECT_THROW(ac_decode(d, wrong_levels, 0x1234), ModelMismatch);
  auto m3 = TableModel::uniform(4, v.size());
  EXPECT_THROW(decode_indices(d, nullptr, 0x1234), std::exception);
  EXPECT_EQ(decode_indices(d, &m3, 0x1234), v);
}

TEST(Arithmetic, RawAndArithmeticAgree) {
  std::mt19937_64 rng(7);
  const auto v = random_indices(5, 4, 3, 7, rng);
  auto model = TableModel::uniform(7, v.size());
  const auto a = ac_encode(v, header_for(v, 7, CodingMode::kArithmetic), model);
  const auto r = serialize_raw(v, header_for(v, 7, CodingMode::kRaw));
  auto m2 = TableModel::uniform(7, v.size());
  EXPECT_EQ(decode_indices(a, &m2, 0), decode_indices(r, nullptr, 0));
}

TEST(Files, WriteReadRoundTrip) {
  std::mt19937_64 rng(8);
  const auto v = random_indices(2, 3, 4, 8, rng);
  const auto d = serialize_raw(v, header_for(v, 8, CodingMode::kRaw));
  const auto path = (std::filesystem::temp_directory_path() / "mdc_test_desc.mdcd").string();
  write_description(path, d);
  EXPECT_EQ(read_description(path), d);
  std::filesystem::remove(path);
  EXPECT_THROW(read_description(path), std::exception);
}

}  // namespace
}  // namespace mdc::bitstream
