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

#ifndef MDC_BITSTREAM_HPP_
#define MDC_BITSTREAM_HPP_

// Description container (all multi-byte fields big-endian):
//
//   offset  size  field
//        0     4  magic "MDC1"
//        4     1  version (1)
//        5     1  desc_id (0 = A, 1 = B)
//        6     2  orig_h
//        8     2  orig_w
//       10     2  m = ceil(orig_h / 8)
//       12     2  n = ceil(orig_w / 8)
//       14     2  k
//       16     2  l (>= 2)
//       18     1  coding_mode (0 = raw, 1 = arithmetic)
//       19     4  entropy-model CRC32 (arithmetic mode only)
//
// The payload follows and runs to the end of the file.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mdc/quant.hpp"
#include "mdc/symbol_model.hpp"
#include "mdc/tensor.hpp"

namespace mdc::bitstream {

inline constexpr uint8_t kVersion = 1;
inline constexpr size_t kBaseHeaderBytes = 19;
inline constexpr size_t kModelCrcBytes = 4;

enum class CodingMode : uint8_t { kRaw = 0, kArithmetic = 1 };

struct DescriptionHeader {
  uint8_t version = kVersion;
  uint8_t desc_id = 0;
  uint16_t orig_h = 0, orig_w = 0;
  uint16_t m = 0, n = 0, k = 0, l = 0;
  CodingMode mode = CodingMode::kRaw;
  uint32_t model_crc = 0;  // only serialized in arithmetic mode

  // Throws CorruptData on any inconsistent field.
  void validate() const;
  size_t byte_size() const;
  bool operator==(const DescriptionHeader&) const = default;

  static DescriptionHeader for_image(int desc_id, int orig_h, int orig_w, int k, int l,
                                     CodingMode mode, uint32_t model_crc = 0);
};

struct EncodedDescription {
  DescriptionHeader header;
  std::vector<uint8_t> payload;

  size_t total_bytes() const { return header.byte_size() + payload.size(); }
  bool operator==(const EncodedDescription&) const = default;
};

int bits_per_symbol(int levels);
size_t raw_payload_bytes(int m, int n, int k, int levels);

std::vector<uint8_t> to_bytes(const EncodedDescription& d);
EncodedDescription from_bytes(std::span<const uint8_t> bytes);

EncodedDescription serialize_raw(const quant::IndexTensor& v, const DescriptionHeader& header);
quant::IndexTensor deserialize_raw(const EncodedDescription& d);

// Quantizes a distribution into integer frequencies summing to kFreqTotal,
// each at least 1. Non-finite or negative inputs fall back to uniform.
inline constexpr uint32_t kFreqTotal = 1u << 16;
void quantize_frequencies(std::span<const double> probs, std::span<uint32_t> freq);

// Adaptive arithmetic coding driven by a causal symbol model. The model is
// consumed: it sees every symbol via commit() in raster order.
EncodedDescription ac_encode(const quant::IndexTensor& v, const DescriptionHeader& header,
                             SymbolModel& model);
// Throws ModelMismatch when the header CRC differs from `model_crc`.
quant::IndexTensor ac_decode(const EncodedDescription& d, SymbolModel& model,
                             uint32_t model_crc);

// Either mode; arithmetic mode requires a model.
quant::IndexTensor decode_indices(const EncodedDescription& d, SymbolModel* model,
                                  uint32_t model_crc);

// Fixed per-position probabilities, laid out [positions][levels].
class TableModel : public SymbolModel {
 public:
  TableModel(int levels, std::vector<double> probs);
  // From an [L, M, N, K] probability volume.
  static TableModel from_volume(const Tensor& probs);
  static TableModel uniform(int levels, size_t positions);

  int levels() const override { return levels_; }
  size_t positions() const override { return probs_.size() / levels_; }
  void probabilities(size_t pos, std::span<double> out) override;
  void commit(size_t, int) override {}

 private:
  int levels_;
  std::vector<double> probs_;
};

void write_description(const std::string& path, const EncodedDescription& d);
EncodedDescription read_description(const std::string& path);

}  // namespace mdc::bitstream

#endif  // MDC_BITSTREAM_HPP_
