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

#ifndef MDC_QUANT_HPP_
#define MDC_QUANT_HPP_

// Learnable scalar quantization.
//
// A feature tensor Z is stored channel-major as [K, M, N]. Quantized
// symbols are kept in raster order (m, then n, then k), which is also the
// order in which the bitstream and the context model visit them. The
// one-hot volume consumed by the context model is [L, M, N, K].

#include <cstdint>
#include <vector>

#include "mdc/autograd.hpp"
#include "mdc/tensor.hpp"

namespace mdc::quant {

struct CenterVector {
  std::vector<double> centers;
  double sigma = 1.0;

  int levels() const { return static_cast<int>(centers.size()); }
  // Throws ConfigError unless L >= 2, all centers finite and sigma > 0.
  void validate() const;
  // L evenly spaced centers over [-1, 1].
  static CenterVector uniform(int levels, double sigma);
};

class IndexTensor {
 public:
  IndexTensor() = default;
  IndexTensor(int m, int n, int k);

  int m() const { return m_; }
  int n() const { return n_; }
  int k() const { return k_; }
  size_t size() const { return data_.size(); }
  size_t offset(int mi, int ni, int ki) const {
    return (static_cast<size_t>(mi) * n_ + ni) * k_ + ki;
  }
  uint16_t& operator[](size_t i) { return data_[i]; }
  uint16_t operator[](size_t i) const { return data_[i]; }
  uint16_t& at(int mi, int ni, int ki) { return data_[offset(mi, ni, ki)]; }
  uint16_t at(int mi, int ni, int ki) const { return data_[offset(mi, ni, ki)]; }
  const std::vector<uint16_t>& raw() const { return data_; }

  bool operator==(const IndexTensor& o) const = default;

 private:
  int m_ = 0, n_ = 0, k_ = 0;
  std::vector<uint16_t> data_;
};

class OneHotTensor {
 public:
  OneHotTensor() = default;
  OneHotTensor(int m, int n, int k, int l);

  int m() const { return m_; }
  int n() const { return n_; }
  int k() const { return k_; }
  int l() const { return l_; }
  uint8_t& at(int mi, int ni, int ki, int li) { return data_[offset(mi, ni, ki) + li]; }
  uint8_t at(int mi, int ni, int ki, int li) const { return data_[offset(mi, ni, ki) + li]; }

 private:
  size_t offset(int mi, int ni, int ki) const {
    return ((static_cast<size_t>(mi) * n_ + ni) * k_ + ki) * l_;
  }
  int m_ = 0, n_ = 0, k_ = 0, l_ = 0;
  std::vector<uint8_t> data_;
};

// mask[k][m][n] = clamp(K * map[m][n] - k, 0, 1). `map` is [M, N] or
// [1, M, N] with entries in [0, 1].
Tensor expand_importance(const Tensor& map, int channels);
Tensor apply_importance(const Tensor& z, const Tensor& mask);

// Softmax of -sigma * (z - c_j)^2 over the centers.
std::vector<double> soft_assign(double z, const CenterVector& q);
// argmin_j (z - c_j)^2, smallest index on ties.
int nearest_center(double z, const std::vector<double>& centers);

IndexTensor hard_quantize(const Tensor& z, const CenterVector& q);
Tensor soft_quantize(const Tensor& z, const CenterVector& q);
// Throws CorruptData on an index >= L.
Tensor dequantize(const IndexTensor& v, const CenterVector& q);

OneHotTensor to_one_hot(const IndexTensor& v, int levels);
// Throws CorruptData if any row does not contain exactly one 1.
IndexTensor from_one_hot(const OneHotTensor& vt);

// ---- differentiable forms ----------------------------------------------

enum class QuantMode {
  kHard,  // hard values forward, soft-path gradients backward
  kSoft,  // soft values both ways (fully smooth surrogate)
};

Var expand_importance(const Var& map, int channels);
// z [K, M, N], centers [L]; gradients flow to both.
Var soft_quantize(const Var& z, const Var& centers, double sigma);
// Forward value of `hard`, gradient routed to `soft` only.
Var ste_combine(const Var& hard, const Var& soft);
// [L, M, N, K] volume. Hard mode: one-hot of the nearest center forward;
// both modes back-propagate through the soft assignment weights.
Var assignment_volume(const Var& z, const Var& centers, double sigma, QuantMode mode);

struct QuantizedBranch {
  Var values;       // [K, M, N], fed to the decoders
  Var assignments;  // [L, M, N, K], fed to the context model
  IndexTensor indices;
};

QuantizedBranch quantize_branch(const Var& z, const Var& centers, double sigma, QuantMode mode);

CenterVector to_center_vector(const Var& centers, double sigma);

}  // namespace mdc::quant

#endif  // MDC_QUANT_HPP_
