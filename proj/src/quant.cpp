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

#include "mdc/quant.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mdc/errors.hpp"

namespace mdc::quant {

void CenterVector::validate() const {
  if (centers.size() < 2) throw ConfigError("quantizer needs at least 2 centers");
  for (double c : centers) {
    if (!std::isfinite(c)) throw ConfigError("quantizer center is not finite");
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be positive");
}

CenterVector CenterVector::uniform(int levels, double sigma) {
  if (levels < 2) throw ConfigError("quantizer needs at least 2 centers");
  CenterVector q;
  q.sigma = sigma;
  q.centers.resize(static_cast<size_t>(levels));
  for (int j = 0; j < levels; ++j) q.centers[j] = -1.0 + 2.0 * j / (levels - 1);
  q.validate();
  return q;
}

IndexTensor::IndexTensor(int m, int n, int k)
    : m_(m), n_(n), k_(k), data_(static_cast<size_t>(m) * n * k, 0) {}

OneHotTensor::OneHotTensor(int m, int n, int k, int l)
    : m_(m), n_(n), k_(k), l_(l), data_(static_cast<size_t>(m) * n * k * l, 0) {}

namespace {

void softmax_weights(double z, const double* c, int l, double sigma, double* w) {
  double mx = -INFINITY;
  for (int j = 0; j < l; ++j) {
    const double d = z - c[j];
    w[j] = -sigma * d * d;
    mx = std::max(mx, w[j]);
  }
  double s = 0.0;
  for (int j = 0; j < l; ++j) {
    w[j] = std::exp(w[j] - mx);
    s += w[j];
  }
  for (int j = 0; j < l; ++j) w[j] /= s;
}

int nearest(double z, const double* c, int l) {
  int best = 0;
  double bd = (z - c[0]) * (z - c[0]);
  for (int j = 1; j < l; ++j) {
    const double d = (z - c[j]) * (z - c[j]);
    if (d < bd) {
      bd = d;
      best = j;
    }
  }
  return best;
}

void check_map(const Tensor& map) {
  const bool ok2 = map.rank() == 2;
  const bool ok3 = map.rank() == 3 && map.dim(0) == 1;
  if (!ok2 && !ok3) throw ShapeError("importance map must be [M,N] or [1,M,N]");
  for (double v : map.values()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::domain_error("importance map entry outside [0,1]: " + std::to_string(v));
    }
  }
}

void check_feature(const Tensor& z) {
  if (z.rank() != 3) throw ShapeError("feature tensor must be [K,M,N], got " + shape_str(z.shape()));
}

}  // namespace

Tensor expand_importance(const Tensor& map, int channels) {
  if (channels < 1) throw std::invalid_argument("expand_importance: K must be >= 1");
  check_map(map);
  const int m = map.rank() == 2 ? map.dim(0) : map.dim(1);
  const int n = map.rank() == 2 ? map.dim(1) : map.dim(2);
  const size_t plane = static_cast<size_t>(m) * n;
  Tensor mask({channels, m, n});
  for (int k = 0; k < channels; ++k) {
    for (size_t i = 0; i < plane; ++i) {
      mask[k * plane + i] = std::clamp(channels * map[i] - k, 0.0, 1.0);
    }
  }
  return mask;
}

Tensor apply_importance(const Tensor& z, const Tensor& mask) {
  require_same_shape(z, mask, "apply_importance");
  Tensor out(z.shape());
  for (size_t i = 0; i < z.size(); ++i) out[i] = z[i] * mask[i];
  return out;
}

std::vector<double> soft_assign(double z, const CenterVector& q) {
  std::vector<double> w(q.centers.size());
  softmax_weights(z, q.centers.data(), q.levels(), q.sigma, w.data());
  return w;
}

int nearest_center(double z, const std::vector<double>& centers) {
  return nearest(z, centers.data(), static_cast<int>(centers.size()));
}

IndexTensor hard_quantize(const Tensor& z, const CenterVector& q) {
  check_feature(z);
  const int k = z.dim(0), m = z.dim(1), n = z.dim(2);
  IndexTensor v(m, n, k);
  for (int kk = 0; kk < k; ++kk) {
    for (int mm = 0; mm < m; ++mm) {
      for (int nn = 0; nn < n; ++nn) {
        v.at(mm, nn, kk) =
            static_cast<uint16_t>(nearest(z.at(kk, mm, nn), q.centers.data(), q.levels()));
      }
    }
  }
  return v;
}

Tensor soft_quantize(const Tensor& z, const CenterVector& q) {
  Tensor out(z.shape());
  std::vector<double> w(q.centers.size());
  for (size_t i = 0; i < z.size(); ++i) {
    softmax_weights(z[i], q.centers.data(), q.levels(), q.sigma, w.data());
    double acc = 0.0;
    for (int j = 0; j < q.levels(); ++j) acc += w[j] * q.centers[j];
    out[i] = acc;
  }
  return out;
}

Tensor dequantize(const IndexTensor& v, const CenterVector& q) {
  Tensor out({v.k(), v.m(), v.n()});
  for (int mm = 0; mm < v.m(); ++mm) {
    for (int nn = 0; nn < v.n(); ++nn) {
      for (int kk = 0; kk < v.k(); ++kk) {
        const int idx = v.at(mm, nn, kk);
        if (idx >= q.levels()) {
          throw CorruptData("quantization index " + std::to_string(idx) + " out of range");
        }
        out.at(kk, mm, nn) = q.centers[idx];
      }
    }
  }
  return out;
}

OneHotTensor to_one_hot(const IndexTensor& v, int levels) {
  OneHotTensor t(v.m(), v.n(), v.k(), levels);
  for (int mm = 0; mm < v.m(); ++mm) {
    for (int nn = 0; nn < v.n(); ++nn) {
      for (int kk = 0; kk < v.k(); ++kk) {
        const int idx = v.at(mm, nn, kk);
        if (idx >= levels) throw CorruptData("index exceeds one-hot depth");
        t.at(mm, nn, kk, idx) = 1;
      }
    }
  }
  return t;
}

IndexTensor from_one_hot(const OneHotTensor& vt) {
  IndexTensor v(vt.m(), vt.n(), vt.k());
  for (int mm = 0; mm < vt.m(); ++mm) {
    for (int nn = 0; nn < vt.n(); ++nn) {
      for (int kk = 0; kk < vt.k(); ++kk) {
        int ones = 0, hot = 0;
        for (int j = 0; j < vt.l(); ++j) {
          const int bit = vt.at(mm, nn, kk, j);
          if (bit > 1) throw CorruptData("one-hot entry is not binary");
          if (bit) {
            ++ones;
            hot = j;
          }
        }
        if (ones != 1) throw CorruptData("one-hot row does not sum to 1");
        v.at(mm, nn, kk) = static_cast<uint16_t>(hot);
      }
    }
  }
  return v;
}

// ---- differentiable forms ----------------------------------------------

Var expand_importance(const Var& map, int channels) {
  Tensor mask = expand_importance(map.value(), channels);
  const size_t plane = map.size();
  return make_op(std::move(mask), {map}, [channels, plane](Node& self) {
    const Tensor& d = self.inputs[0]->value;
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int k = 0; k < channels; ++k) {
      for (size_t i = 0; i < plane; ++i) {
        const double pre = channels * d[i] - k;
        if (pre > 0.0 && pre < 1.0) g[i] += channels * self.grad[k * plane + i];
      }
    }
  });
}

Var soft_quantize(const Var& z, const Var& centers, double sigma) {
  const int l = static_cast<int>(centers.size());
  const double* c = centers.value().data();
  Tensor out(z.shape());
  std::vector<double> w(static_cast<size_t>(l));
  for (size_t i = 0; i < z.size(); ++i) {
    softmax_weights(z.value()[i], c, l, sigma, w.data());
    double acc = 0.0;
    for (int j = 0; j < l; ++j) acc += w[j] * c[j];
    out[i] = acc;
  }
  return make_op(std::move(out), {z, centers}, [l, sigma](Node& self) {
    const Tensor& zv = self.inputs[0]->value;
    const double* c = self.inputs[1]->value.data();
    const bool gz = self.inputs[0]->requires_grad;
    const bool gc = self.inputs[1]->requires_grad;
    Tensor* gzb = gz ? &self.inputs[0]->grad_buffer() : nullptr;
    Tensor* gcb = gc ? &self.inputs[1]->grad_buffer() : nullptr;
    std::vector<double> w(static_cast<size_t>(l));
    for (size_t i = 0; i < zv.size(); ++i) {
      const double g = self.grad[i];
      if (g == 0.0) continue;
      const double z = zv[i];
      softmax_weights(z, c, l, sigma, w.data());
      const double zt = self.value[i];
      double dz = 0.0;
      for (int j = 0; j < l; ++j) {
        // d(out)/d(score_j) = w_j (c_j - out); d(score_j)/dz = -2 sigma (z - c_j).
        const double gs = w[j] * (c[j] - zt) * g;
        const double ds = 2.0 * sigma * (z - c[j]);
        dz -= gs * ds;
        if (gc) (*gcb)[j] += g * w[j] + gs * ds;
      }
      if (gz) (*gzb)[i] += dz;
    }
  });
}

Var ste_combine(const Var& hard, const Var& soft) {
  require_same_shape(hard.value(), soft.value(), "ste_combine");
  Tensor out = hard.value();
  return make_op(std::move(out), {soft}, [](Node& self) {
    accumulate(self.inputs[0]->grad_buffer(), self.grad);
  });
}

Var assignment_volume(const Var& z, const Var& centers, double sigma, QuantMode mode) {
  check_feature(z.value());
  const int k = z.dim(0), m = z.dim(1), n = z.dim(2);
  const int l = static_cast<int>(centers.size());
  const double* c = centers.value().data();
  const size_t vol = static_cast<size_t>(m) * n * k;
  Tensor out({l, m, n, k});
  std::vector<double> w(static_cast<size_t>(l));
  for (int kk = 0; kk < k; ++kk) {
    for (int mm = 0; mm < m; ++mm) {
      for (int nn = 0; nn < n; ++nn) {
        const double zv = z.value().at(kk, mm, nn);
        const size_t pos = (static_cast<size_t>(mm) * n + nn) * k + kk;
        if (mode == QuantMode::kHard) {
          out[nearest(zv, c, l) * vol + pos] = 1.0;
        } else {
          softmax_weights(zv, c, l, sigma, w.data());
          for (int j = 0; j < l; ++j) out[j * vol + pos] = w[j];
        }
      }
    }
  }
  return make_op(std::move(out), {z, centers}, [k, m, n, l, sigma, vol](Node& self) {
    const Tensor& zt = self.inputs[0]->value;
    const double* c = self.inputs[1]->value.data();
    const bool gz = self.inputs[0]->requires_grad;
    const bool gc = self.inputs[1]->requires_grad;
    Tensor* gzb = gz ? &self.inputs[0]->grad_buffer() : nullptr;
    Tensor* gcb = gc ? &self.inputs[1]->grad_buffer() : nullptr;
    std::vector<double> w(static_cast<size_t>(l));
    for (int kk = 0; kk < k; ++kk) {
      for (int mm = 0; mm < m; ++mm) {
        for (int nn = 0; nn < n; ++nn) {
          const size_t pos = (static_cast<size_t>(mm) * n + nn) * k + kk;
          const double zv = zt.at(kk, mm, nn);
          softmax_weights(zv, c, l, sigma, w.data());
          double wg = 0.0;
          for (int j = 0; j < l; ++j) wg += w[j] * self.grad[j * vol + pos];
          double dz = 0.0;
          for (int j = 0; j < l; ++j) {
            const double gs = w[j] * (self.grad[j * vol + pos] - wg);
            const double ds = 2.0 * sigma * (zv - c[j]);
            dz -= gs * ds;
            if (gc) (*gcb)[j] += gs * ds;
          }
          if (gz) gzb->at(kk, mm, nn) += dz;
        }
      }
    }
  });
}

CenterVector to_center_vector(const Var& centers, double sigma) {
  CenterVector q;
  q.centers.assign(centers.value().values().begin(), centers.value().values().end());
  q.sigma = sigma;
  q.validate();
  return q;
}

QuantizedBranch quantize_branch(const Var& z, const Var& centers, double sigma, QuantMode mode) {
  QuantizedBranch out;
  const CenterVector q = to_center_vector(centers, sigma);
  out.indices = hard_quantize(z.value(), q);
  Var soft = soft_quantize(z, centers, sigma);
  if (mode == QuantMode::kHard) {
    out.values = ste_combine(Var(dequantize(out.indices, q)), soft);
  } else {
    out.values = soft;
  }
  out.assignments = assignment_volume(z, centers, sigma, mode);
  return out;
}

}  // namespace mdc::quant
