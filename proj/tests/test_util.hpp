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

#ifndef MDC_TESTS_TEST_UTIL_HPP_
#define MDC_TESTS_TEST_UTIL_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "mdc/autograd.hpp"
#include "mdc/tensor.hpp"

namespace mdc::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.storage()) v = u(rng);
  return t;
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

// Central difference of a scalar function with respect to one entry.
inline double central_diff(Tensor& t, size_t i, const std::function<double()>& f,
                           double h = 1e-6) {
  const double keep = t[i];
  t[i] = keep + h;
  const double up = f();
  t[i] = keep - h;
  const double down = f();
  t[i] = keep;
  return (up - down) / (2.0 * h);
}

// Compares the analytic gradient of `loss(inputs)` with central differences
// for every entry of every input (or a strided subset when large). Returns
// the worst relative error seen.
inline double max_grad_error(std::vector<Var> inputs,
                             const std::function<Var(const std::vector<Var>&)>& loss,
                             double h = 1e-5, size_t max_entries = 64, double floor = 1e-7) {
  for (auto& v : inputs) v.zero_grad();
  backward(loss(inputs));
  std::vector<Tensor> analytic;
  for (auto& v : inputs) analytic.push_back(v.grad_buffer());
  double worst = 0.0;
  for (size_t j = 0; j < inputs.size(); ++j) {
    Tensor& val = inputs[j].mutable_value();
    const size_t stride = std::max<size_t>(1, val.size() / max_entries);
    for (size_t i = 0; i < val.size(); i += stride) {
      const double fd = central_diff(val, i, [&] {
        NoGradGuard ng;
        return loss(inputs).item();
      }, h);
      worst = std::max(worst, rel_err(analytic[j][i], fd, floor));
    }
  }
  return worst;
}

}  // namespace mdc::testing

#endif  // MDC_TESTS_TEST_UTIL_HPP_
