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

#include <cstdlib>
#include <cstring>

#include "mdc/simd/kernels.hpp"

namespace mdc::simd {
namespace {

struct Table {
  Isa isa;
  GemmFn gemm;
  AxpyFn axpy;
  DotFn dot;
  AdamFn adam;
};

Table table_for(Isa isa) {
  if (isa == Isa::kAvx2) {
    return {Isa::kAvx2, &avx2::gemm, &avx2::axpy, &avx2::dot, &avx2::adam_update};
  }
  return {Isa::kScalar, &scalar::gemm, &scalar::axpy, &scalar::dot, &scalar::adam_update};
}

Table initial_table() {
  Isa isa = avx2_supported() ? Isa::kAvx2 : Isa::kScalar;
  if (const char* env = std::getenv("MDC_ISA")) {
    if (std::strcmp(env, "scalar") == 0) isa = Isa::kScalar;
    if (std::strcmp(env, "avx2") == 0 && avx2_supported()) isa = Isa::kAvx2;
  }
  return table_for(isa);
}

Table& table() {
  static Table t = initial_table();
  return t;
}

}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) || defined(__i386__)
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok;
#else
  return false;
#endif
}

Isa active_isa() { return table().isa; }

void set_isa(Isa isa) {
  if (isa == Isa::kAvx2 && !avx2_supported()) isa = Isa::kScalar;
  table() = table_for(isa);
}

const char* isa_name(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

void gemm(Trans ta, Trans tb, int m, int n, int k, const double* a, int lda, const double* b,
          int ldb, double* c, int ldc, bool accumulate) {
  table().gemm(ta, tb, m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

void axpy(size_t n, double alpha, const double* x, double* y) { table().axpy(n, alpha, x, y); }

double dot(size_t n, const double* x, const double* y) { return table().dot(n, x, y); }

void adam_update(size_t n, double* param, const double* grad, double* m, double* v,
                 const AdamCoeffs& c) {
  table().adam(n, param, grad, m, v, c);
}

}  // namespace mdc::simd
