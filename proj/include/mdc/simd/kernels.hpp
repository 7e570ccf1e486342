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

#ifndef MDC_SIMD_KERNELS_HPP_
#define MDC_SIMD_KERNELS_HPP_

// Arithmetic inner loops. Every kernel has a portable scalar reference in
// mdc::simd::scalar and an AVX2+FMA variant in mdc::simd::avx2; the
// top-level functions dispatch on the ISA selected at startup.
//
// The ISA is chosen once per process (CPUID, overridable with the
// MDC_ISA=scalar|avx2 environment variable) so that every run of a binary
// on one machine follows the same summation order.

#include <cstddef>

namespace mdc::simd {

enum class Isa { kScalar, kAvx2 };

bool avx2_supported();
Isa active_isa();
// Switches the dispatch table. Intended for tests; not thread-safe.
void set_isa(Isa isa);
const char* isa_name(Isa isa);

enum class Trans { kNo, kYes };

struct AdamCoeffs {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias1;  // 1 - beta1^t
  double bias2;  // 1 - beta2^t
};

// C[m x n] (+)= op(A)[m x k] * op(B)[k x n], row-major with leading dims.
// The reduction over k is always carried out in increasing k order for a
// given output element, independent of m and n.
using GemmFn = void (*)(Trans ta, Trans tb, int m, int n, int k, const double* a, int lda,
                        const double* b, int ldb, double* c, int ldc, bool accumulate);
using AxpyFn = void (*)(size_t n, double alpha, const double* x, double* y);
using DotFn = double (*)(size_t n, const double* x, const double* y);
using AdamFn = void (*)(size_t n, double* param, const double* grad, double* m, double* v,
                        const AdamCoeffs& c);

void gemm(Trans ta, Trans tb, int m, int n, int k, const double* a, int lda, const double* b,
          int ldb, double* c, int ldc, bool accumulate);
void axpy(size_t n, double alpha, const double* x, double* y);
double dot(size_t n, const double* x, const double* y);
void adam_update(size_t n, double* param, const double* grad, double* m, double* v,
                 const AdamCoeffs& c);

namespace scalar {
void gemm(Trans ta, Trans tb, int m, int n, int k, const double* a, int lda, const double* b,
          int ldb, double* c, int ldc, bool accumulate);
void axpy(size_t n, double alpha, const double* x, double* y);
double dot(size_t n, const double* x, const double* y);
void adam_update(size_t n, double* param, const double* grad, double* m, double* v,
                 const AdamCoeffs& c);
}  // namespace scalar

namespace avx2 {
void gemm(Trans ta, Trans tb, int m, int n, int k, const double* a, int lda, const double* b,
          int ldb, double* c, int ldc, bool accumulate);
void axpy(size_t n, double alpha, const double* x, double* y);
double dot(size_t n, const double* x, const double* y);
void adam_update(size_t n, double* param, const double* grad, double* m, double* v,
                 const AdamCoeffs& c);
}  // namespace avx2

}  // namespace mdc::simd

#endif  // MDC_SIMD_KERNELS_HPP_
