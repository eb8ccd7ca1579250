// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace smp::kernels {

// Dense kernels behind every network forward/backward pass.
//
// Each has a serial reference implementation (kept for testing) and an
// OpenMP variant parallelized over output rows only, so every output element
// is accumulated by one thread in a fixed order and results are bitwise
// identical for any thread count. The unsuffixed entry points dispatch on
// problem size and the global parallel switch.

// C = A[m,k] * B[k,n], optionally accumulating into C.
void matmul_serial(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);
void matmul_parallel(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);
void matmul(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);

// C = A[m,k] * B[n,k]^T
void matmul_nt_serial(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);
void matmul_nt_parallel(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);

// C = A[k,m]^T * B[k,n]
void matmul_tn_serial(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);
void matmul_tn_parallel(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);

// y = softplus(x), numerically stable at both tails.
void softplus_serial(const double* x, double* y, int n);
void softplus_parallel(const double* x, double* y, int n);
void softplus(const double* x, double* y, int n);

// y += alpha * x
void axpy_serial(double alpha, const double* x, double* y, int n);
void axpy_parallel(double alpha, const double* x, double* y, int n);
void axpy(double alpha, const double* x, double* y, int n);

// Global dispatch controls. Parallel kernels engage only above the element
// threshold; tiny problems stay serial to avoid fork overhead.
void set_parallel_enabled(bool on);
bool parallel_enabled();
void set_parallel_threshold(long long flops);
long long parallel_threshold();

}  // namespace smp::kernels
