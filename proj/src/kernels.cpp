// SPDX-License-Identifier: Apache-2.0
#include "smp/kernels.hpp"

#include <atomic>
#include <cmath>

namespace smp::kernels {

namespace {
std::atomic<bool> g_parallel{true};
std::atomic<long long> g_threshold{1 << 18};

inline double softplus_one(double v) {
  if (v > 30.0) return v;
  if (v < -30.0) return std::exp(v);
  return std::log1p(std::exp(v));
}
}  // namespace

void set_parallel_enabled(bool on) { g_parallel.store(on); }
bool parallel_enabled() { return g_parallel.load(); }
void set_parallel_threshold(long long flops) { g_threshold.store(flops); }
long long parallel_threshold() { return g_threshold.load(); }

void matmul_serial(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + (long long)i * n;
    if (!accumulate)
      for (int j = 0; j < n; ++j) ci[j] = 0.0;
    const double* ai = a + (long long)i * k;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + (long long)p * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_parallel(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    double* ci = c + (long long)i * n;
    if (!accumulate)
      for (int j = 0; j < n; ++j) ci[j] = 0.0;
    const double* ai = a + (long long)i * k;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + (long long)p * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  if (g_parallel.load() && (long long)m * k * n >= g_threshold.load())
    matmul_parallel(a, b, c, m, k, n, accumulate);
  else
    matmul_serial(a, b, c, m, k, n, accumulate);
}

void matmul_nt_serial(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + (long long)i * k;
    double* ci = c + (long long)i * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + (long long)j * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = accumulate ? ci[j] + acc : acc;
    }
  }
}

void matmul_nt_parallel(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const double* ai = a + (long long)i * k;
    double* ci = c + (long long)i * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + (long long)j * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = accumulate ? ci[j] + acc : acc;
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  if (g_parallel.load() && (long long)m * k * n >= g_threshold.load())
    matmul_nt_parallel(a, b, c, m, k, n, accumulate);
  else
    matmul_nt_serial(a, b, c, m, k, n, accumulate);
}

void matmul_tn_serial(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  if (!accumulate)
    for (long long i = 0; i < (long long)m * n; ++i) c[i] = 0.0;
  // Fixed p-major accumulation order per output element.
  for (int i = 0; i < m; ++i) {
    double* ci = c + (long long)i * n;
    for (int p = 0; p < k; ++p) {
      const double av = a[(long long)p * m + i];
      const double* bp = b + (long long)p * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_tn_parallel(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    double* ci = c + (long long)i * n;
    if (!accumulate)
      for (int j = 0; j < n; ++j) ci[j] = 0.0;
    for (int p = 0; p < k; ++p) {
      const double av = a[(long long)p * m + i];
      const double* bp = b + (long long)p * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  if (g_parallel.load() && (long long)m * k * n >= g_threshold.load())
    matmul_tn_parallel(a, b, c, m, k, n, accumulate);
  else
    matmul_tn_serial(a, b, c, m, k, n, accumulate);
}

void softplus_serial(const double* x, double* y, int n) {
  for (int i = 0; i < n; ++i) y[i] = softplus_one(x[i]);
}

void softplus_parallel(const double* x, double* y, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) y[i] = softplus_one(x[i]);
}

void softplus(const double* x, double* y, int n) {
  if (g_parallel.load() && n >= g_threshold.load())
    softplus_parallel(x, y, n);
  else
    softplus_serial(x, y, n);
}

void axpy_serial(double alpha, const double* x, double* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void axpy_parallel(double alpha, const double* x, double* y, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void axpy(double alpha, const double* x, double* y, int n) {
  if (g_parallel.load() && n >= g_threshold.load())
    axpy_parallel(alpha, x, y, n);
  else
    axpy_serial(alpha, x, y, n);
}

}  // namespace smp::kernels
