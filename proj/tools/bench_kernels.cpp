// SPDX-License-Identifier: Apache-2.0
// Times the serial reference kernels against their OpenMP variants and
// checks that both produce bitwise-identical output (the parallel loops
// only split output rows, never reduction order).
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "smp/kernels.hpp"
#include "smp/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm the caches once
  auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) fn();
  auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void fill(std::vector<double>& v, smp::Rng& rng) {
  for (double& x : v) x = rng.normal();
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

struct Case {
  const char* name;
  void (*serial)(const double*, const double*, double*, int, int, int, bool);
  void (*parallel)(const double*, const double*, double*, int, int, int, bool);
};

}  // namespace

int main(int argc, char** argv) {
  int reps = 5;
  std::vector<int> sizes = {64, 128, 256, 512};
  if (argc > 1) sizes = {std::stoi(argv[1])};

  smp::Rng rng(42);
  const Case cases[] = {
      {"matmul", smp::kernels::matmul_serial, smp::kernels::matmul_parallel},
      {"matmul_nt", smp::kernels::matmul_nt_serial, smp::kernels::matmul_nt_parallel},
      {"matmul_tn", smp::kernels::matmul_tn_serial, smp::kernels::matmul_tn_parallel},
  };

  std::printf("%-10s %6s %12s %12s %9s %8s\n", "kernel", "n", "serial_ms", "parallel_ms",
              "speedup", "bitwise");
  int failures = 0;
  for (int n : sizes) {
    std::vector<double> a(static_cast<std::size_t>(n) * n), b(a.size());
    fill(a, rng);
    fill(b, rng);
    for (const Case& c : cases) {
      std::vector<double> out_s(a.size(), 0.0), out_p(a.size(), 0.0);
      double ms_s = time_ms([&] { c.serial(a.data(), b.data(), out_s.data(), n, n, n, false); },
                            reps);
      double ms_p =
          time_ms([&] { c.parallel(a.data(), b.data(), out_p.data(), n, n, n, false); }, reps);
      bool same = bitwise_equal(out_s, out_p);
      if (!same) ++failures;
      std::printf("%-10s %6d %12.3f %12.3f %8.2fx %8s\n", c.name, n, ms_s, ms_p, ms_s / ms_p,
                  same ? "yes" : "NO");
    }
  }

  {
    const int n = 1 << 20;
    std::vector<double> x(n), y_s(n), y_p(n);
    fill(x, rng);
    double ms_s = time_ms([&] { smp::kernels::softplus_serial(x.data(), y_s.data(), n); }, reps);
    double ms_p = time_ms([&] { smp::kernels::softplus_parallel(x.data(), y_p.data(), n); }, reps);
    bool same = bitwise_equal(y_s, y_p);
    if (!same) ++failures;
    std::printf("%-10s %6d %12.3f %12.3f %8.2fx %8s\n", "softplus", n, ms_s, ms_p, ms_s / ms_p,
                same ? "yes" : "NO");
  }
  return failures == 0 ? 0 : 1;
}
