// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "smp/rng.hpp"
#include "smp/tensor.hpp"

using namespace smp;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -0.5, double hi = 0.5) {
  long long n = 1;
  for (int d : shape) n *= d;
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("construction and shape validation") {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 6.0);
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({0}, {}), std::invalid_argument);
  CHECK_THROWS_AS(matmul(t, t), std::invalid_argument);  // 2x3 times 2x3
  CHECK_THROWS_AS(add(t, Tensor::zeros({3, 2})), std::invalid_argument);
}

TEST_CASE("forward primitives hit their closed forms") {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 1}, {1, 0});
  Tensor c = matmul(a, b);
  CHECK(c.at(0, 0) == 1.0);
  CHECK(c.at(1, 0) == 3.0);

  CHECK(softplus(Tensor::scalar(0.0)).value() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(exp_t(Tensor::scalar(1.0)).value() == doctest::Approx(std::exp(1.0)));
  CHECK(log_t(Tensor::scalar(std::exp(2.0))).value() == doctest::Approx(2.0));
  CHECK(sum_all(Tensor({3}, {1, 2, 3})).value() == 6.0);
  CHECK(mean_all(Tensor({4}, {1, 2, 3, 4})).value() == 2.5);

  Tensor m({2, 2}, {1, 2, 3, 4});
  Tensor mr = mean_rows(m);
  CHECK(mr.at(0, 0) == 2.0);
  CHECK(mr.at(0, 1) == 3.0);

  Tensor tr = transpose(m);
  CHECK(tr.at(0, 1) == 3.0);
  CHECK(tr.at(1, 0) == 2.0);
}

TEST_CASE("product rule: loss = x dot y") {
  Tape tape;
  TapeScope scope(tape);
  Tensor x = tape.watch(Tensor::scalar(3.0));
  Tensor y = tape.watch(Tensor::scalar(5.0));
  Tensor loss = dot(x, y);
  tape.backward(loss);
  CHECK(tape.grad(x)[0] == 5.0);
  CHECK(tape.grad(y)[0] == 3.0);
}

TEST_CASE("stop_gradient blocks exactly one path") {
  Tape tape;
  TapeScope scope(tape);
  Tensor x = tape.watch(Tensor({2}, {1.5, -0.5}));
  Tensor y = tape.watch(Tensor({2}, {2.0, 3.0}));
  Tensor loss = sum_all(mul(stop_gradient(x), y));
  tape.backward(loss);
  auto gx = tape.grad(x);
  CHECK(gx[0] == 0.0);
  CHECK(gx[1] == 0.0);
  auto gy = tape.grad(y);
  CHECK(gy[0] == 1.5);
  CHECK(gy[1] == -0.5);
}

TEST_CASE("backward rejects non-scalar loss; constant loss gives zero grads") {
  Tape tape;
  TapeScope scope(tape);
  Tensor x = tape.watch(Tensor({2}, {1.0, 2.0}));
  Tensor y = add(x, x);
  CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
  Tensor constant = Tensor::scalar(7.0);
  tape.backward(constant);
  auto gx = tape.grad(x);
  CHECK(gx[0] == 0.0);
  CHECK(gx[1] == 0.0);
}

TEST_CASE("grad_check on ||x||^2 is exact to 1e-8") {
  auto rep = grad_check([](const Tensor& x) { return sum_squares(x); }, Tensor({2}, {1.0, 2.0}), 1e-5, 1e-8);
  CHECK(rep.pass);
  CHECK(rep.max_rel_err < 1e-8);
}

TEST_CASE("grad_check: ||softplus(Wx)||^2 against central differences") {
  Rng rng(21);
  Tensor W = random_tensor(rng, {4, 4}, -1.0, 1.0);
  Tensor x = random_tensor(rng, {4, 1}, -1.0, 1.0);
  auto rep = grad_check(
      [&](const Tensor& w) { return sum_squares(softplus(matmul(w, x))); }, W, 1e-5, 1e-6);
  CHECK(rep.pass);
}

TEST_CASE("per-primitive gradient checks") {
  Rng rng(22);
  const double tol = 1e-6;

  SUBCASE("elementwise binary ops, both arguments") {
    Tensor a = random_tensor(rng, {3, 2});
    Tensor b = random_tensor(rng, {3, 2}, 0.5, 1.5);  // bounded away from zero for divide
    CHECK(grad_check([&](const Tensor& t) { return sum_all(add(t, b)); }, a, 1e-5, tol).pass);
    CHECK(grad_check([&](const Tensor& t) { return sum_all(sub(t, b)); }, a, 1e-5, tol).pass);
    CHECK(grad_check([&](const Tensor& t) { return sum_squares(mul(t, b)); }, a, 1e-5, tol).pass);
    CHECK(grad_check([&](const Tensor& t) { return sum_squares(mul(a, t)); }, b, 1e-5, tol).pass);
    CHECK(grad_check([&](const Tensor& t) { return sum_squares(divide(t, b)); }, a, 1e-5, tol).pass);
    CHECK(grad_check([&](const Tensor& t) { return sum_squares(divide(a, t)); }, b, 1e-5, tol).pass);
    CHECK(grad_check([&](const Tensor& t) { return sum_all(mul_scalar(add_scalar(t, 0.3), -1.7)); }, a, 1e-5, tol).pass);
  }

  SUBCASE("matmul both arguments, transpose") {
    Tensor a = random_tensor(rng, {3, 4});
    Tensor b = random_tensor(rng, {4, 2});
    CHECK(grad_check([&](const Tensor& t) { return sum_squares(matmul(t, b)); }, a, 1e-5, tol).pass);
    CHECK(grad_check([&](const Tensor& t) { return sum_squares(matmul(a, t)); }, b, 1e-5, tol).pass);
    CHECK(grad_check([&](const Tensor& t) { return sum_squares(transpose(t)); }, a, 1e-5, tol).pass);
  }

  SUBCASE("row and column helpers") {
    Tensor m = random_tensor(rng, {3, 4});
    Tensor v = random_tensor(rng, {4});
    Tensor s = random_tensor(rng, {3}, 0.5, 1.5);
    CHECK(grad_check([&](const Tensor& t) { return sum_squares(add_rowvec(t, v)); }, m, 1e-5, tol).pass);
    CHECK(grad_check([&](const Tensor& t) { return sum_squares(add_rowvec(m, t)); }, v, 1e-5, tol).pass);
    CHECK(grad_check([&](const Tensor& t) { return sum_squares(div_colvec(t, s)); }, m, 1e-5, tol).pass);
    CHECK(grad_check([&](const Tensor& t) { return sum_squares(div_colvec(m, t)); }, s, 1e-5, tol).pass);
  }

  SUBCASE("nonlinear elementwise") {
    Tensor x = random_tensor(rng, {5});
    Tensor pos = random_tensor(rng, {5}, 0.5, 3.0);
    CHECK(grad_check([](const Tensor& t) { return sum_squares(softplus(t)); }, x, 1e-5, tol).pass);
    CHECK(grad_check([](const Tensor& t) { return sum_squares(exp_t(t)); }, x, 1e-5, tol).pass);
    CHECK(grad_check([](const Tensor& t) { return sum_squares(log_t(t)); }, pos, 1e-5, tol).pass);
    CHECK(grad_check([](const Tensor& t) { return sum_squares(sqrt_t(t)); }, pos, 1e-5, tol).pass);
    CHECK(grad_check([](const Tensor& t) { return sum_all(lgamma_t(t)); }, pos, 1e-5, tol).pass);
    CHECK(grad_check([](const Tensor& t) { return sum_all(digamma_t(t)); }, pos, 1e-5, tol).pass);
  }

  SUBCASE("reductions, slices, embeddings") {
    Tensor m = random_tensor(rng, {4, 5});
    Tensor v = random_tensor(rng, {6});
    CHECK(grad_check([](const Tensor& t) { return sum_squares(mean_rows(t)); }, m, 1e-5, tol).pass);
    CHECK(grad_check([](const Tensor& t) { return mean_all(mul(t, t)); }, m, 1e-5, tol).pass);
    CHECK(grad_check([](const Tensor& t) { return sum_squares(row(t, 2)); }, m, 1e-5, tol).pass);
    CHECK(grad_check([](const Tensor& t) { return sum_squares(cols(t, 1, 4)); }, m, 1e-5, tol).pass);
    CHECK(grad_check([](const Tensor& t) { return sum_squares(subvec(t, 1, 3)); }, v, 1e-5, tol).pass);
    CHECK(grad_check([](const Tensor& t) { return sum_squares(zero_embed(t, 10, 2)); }, v, 1e-5, tol).pass);
  }

  SUBCASE("concatenation and stacking") {
    Tensor a = random_tensor(rng, {3});
    Tensor b = random_tensor(rng, {4});
    Tensor ma = random_tensor(rng, {2, 3});
    Tensor mb = random_tensor(rng, {2, 2});
    CHECK(grad_check([&](const Tensor& t) { return sum_squares(concat_vec(t, b)); }, a, 1e-5, tol).pass);
    CHECK(grad_check([&](const Tensor& t) { return sum_squares(concat_vec(a, t)); }, b, 1e-5, tol).pass);
    CHECK(grad_check([&](const Tensor& t) { return sum_squares(concat_cols(t, mb)); }, ma, 1e-5, tol).pass);
    CHECK(grad_check([&](const Tensor& t) { return sum_squares(concat_cols(ma, t)); }, mb, 1e-5, tol).pass);
    CHECK(grad_check(
              [&](const Tensor& t) {
                std::vector<Tensor> rows{subvec(t, 0, 3), subvec(t, 3, 3), subvec(t, 0, 3)};
                return sum_squares(stack_rows(rows));
              },
              random_tensor(rng, {6}), 1e-5, tol)
              .pass);
    CHECK(grad_check(
              [&](const Tensor& t) {
                std::vector<Tensor> cs{subvec(t, 0, 2), subvec(t, 2, 2), subvec(t, 4, 2)};
                return sum_squares(stack_cols(cs));
              },
              random_tensor(rng, {6}), 1e-5, tol)
              .pass);
  }

  SUBCASE("reflect_apply both arguments") {
    Tensor m = random_tensor(rng, {4, 3});
    Tensor v = random_tensor(rng, {4}, 0.2, 1.0);
    CHECK(grad_check([&](const Tensor& t) { return sum_squares(reflect_apply(t, v)); }, m, 1e-5, tol).pass);
    CHECK(grad_check([&](const Tensor& t) { return sum_squares(reflect_apply(m, t)); }, v, 1e-5, tol).pass);
  }

  SUBCASE("scalar broadcasts, both arguments") {
    Tensor x = random_tensor(rng, {4});
    Tensor s = Tensor::scalar(0.8);
    CHECK(grad_check([&](const Tensor& t) { return sum_squares(mul_bcast(t, s)); }, x, 1e-5, tol).pass);
    CHECK(grad_check([&](const Tensor& t) { return sum_squares(mul_bcast(x, t)); }, s, 1e-5, tol).pass);
    CHECK(grad_check([&](const Tensor& t) { return sum_squares(div_bcast(t, s)); }, x, 1e-5, tol).pass);
    CHECK(grad_check([&](const Tensor& t) { return sum_squares(div_bcast(x, t)); }, s, 1e-5, tol).pass);
    CHECK(grad_check([&](const Tensor& t) { return sum_squares(add_bcast(t, s)); }, x, 1e-5, tol).pass);
    CHECK(grad_check([&](const Tensor& t) { return sum_squares(add_bcast(x, t)); }, s, 1e-5, tol).pass);
  }
}

TEST_CASE("100 random primitive compositions agree with finite differences") {
  Rng rng(23);
  int failures = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int r = rng.uniform_int(1, 4), c = rng.uniform_int(1, 4);
    Tensor x0 = random_tensor(rng, {r, c});
    // Frozen constants per trial so f depends on x alone.
    Tensor cmat = random_tensor(rng, {r, c});
    Tensor mmat = random_tensor(rng, {c, rng.uniform_int(1, 4)});
    std::vector<int> ops;
    for (int i = 0, len = rng.uniform_int(2, 4); i < len; ++i) ops.push_back(rng.uniform_int(0, 6));
    auto f = [&](const Tensor& x) {
      Tensor h = x;
      for (int op : ops) {
        switch (op) {
          case 0: h = softplus(h); break;
          case 1: h = add(h, Tensor::full(h.shape(), 0.25)); break;
          case 2: h = mul(h, Tensor::full(h.shape(), -0.8)); break;
          case 3: h = exp_t(mul_scalar(h, 0.3)); break;
          case 4: h = log_t(add_scalar(softplus(h), 0.1)); break;
          case 5:
            if (h.rank() == 2 && h.shape()[0] == r && h.shape()[1] == c) h = add(h, cmat);
            break;
          case 6:
            if (h.rank() == 2 && h.shape()[1] == mmat.shape()[0]) h = matmul(h, mmat);
            break;
        }
      }
      return sum_squares(h);
    };
    auto rep = grad_check(f, x0, 1e-5, 1e-5);
    if (!rep.pass) ++failures;
    if (rep.max_rel_err > worst) worst = rep.max_rel_err;
  }
  CHECK(failures == 0);
  CHECK(worst < 1e-5);
}

TEST_CASE("determinism: same inputs give bitwise-identical values and gradients") {
  auto run = [] {
    Rng rng(31);
    Tensor W({3, 3}, {0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, 0.8, -0.9});
    Tensor x({3, 1}, {rng.uniform(), rng.uniform(), rng.uniform()});
    Tape tape;
    TapeScope scope(tape);
    Tensor Ww = tape.watch(W);
    Tensor loss = sum_squares(softplus(matmul(Ww, x)));
    tape.backward(loss);
    auto g = tape.grad(Ww);
    g.push_back(loss.value());
    return g;
  };
  CHECK(run() == run());
}

TEST_CASE("watch leaves the canonical tensor untouched and supports many tapes") {
  Tensor p({2}, {1.0, 2.0});
  CHECK(p.node() == -1);
  Tape t1, t2;
  std::vector<double> g1, g2;
  {
    TapeScope scope(t1);
    Tensor w = t1.watch(p);
    t1.backward(sum_squares(w));
    g1 = t1.grad(w);
  }
  {
    TapeScope scope(t2);
    Tensor w = t2.watch(p);
    t2.backward(sum_all(w));
    g2 = t2.grad(w);
  }
  CHECK(p.node() == -1);
  CHECK(g1 == std::vector<double>{2.0, 4.0});
  CHECK(g2 == std::vector<double>{1.0, 1.0});
}

TEST_CASE("reshaped shares buffer and gradient path") {
  Tape tape;
  TapeScope scope(tape);
  Tensor x = tape.watch(Tensor({4}, {1, 2, 3, 4}));
  Tensor m = x.reshaped({2, 2});
  Tensor loss = sum_squares(matmul(m, m));
  tape.backward(loss);
  auto rep = grad_check(
      [](const Tensor& t) {
        Tensor q = t.reshaped({2, 2});
        return sum_squares(matmul(q, q));
      },
      Tensor({4}, {1, 2, 3, 4}), 1e-5, 1e-6);
  CHECK(rep.pass);
  CHECK(tape.grad(x).size() == 4);
}

TEST_CASE("ops outside any tape scope record nothing") {
  Tensor a({2}, {1.0, 2.0});
  Tensor b = add(a, a);
  CHECK(b.node() == -1);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor c = add(a, a);  // no watched parent: still constant
    CHECK(c.node() == -1);
    Tensor w = tape.watch(a);
    Tensor d = add(w, a);
    CHECK(d.node() >= 0);
  }
  CHECK(tape.size() == 2);  // leaf + one op
}
