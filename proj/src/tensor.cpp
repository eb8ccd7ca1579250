// SPDX-License-Identifier: Apache-2.0
#include "smp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "smp/kernels.hpp"
#include "smp/special.hpp"

namespace smp {

namespace {

thread_local Tape* g_active_tape = nullptr;

[[noreturn]] void fail(const std::string& op, const std::string& detail) {
  throw std::invalid_argument(op + ": " + detail);
}

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    fail(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_2d(const char* op, const Tensor& t) {
  if (t.rank() != 2) fail(op, "expected rank-2 tensor, got " + shape_str(t.shape()));
}

void require_scalar_arg(const char* op, const Tensor& s) {
  if (s.numel() != 1) fail(op, "broadcast argument must be scalar, got " + shape_str(s.shape()));
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor(std::vector<int> shape, std::vector<double> data, int node)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<double>>(std::move(data))),
      node_(node) {
  if (shape_.empty() || shape_.size() > 2) fail("Tensor", "rank must be 1 or 2, got " + shape_str(shape_));
  long long n = 1;
  for (int d : shape_) {
    if (d <= 0) fail("Tensor", "non-positive dimension in " + shape_str(shape_));
    n *= d;
  }
  if (n != static_cast<long long>(data_->size()))
    fail("Tensor", "data size " + std::to_string(data_->size()) + " does not match shape " + shape_str(shape_));
}

Tensor Tensor::zeros(std::vector<int> shape) {
  long long n = 1;
  for (int d : shape) n *= d;
  return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

Tensor Tensor::full(std::vector<int> shape, double v) {
  long long n = 1;
  for (int d : shape) n *= d;
  return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), v));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

int Tensor::numel() const {
  if (!data_) return 0;
  return static_cast<int>(data_->size());
}

int Tensor::rows() const { return rank() == 2 ? shape_[0] : 1; }

int Tensor::cols() const { return rank() == 2 ? shape_[1] : shape_[0]; }

double Tensor::value() const {
  if (numel() != 1) fail("Tensor::value", "tensor " + shape_str(shape_) + " is not scalar");
  return (*data_)[0];
}

double Tensor::at(int i) const { return (*data_)[static_cast<std::size_t>(i)]; }

double Tensor::at(int r, int c) const {
  require_2d("Tensor::at", *this);
  return (*data_)[static_cast<std::size_t>(r) * shape_[1] + c];
}

const std::vector<double>& Tensor::data() const { return *data_; }

std::vector<double>& Tensor::raw() { return *data_; }

bool Tensor::all_finite() const {
  for (double v : *data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor Tensor::reshaped(std::vector<int> new_shape) const {
  long long n = 1;
  for (int d : new_shape) n *= d;
  if (n != numel()) fail("reshaped", "cannot view " + shape_str(shape_) + " as " + shape_str(new_shape));
  Tensor out;
  out.shape_ = std::move(new_shape);
  out.data_ = data_;
  out.node_ = node_;
  return out;
}

// ---- Tape -------------------------------------------------------------------

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = prev_; }

Tensor Tape::watch(const Tensor& t) {
  Tensor view = t;
  view.node_ = record(t.numel(), {}, nullptr);
  return view;
}

int Tape::record(int numel, std::vector<int> parents, BackwardFn fn) {
  nodes_.push_back(NodeRec{std::move(parents), numel, std::move(fn)});
  return static_cast<int>(nodes_.size()) - 1;
}

std::vector<double>& Tape::grad_buffer(int node, int numel) {
  if (grads_.size() < nodes_.size()) grads_.resize(nodes_.size());
  auto& g = grads_[static_cast<std::size_t>(node)];
  if (g.empty()) g.assign(static_cast<std::size_t>(numel), 0.0);
  return g;
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) fail("Tape::backward", "loss is not scalar: " + shape_str(loss.shape()));
  grads_.clear();
  grads_.resize(nodes_.size());
  if (loss.node_ < 0) return;  // constant loss: every gradient stays zero
  grad_buffer(loss.node_, 1)[0] = 1.0;
  for (int i = loss.node_; i >= 0; --i) {
    const auto& g = grads_[static_cast<std::size_t>(i)];
    if (g.empty()) continue;
    const auto& rec = nodes_[static_cast<std::size_t>(i)];
    if (rec.fn) rec.fn(g, *this);
  }
}

bool Tape::has_grad(const Tensor& t) const {
  return t.node_ >= 0 && static_cast<std::size_t>(t.node_) < grads_.size() &&
         !grads_[static_cast<std::size_t>(t.node_)].empty();
}

std::vector<double> Tape::grad(const Tensor& t) const {
  if (t.node_ < 0) fail("Tape::grad", "tensor is not on the tape");
  if (static_cast<std::size_t>(t.node_) < grads_.size() && !grads_[static_cast<std::size_t>(t.node_)].empty())
    return grads_[static_cast<std::size_t>(t.node_)];
  return std::vector<double>(static_cast<std::size_t>(t.numel()), 0.0);
}

void Tape::clear() {
  nodes_.clear();
  grads_.clear();
}

// ---- op plumbing ------------------------------------------------------------

namespace {

// Wires `out` onto the active tape when any parent is tracked. Backward
// closures capture parent buffers by shared handle; parents with node -1
// receive no gradient.
void adopt(Tensor& out, std::initializer_list<const Tensor*> parents, Tape::BackwardFn fn) {
  Tape* tape = Tape::active();
  if (!tape) return;
  std::vector<int> ps;
  for (const Tensor* p : parents)
    if (p->node() >= 0) ps.push_back(p->node());
  if (ps.empty()) return;
  Tape::bind(out, tape->record(out.numel(), std::move(ps), std::move(fn)));
}

inline void axpy_into(std::vector<double>& dst, double alpha, const std::vector<double>& src) {
  kernels::axpy(alpha, src.data(), dst.data(), static_cast<int>(src.size()));
}

}  // namespace

// ---- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.data());
  const auto& bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  Tensor r(a.shape(), std::move(out));
  adopt(r, {&a, &b}, [na = a.node(), nb = b.node(), n = a.numel()](const std::vector<double>& g, Tape& t) {
    if (na >= 0) axpy_into(t.grad_buffer(na, n), 1.0, g);
    if (nb >= 0) axpy_into(t.grad_buffer(nb, n), 1.0, g);
  });
  return r;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.data());
  const auto& bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  Tensor r(a.shape(), std::move(out));
  adopt(r, {&a, &b}, [na = a.node(), nb = b.node(), n = a.numel()](const std::vector<double>& g, Tape& t) {
    if (na >= 0) axpy_into(t.grad_buffer(na, n), 1.0, g);
    if (nb >= 0) axpy_into(t.grad_buffer(nb, n), -1.0, g);
  });
  return r;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.data());
  const auto& bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  Tensor r(a.shape(), std::move(out));
  adopt(r, {&a, &b},
        [na = a.node(), nb = b.node(), n = a.numel(), ab = a.buffer(), bb = b.buffer()](
            const std::vector<double>& g, Tape& t) {
          if (na >= 0) {
            auto& ga = t.grad_buffer(na, n);
            for (int i = 0; i < n; ++i) ga[i] += g[i] * (*bb)[i];
          }
          if (nb >= 0) {
            auto& gb = t.grad_buffer(nb, n);
            for (int i = 0; i < n; ++i) gb[i] += g[i] * (*ab)[i];
          }
        });
  return r;
}

Tensor divide(const Tensor& a, const Tensor& b) {
  require_same_shape("divide", a, b);
  std::vector<double> out(a.data());
  const auto& bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= bd[i];
  Tensor r(a.shape(), std::move(out));
  adopt(r, {&a, &b},
        [na = a.node(), nb = b.node(), n = a.numel(), ab = a.buffer(), bb = b.buffer()](
            const std::vector<double>& g, Tape& t) {
          if (na >= 0) {
            auto& ga = t.grad_buffer(na, n);
            for (int i = 0; i < n; ++i) ga[i] += g[i] / (*bb)[i];
          }
          if (nb >= 0) {
            auto& gb = t.grad_buffer(nb, n);
            for (int i = 0; i < n; ++i) gb[i] -= g[i] * (*ab)[i] / ((*bb)[i] * (*bb)[i]);
          }
        });
  return r;
}

Tensor add_scalar(const Tensor& x, double c) {
  std::vector<double> out(x.data());
  for (double& v : out) v += c;
  Tensor r(x.shape(), std::move(out));
  adopt(r, {&x}, [nx = x.node(), n = x.numel()](const std::vector<double>& g, Tape& t) {
    axpy_into(t.grad_buffer(nx, n), 1.0, g);
  });
  return r;
}

Tensor mul_scalar(const Tensor& x, double c) {
  std::vector<double> out(x.data());
  for (double& v : out) v *= c;
  Tensor r(x.shape(), std::move(out));
  adopt(r, {&x}, [nx = x.node(), n = x.numel(), c](const std::vector<double>& g, Tape& t) {
    axpy_into(t.grad_buffer(nx, n), c, g);
  });
  return r;
}

Tensor neg(const Tensor& x) { return mul_scalar(x, -1.0); }

// ---- linear algebra ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d("matmul", a);
  require_2d("matmul", b);
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k)
    fail("matmul", "inner dims differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  kernels::matmul(a.data().data(), b.data().data(), out.data(), m, k, n);
  Tensor r({m, n}, std::move(out));
  adopt(r, {&a, &b},
        [na = a.node(), nb = b.node(), m, k, n, ab = a.buffer(), bb = b.buffer()](
            const std::vector<double>& g, Tape& t) {
          if (na >= 0)  // gA[m,k] += g[m,n] B[k,n]^T
            kernels::matmul_nt(g.data(), bb->data(), t.grad_buffer(na, m * k).data(), m, n, k, true);
          if (nb >= 0)  // gB[k,n] += A[m,k]^T g[m,n]
            kernels::matmul_tn(ab->data(), g.data(), t.grad_buffer(nb, k * n).data(), k, m, n, true);
        });
  return r;
}

Tensor transpose(const Tensor& a) {
  require_2d("transpose", a);
  const int r0 = a.shape()[0], c0 = a.shape()[1];
  std::vector<double> out(static_cast<std::size_t>(r0) * c0);
  const auto& ad = a.data();
  for (int i = 0; i < r0; ++i)
    for (int j = 0; j < c0; ++j)
      out[static_cast<std::size_t>(j) * r0 + i] = ad[static_cast<std::size_t>(i) * c0 + j];
  Tensor r({c0, r0}, std::move(out));
  adopt(r, {&a}, [na = a.node(), r0, c0](const std::vector<double>& g, Tape& t) {
    auto& ga = t.grad_buffer(na, r0 * c0);
    for (int i = 0; i < r0; ++i)
      for (int j = 0; j < c0; ++j)
        ga[static_cast<std::size_t>(i) * c0 + j] += g[static_cast<std::size_t>(j) * r0 + i];
  });
  return r;
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  require_2d("add_rowvec", m);
  const int r0 = m.shape()[0], c0 = m.shape()[1];
  if (v.numel() != c0)
    fail("add_rowvec", "bias size " + shape_str(v.shape()) + " vs matrix " + shape_str(m.shape()));
  std::vector<double> out(m.data());
  const auto& vd = v.data();
  for (int i = 0; i < r0; ++i)
    for (int j = 0; j < c0; ++j) out[static_cast<std::size_t>(i) * c0 + j] += vd[j];
  Tensor r({r0, c0}, std::move(out));
  adopt(r, {&m, &v}, [nm = m.node(), nv = v.node(), r0, c0](const std::vector<double>& g, Tape& t) {
    if (nm >= 0) axpy_into(t.grad_buffer(nm, r0 * c0), 1.0, g);
    if (nv >= 0) {
      auto& gv = t.grad_buffer(nv, c0);
      for (int i = 0; i < r0; ++i)
        for (int j = 0; j < c0; ++j) gv[j] += g[static_cast<std::size_t>(i) * c0 + j];
    }
  });
  return r;
}

Tensor div_colvec(const Tensor& m, const Tensor& s) {
  require_2d("div_colvec", m);
  const int r0 = m.shape()[0], c0 = m.shape()[1];
  if (s.numel() != r0)
    fail("div_colvec", "divisor size " + shape_str(s.shape()) + " vs matrix " + shape_str(m.shape()));
  std::vector<double> out(m.data());
  const auto& sd = s.data();
  for (int i = 0; i < r0; ++i)
    for (int j = 0; j < c0; ++j) out[static_cast<std::size_t>(i) * c0 + j] /= sd[i];
  Tensor r({r0, c0}, std::move(out));
  adopt(r, {&m, &s},
        [nm = m.node(), ns = s.node(), r0, c0, mb = m.buffer(), sb = s.buffer()](
            const std::vector<double>& g, Tape& t) {
          if (nm >= 0) {
            auto& gm = t.grad_buffer(nm, r0 * c0);
            for (int i = 0; i < r0; ++i) {
              const double inv = 1.0 / (*sb)[i];
              for (int j = 0; j < c0; ++j)
                gm[static_cast<std::size_t>(i) * c0 + j] += g[static_cast<std::size_t>(i) * c0 + j] * inv;
            }
          }
          if (ns >= 0) {
            auto& gs = t.grad_buffer(ns, r0);
            for (int i = 0; i < r0; ++i) {
              const double inv2 = 1.0 / ((*sb)[i] * (*sb)[i]);
              double acc = 0.0;
              for (int j = 0; j < c0; ++j)
                acc += g[static_cast<std::size_t>(i) * c0 + j] * (*mb)[static_cast<std::size_t>(i) * c0 + j];
              gs[i] -= acc * inv2;
            }
          }
        });
  return r;
}

// ---- nonlinear elementwise -----------------------------------------------------

Tensor softplus(const Tensor& x) {
  std::vector<double> out(static_cast<std::size_t>(x.numel()));
  kernels::softplus(x.data().data(), out.data(), x.numel());
  Tensor r(x.shape(), std::move(out));
  adopt(r, {&x}, [nx = x.node(), n = x.numel(), xb = x.buffer()](const std::vector<double>& g, Tape& t) {
    auto& gx = t.grad_buffer(nx, n);
    for (int i = 0; i < n; ++i) gx[i] += g[i] / (1.0 + std::exp(-(*xb)[i]));
  });
  return r;
}

Tensor exp_t(const Tensor& x) {
  std::vector<double> out(x.data());
  for (double& v : out) v = std::exp(v);
  Tensor r(x.shape(), std::move(out));
  adopt(r, {&x}, [nx = x.node(), n = x.numel(), ob = r.buffer()](const std::vector<double>& g, Tape& t) {
    auto& gx = t.grad_buffer(nx, n);
    for (int i = 0; i < n; ++i) gx[i] += g[i] * (*ob)[i];
  });
  return r;
}

Tensor log_t(const Tensor& x) {
  std::vector<double> out(x.data());
  for (double& v : out) v = std::log(v);
  Tensor r(x.shape(), std::move(out));
  adopt(r, {&x}, [nx = x.node(), n = x.numel(), xb = x.buffer()](const std::vector<double>& g, Tape& t) {
    auto& gx = t.grad_buffer(nx, n);
    for (int i = 0; i < n; ++i) gx[i] += g[i] / (*xb)[i];
  });
  return r;
}

Tensor sqrt_t(const Tensor& x) {
  std::vector<double> out(x.data());
  for (double& v : out) v = std::sqrt(v);
  Tensor r(x.shape(), std::move(out));
  adopt(r, {&x}, [nx = x.node(), n = x.numel(), ob = r.buffer()](const std::vector<double>& g, Tape& t) {
    auto& gx = t.grad_buffer(nx, n);
    for (int i = 0; i < n; ++i) gx[i] += g[i] * 0.5 / (*ob)[i];
  });
  return r;
}

Tensor lgamma_t(const Tensor& x) {
  std::vector<double> out(x.data());
  for (double& v : out) v = std::lgamma(v);
  Tensor r(x.shape(), std::move(out));
  adopt(r, {&x}, [nx = x.node(), n = x.numel(), xb = x.buffer()](const std::vector<double>& g, Tape& t) {
    auto& gx = t.grad_buffer(nx, n);
    for (int i = 0; i < n; ++i) gx[i] += g[i] * special::digamma((*xb)[i]);
  });
  return r;
}

Tensor digamma_t(const Tensor& x) {
  std::vector<double> out(x.data());
  for (double& v : out) v = special::digamma(v);
  Tensor r(x.shape(), std::move(out));
  adopt(r, {&x}, [nx = x.node(), n = x.numel(), xb = x.buffer()](const std::vector<double>& g, Tape& t) {
    auto& gx = t.grad_buffer(nx, n);
    for (int i = 0; i < n; ++i) gx[i] += g[i] * special::trigamma((*xb)[i]);
  });
  return r;
}

// ---- reductions -----------------------------------------------------------------

Tensor sum_all(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor r = Tensor::scalar(acc);
  adopt(r, {&x}, [nx = x.node(), n = x.numel()](const std::vector<double>& g, Tape& t) {
    auto& gx = t.grad_buffer(nx, n);
    for (int i = 0; i < n; ++i) gx[i] += g[0];
  });
  return r;
}

Tensor mean_all(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const int n = x.numel();
  Tensor r = Tensor::scalar(acc / n);
  adopt(r, {&x}, [nx = x.node(), n](const std::vector<double>& g, Tape& t) {
    auto& gx = t.grad_buffer(nx, n);
    const double s = g[0] / n;
    for (int i = 0; i < n; ++i) gx[i] += s;
  });
  return r;
}

Tensor mean_rows(const Tensor& m) {
  require_2d("mean_rows", m);
  const int r0 = m.shape()[0], c0 = m.shape()[1];
  std::vector<double> out(static_cast<std::size_t>(c0), 0.0);
  const auto& md = m.data();
  for (int i = 0; i < r0; ++i)
    for (int j = 0; j < c0; ++j) out[j] += md[static_cast<std::size_t>(i) * c0 + j];
  for (double& v : out) v /= r0;
  Tensor r({1, c0}, std::move(out));
  adopt(r, {&m}, [nm = m.node(), r0, c0](const std::vector<double>& g, Tape& t) {
    auto& gm = t.grad_buffer(nm, r0 * c0);
    for (int i = 0; i < r0; ++i)
      for (int j = 0; j < c0; ++j) gm[static_cast<std::size_t>(i) * c0 + j] += g[j] / r0;
  });
  return r;
}

// ---- slicing --------------------------------------------------------------------

Tensor row(const Tensor& m, int i) {
  require_2d("row", m);
  const int r0 = m.shape()[0], c0 = m.shape()[1];
  if (i < 0 || i >= r0) fail("row", "index " + std::to_string(i) + " out of " + shape_str(m.shape()));
  std::vector<double> out(m.data().begin() + static_cast<std::size_t>(i) * c0,
                          m.data().begin() + static_cast<std::size_t>(i + 1) * c0);
  Tensor r({1, c0}, std::move(out));
  adopt(r, {&m}, [nm = m.node(), i, r0, c0](const std::vector<double>& g, Tape& t) {
    auto& gm = t.grad_buffer(nm, r0 * c0);
    for (int j = 0; j < c0; ++j) gm[static_cast<std::size_t>(i) * c0 + j] += g[j];
  });
  return r;
}

Tensor cols(const Tensor& m, int c0i, int c1i) {
  require_2d("cols", m);
  const int r0 = m.shape()[0], c0 = m.shape()[1];
  if (c0i < 0 || c1i > c0 || c0i >= c1i)
    fail("cols", "slice [" + std::to_string(c0i) + "," + std::to_string(c1i) + ") of " + shape_str(m.shape()));
  const int w = c1i - c0i;
  std::vector<double> out(static_cast<std::size_t>(r0) * w);
  const auto& md = m.data();
  for (int i = 0; i < r0; ++i)
    for (int j = 0; j < w; ++j)
      out[static_cast<std::size_t>(i) * w + j] = md[static_cast<std::size_t>(i) * c0 + c0i + j];
  Tensor r({r0, w}, std::move(out));
  adopt(r, {&m}, [nm = m.node(), r0, c0, c0i, w](const std::vector<double>& g, Tape& t) {
    auto& gm = t.grad_buffer(nm, r0 * c0);
    for (int i = 0; i < r0; ++i)
      for (int j = 0; j < w; ++j)
        gm[static_cast<std::size_t>(i) * c0 + c0i + j] += g[static_cast<std::size_t>(i) * w + j];
  });
  return r;
}

Tensor subvec(const Tensor& x, int start, int len) {
  if (x.rank() != 1) fail("subvec", "expected rank-1 tensor, got " + shape_str(x.shape()));
  const int n = x.numel();
  if (start < 0 || len <= 0 || start + len > n)
    fail("subvec", "slice [" + std::to_string(start) + ",+" + std::to_string(len) + ") of " + shape_str(x.shape()));
  std::vector<double> out(x.data().begin() + start, x.data().begin() + start + len);
  Tensor r({len}, std::move(out));
  adopt(r, {&x}, [nx = x.node(), n, start, len](const std::vector<double>& g, Tape& t) {
    auto& gx = t.grad_buffer(nx, n);
    for (int j = 0; j < len; ++j) gx[start + j] += g[j];
  });
  return r;
}

Tensor zero_embed(const Tensor& x, int size, int start) {
  if (x.rank() != 1) fail("zero_embed", "expected rank-1 tensor, got " + shape_str(x.shape()));
  const int len = x.numel();
  if (start < 0 || start + len > size)
    fail("zero_embed",
         "embed +" + std::to_string(len) + " at " + std::to_string(start) + " into " + std::to_string(size));
  std::vector<double> out(static_cast<std::size_t>(size), 0.0);
  const auto& xd = x.data();
  for (int j = 0; j < len; ++j) out[start + j] = xd[j];
  Tensor r({size}, std::move(out));
  adopt(r, {&x}, [nx = x.node(), len, start](const std::vector<double>& g, Tape& t) {
    auto& gx = t.grad_buffer(nx, len);
    for (int j = 0; j < len; ++j) gx[j] += g[start + j];
  });
  return r;
}

// ---- concatenation / stacking -----------------------------------------------------

Tensor concat_vec(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1) fail("concat_vec", "expected rank-1 tensors");
  std::vector<double> out(a.data());
  out.insert(out.end(), b.data().begin(), b.data().end());
  const int na = a.numel(), nb = b.numel();
  Tensor r({na + nb}, std::move(out));
  adopt(r, {&a, &b}, [pa = a.node(), pb = b.node(), na, nb](const std::vector<double>& g, Tape& t) {
    if (pa >= 0) {
      auto& ga = t.grad_buffer(pa, na);
      for (int i = 0; i < na; ++i) ga[i] += g[i];
    }
    if (pb >= 0) {
      auto& gb = t.grad_buffer(pb, nb);
      for (int i = 0; i < nb; ++i) gb[i] += g[na + i];
    }
  });
  return r;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_2d("concat_cols", a);
  require_2d("concat_cols", b);
  const int r0 = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
  if (b.shape()[0] != r0)
    fail("concat_cols", "row mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(static_cast<std::size_t>(r0) * (ca + cb));
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (int i = 0; i < r0; ++i) {
    for (int j = 0; j < ca; ++j)
      out[static_cast<std::size_t>(i) * (ca + cb) + j] = ad[static_cast<std::size_t>(i) * ca + j];
    for (int j = 0; j < cb; ++j)
      out[static_cast<std::size_t>(i) * (ca + cb) + ca + j] = bd[static_cast<std::size_t>(i) * cb + j];
  }
  Tensor r({r0, ca + cb}, std::move(out));
  adopt(r, {&a, &b}, [pa = a.node(), pb = b.node(), r0, ca, cb](const std::vector<double>& g, Tape& t) {
    if (pa >= 0) {
      auto& ga = t.grad_buffer(pa, r0 * ca);
      for (int i = 0; i < r0; ++i)
        for (int j = 0; j < ca; ++j)
          ga[static_cast<std::size_t>(i) * ca + j] += g[static_cast<std::size_t>(i) * (ca + cb) + j];
    }
    if (pb >= 0) {
      auto& gb = t.grad_buffer(pb, r0 * cb);
      for (int i = 0; i < r0; ++i)
        for (int j = 0; j < cb; ++j)
          gb[static_cast<std::size_t>(i) * cb + j] += g[static_cast<std::size_t>(i) * (ca + cb) + ca + j];
    }
  });
  return r;
}

namespace {

// Recording path for the variadic stacks.
void adopt_many(Tensor& out, const std::vector<int>& nodes, Tape::BackwardFn fn) {
  Tape* tape = Tape::active();
  if (!tape) return;
  std::vector<int> ps;
  for (int nd : nodes)
    if (nd >= 0) ps.push_back(nd);
  if (ps.empty()) return;
  Tape::bind(out, tape->record(out.numel(), std::move(ps), std::move(fn)));
}

}  // namespace

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) fail("stack_rows", "empty input");
  const int c0 = rows[0].numel();
  const int n = static_cast<int>(rows.size());
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n) * c0);
  std::vector<int> nodes(rows.size());
  for (int i = 0; i < n; ++i) {
    const Tensor& ri = rows[static_cast<std::size_t>(i)];
    if (ri.numel() != c0) fail("stack_rows", "ragged rows");
    out.insert(out.end(), ri.data().begin(), ri.data().end());
    nodes[static_cast<std::size_t>(i)] = ri.node();
  }
  Tensor r({n, c0}, std::move(out));
  adopt_many(r, nodes, [nodes, n, c0](const std::vector<double>& g, Tape& t) {
    for (int i = 0; i < n; ++i) {
      const int nd = nodes[static_cast<std::size_t>(i)];
      if (nd < 0) continue;
      auto& gr = t.grad_buffer(nd, c0);
      for (int j = 0; j < c0; ++j) gr[j] += g[static_cast<std::size_t>(i) * c0 + j];
    }
  });
  return r;
}

Tensor stack_cols(const std::vector<Tensor>& columns) {
  if (columns.empty()) fail("stack_cols", "empty input");
  const int d = columns[0].numel();
  const int k = static_cast<int>(columns.size());
  std::vector<double> out(static_cast<std::size_t>(d) * k);
  std::vector<int> nodes(columns.size());
  for (int j = 0; j < k; ++j) {
    const Tensor& cj = columns[static_cast<std::size_t>(j)];
    if (cj.numel() != d) fail("stack_cols", "ragged columns");
    const auto& cd = cj.data();
    for (int i = 0; i < d; ++i) out[static_cast<std::size_t>(i) * k + j] = cd[i];
    nodes[static_cast<std::size_t>(j)] = cj.node();
  }
  Tensor r({d, k}, std::move(out));
  adopt_many(r, nodes, [nodes, d, k](const std::vector<double>& g, Tape& t) {
    for (int j = 0; j < k; ++j) {
      const int nd = nodes[static_cast<std::size_t>(j)];
      if (nd < 0) continue;
      auto& gc = t.grad_buffer(nd, d);
      for (int i = 0; i < d; ++i) gc[i] += g[static_cast<std::size_t>(i) * k + j];
    }
  });
  return r;
}

// ---- reflections / broadcast --------------------------------------------------------

Tensor reflect_apply(const Tensor& m, const Tensor& v) {
  require_2d("reflect_apply", m);
  if (v.rank() != 1 || v.numel() != m.shape()[0])
    fail("reflect_apply", "reflector " + shape_str(v.shape()) + " vs matrix " + shape_str(m.shape()));
  const int d = m.shape()[0], c = m.shape()[1];
  const auto& md = m.data();
  const auto& vd = v.data();
  std::vector<double> w(static_cast<std::size_t>(c), 0.0);  // v^T M
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < c; ++j) w[j] += vd[i] * md[static_cast<std::size_t>(i) * c + j];
  std::vector<double> out(md);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(i) * c + j] -= 2.0 * vd[i] * w[j];
  Tensor r({d, c}, std::move(out));
  adopt(r, {&m, &v},
        [nm = m.node(), nv = v.node(), d, c, mb = m.buffer(), vb = v.buffer(),
         wb = std::make_shared<const std::vector<double>>(std::move(w))](const std::vector<double>& g,
                                                                         Tape& t) {
          if (nm >= 0) {
            // dM = g - 2 v (v^T g); the reflection is linear and symmetric in M.
            std::vector<double> vg(static_cast<std::size_t>(c), 0.0);
            for (int i = 0; i < d; ++i)
              for (int j = 0; j < c; ++j) vg[j] += (*vb)[i] * g[static_cast<std::size_t>(i) * c + j];
            auto& gm = t.grad_buffer(nm, d * c);
            for (int i = 0; i < d; ++i)
              for (int j = 0; j < c; ++j)
                gm[static_cast<std::size_t>(i) * c + j] +=
                    g[static_cast<std::size_t>(i) * c + j] - 2.0 * (*vb)[i] * vg[j];
          }
          if (nv >= 0) {
            // dv = -2 (g (M^T v) + M (g^T v)), with M^T v cached from forward.
            std::vector<double> gtv(static_cast<std::size_t>(c), 0.0);
            for (int i = 0; i < d; ++i)
              for (int j = 0; j < c; ++j) gtv[j] += g[static_cast<std::size_t>(i) * c + j] * (*vb)[i];
            auto& gv = t.grad_buffer(nv, d);
            for (int i = 0; i < d; ++i) {
              double acc = 0.0;
              for (int j = 0; j < c; ++j)
                acc += g[static_cast<std::size_t>(i) * c + j] * (*wb)[j] +
                       (*mb)[static_cast<std::size_t>(i) * c + j] * gtv[j];
              gv[i] -= 2.0 * acc;
            }
          }
        });
  return r;
}

Tensor mul_bcast(const Tensor& x, const Tensor& s) {
  require_scalar_arg("mul_bcast", s);
  const double sv = s.data()[0];
  std::vector<double> out(x.data());
  for (double& v : out) v *= sv;
  Tensor r(x.shape(), std::move(out));
  adopt(r, {&x, &s},
        [nx = x.node(), ns = s.node(), n = x.numel(), sv, xb = x.buffer()](const std::vector<double>& g,
                                                                           Tape& t) {
          if (nx >= 0) axpy_into(t.grad_buffer(nx, n), sv, g);
          if (ns >= 0) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += g[i] * (*xb)[i];
            t.grad_buffer(ns, 1)[0] += acc;
          }
        });
  return r;
}

Tensor div_bcast(const Tensor& x, const Tensor& s) {
  require_scalar_arg("div_bcast", s);
  const double sv = s.data()[0];
  std::vector<double> out(x.data());
  for (double& v : out) v /= sv;
  Tensor r(x.shape(), std::move(out));
  adopt(r, {&x, &s},
        [nx = x.node(), ns = s.node(), n = x.numel(), sv, xb = x.buffer()](const std::vector<double>& g,
                                                                           Tape& t) {
          if (nx >= 0) axpy_into(t.grad_buffer(nx, n), 1.0 / sv, g);
          if (ns >= 0) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += g[i] * (*xb)[i];
            t.grad_buffer(ns, 1)[0] -= acc / (sv * sv);
          }
        });
  return r;
}

Tensor add_bcast(const Tensor& x, const Tensor& s) {
  require_scalar_arg("add_bcast", s);
  const double sv = s.data()[0];
  std::vector<double> out(x.data());
  for (double& v : out) v += sv;
  Tensor r(x.shape(), std::move(out));
  adopt(r, {&x, &s}, [nx = x.node(), ns = s.node(), n = x.numel()](const std::vector<double>& g, Tape& t) {
    if (nx >= 0) axpy_into(t.grad_buffer(nx, n), 1.0, g);
    if (ns >= 0) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += g[i];
      t.grad_buffer(ns, 1)[0] += acc;
    }
  });
  return r;
}

Tensor stop_gradient(const Tensor& x) { return Tensor(x.shape(), x.data()); }

Tensor dot(const Tensor& a, const Tensor& b) { return sum_all(mul(a, b)); }

Tensor sum_squares(const Tensor& x) { return sum_all(mul(x, x)); }

// ---- gradient check -----------------------------------------------------------

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double step,
                           double tol) {
  Tape tape;
  std::vector<double> g_ad;
  {
    TapeScope scope(tape);
    Tensor xw = tape.watch(x);
    Tensor y = f(xw);
    if (y.numel() != 1) fail("grad_check", "f must be scalar-valued");
    tape.backward(y);
    g_ad = tape.grad(xw);
  }
  GradCheckReport rep;
  const int n = x.numel();
  for (int i = 0; i < n; ++i) {
    std::vector<double> dplus(x.data()), dminus(x.data());
    dplus[static_cast<std::size_t>(i)] += step;
    dminus[static_cast<std::size_t>(i)] -= step;
    const double fp = f(Tensor(x.shape(), std::move(dplus))).value();
    const double fm = f(Tensor(x.shape(), std::move(dminus))).value();
    const double g_fd = (fp - fm) / (2.0 * step);
    const double denom = std::max({std::abs(g_fd), std::abs(g_ad[static_cast<std::size_t>(i)]), 1e-8});
    const double rel = std::abs(g_ad[static_cast<std::size_t>(i)] - g_fd) / denom;
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_index = i;
    }
  }
  rep.pass = rep.max_rel_err < tol;
  return rep;
}

}  // namespace smp
