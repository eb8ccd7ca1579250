// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace smp {

class Tape;

// Dense 64-bit float tensor, rank 1 or 2, row-major. Data buffers are shared
// and treated as immutable by every op; `node` links the tensor to a record
// on the active tape (-1 marks a constant with no gradient).
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<int> shape, std::vector<double> data, int node = -1);

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double v);
  static Tensor scalar(double v);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int numel() const;
  int rows() const;
  int cols() const;
  bool is_scalar() const { return numel() == 1; }
  double value() const;  // scalar tensors only
  double at(int i) const;
  double at(int r, int c) const;
  const std::vector<double>& data() const;
  // Shared handle to the buffer; what backward closures capture.
  std::shared_ptr<const std::vector<double>> buffer() const { return data_; }
  // In-place access for optimizer updates; must not be called while a tape
  // recorded against this buffer is still alive.
  std::vector<double>& raw();
  int node() const { return node_; }
  bool all_finite() const;

  // Metadata-only reshape; shares the buffer and the tape node.
  Tensor reshaped(std::vector<int> new_shape) const;

 private:
  friend class Tape;
  std::vector<int> shape_;
  std::shared_ptr<std::vector<double>> data_;
  int node_ = -1;
};

// Reverse-mode tape. Single-owner: one tape per thread of execution, ops
// record onto the innermost active TapeScope. Backward visits each node once
// in reverse creation order with a fixed summation order, so gradients are
// bitwise reproducible.
class Tape {
 public:
  using BackwardFn = std::function<void(const std::vector<double>& grad_out, Tape&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a leaf and returns a view of `t` wired to it. The canonical
  // tensor is left untouched, so distinct tapes can watch the same parameters
  // concurrently.
  Tensor watch(const Tensor& t);

  int record(int numel, std::vector<int> parents, BackwardFn fn);

  // Attaches a freshly recorded node to a tensor. Op-implementation plumbing;
  // not for use outside the primitive layer.
  static void bind(Tensor& t, int node) { t.node_ = node; }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape. `loss` must be scalar.
  void backward(const Tensor& loss);

  bool has_grad(const Tensor& t) const;
  // Gradient of the backward target w.r.t. `t`; zeros if the sweep never
  // reached it. `t` must be on this tape.
  std::vector<double> grad(const Tensor& t) const;

  std::vector<double>& grad_buffer(int node, int numel);

  std::size_t size() const { return nodes_.size(); }
  void clear();

  static Tape* active();

 private:
  struct NodeRec {
    std::vector<int> parents;
    int numel = 0;
    BackwardFn fn;
  };
  std::vector<NodeRec> nodes_;
  std::vector<std::vector<double>> grads_;
};

// RAII activation of a tape on the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// ---- primitives ----------------------------------------------------------
// All ops validate shapes and throw std::invalid_argument with a dimension
// report on mismatch. Ops record onto Tape::active() when any input carries a
// node; otherwise the result is a constant.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);
Tensor neg(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add_rowvec(const Tensor& m, const Tensor& v);   // v broadcast over rows
Tensor div_colvec(const Tensor& m, const Tensor& s);   // row i divided by s[i]

Tensor softplus(const Tensor& x);
Tensor exp_t(const Tensor& x);
Tensor log_t(const Tensor& x);
Tensor sqrt_t(const Tensor& x);
Tensor lgamma_t(const Tensor& x);   // backward is digamma
Tensor digamma_t(const Tensor& x);  // backward is trigamma

Tensor sum_all(const Tensor& x);   // -> scalar
Tensor mean_all(const Tensor& x);  // -> scalar
Tensor mean_rows(const Tensor& m); // [r,c] -> [1,c]

Tensor row(const Tensor& m, int i);                    // -> [1,c]
Tensor cols(const Tensor& m, int c0, int c1);          // half-open column slice
Tensor subvec(const Tensor& x, int start, int len);
Tensor zero_embed(const Tensor& x, int size, int start);  // scatter into zeros

Tensor concat_vec(const Tensor& a, const Tensor& b);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor stack_rows(const std::vector<Tensor>& rows);
Tensor stack_cols(const std::vector<Tensor>& columns);

// Householder reflection applied to every column: M - 2 v (v^T M).
Tensor reflect_apply(const Tensor& m, const Tensor& v);

// Broadcast against a scalar tensor (gradient flows into both arguments).
Tensor mul_bcast(const Tensor& x, const Tensor& s);
Tensor div_bcast(const Tensor& x, const Tensor& s);
Tensor add_bcast(const Tensor& x, const Tensor& s);

// Passes the value through and severs gradient flow.
Tensor stop_gradient(const Tensor& x);

Tensor dot(const Tensor& a, const Tensor& b);       // sum(a*b) -> scalar
Tensor sum_squares(const Tensor& x);                // sum(x*x) -> scalar

// ---- gradient checking ----------------------------------------------------

struct GradCheckReport {
  double max_rel_err = 0.0;
  int worst_index = -1;
  bool pass = false;
};

// Central-difference check of d(f)/d(x) against the tape gradient. `f` must
// be scalar-valued and must not depend on state other than `x`.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double step = 1e-5, double tol = 1e-4);

}  // namespace smp
