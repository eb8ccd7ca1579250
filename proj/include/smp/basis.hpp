// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "smp/nn.hpp"
#include "smp/tensor.hpp"

namespace smp {

// Orthonormal skill frame. B carries gradients whenever the source matrix
// did; U and D are value-only diagnostics of the factorization.
struct SkillBasis {
  Tensor B;               // [d, K], B^T B = I_K
  Tensor U;               // [K, K] raw upper factor, below-diagonal exactly zero
  std::vector<double> D;  // per-column stabilization signs, each +-1
};

// Sign-stabilized thin QR via a sequence of Householder reflections recorded
// on the tape: B = Q * diag(sign(diag(U))), sign(0) = +1. The stabilized
// diagonal diag(D*U) is nonnegative and B does not depend on the column-sign
// convention of the underlying factorization. Columns of B flip exactly with
// the corresponding columns of the input (covariance), which keeps spans and
// the stabilized diagonal intact.
// Throws std::runtime_error naming the first rank-deficient column when the
// residual column norm falls to 1e-10 or below.
SkillBasis qr_sign_stable(const Tensor& W);

// State-conditioned generator of the unconstrained matrix W(s).
struct BasisNet {
  nn::MLP net;
  int d = 0;
  int K = 0;

  static BasisNet init(int d_s, int d, int K, int hidden, Rng& rng);

  // W(s) as [d, K]; s is a rank-1 state vector.
  Tensor unconstrained(const Tensor& s) const;
  // Batched: S is [T, d_s]; returns [T, d*K] rows of vec(W).
  Tensor unconstrained_batch(const Tensor& S) const;
  // qr_sign_stable(W(s)) with one jittered retry on rank deficiency.
  SkillBasis forward(const Tensor& s) const;

  BasisNet watched(Tape& tape) const;
  void collect(const std::string& prefix, nn::ParamRefs& out);
};

// a = B (g element-wise z); g and z are rank-1 K-vectors, result rank-1 d.
Tensor decode_action(const Tensor& B, const Tensor& g, const Tensor& z);

// Dual coefficient targets: equal values, different gradient routing. The
// z_sg path blocks gradients into B; both paths keep the denominator
// differentiable so the gate amortizer sees it.
struct CoeffTargets {
  Tensor z_sg;
  Tensor z_rec;
};
CoeffTargets coeff_targets(const Tensor& B, const Tensor& a, const Tensor& g_mean, double eps);

}  // namespace smp
