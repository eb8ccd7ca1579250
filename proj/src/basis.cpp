// SPDX-License-Identifier: Apache-2.0
#include "smp/basis.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace smp {

namespace {

// sign with sign(0) = +1, the stabilization convention.
double sgn_pos(double x) { return x >= 0.0 ? 1.0 : -1.0; }

Tensor eye_dk(int d, int K) {
  std::vector<double> v(static_cast<std::size_t>(d) * K, 0.0);
  for (int i = 0; i < K; ++i) v[static_cast<std::size_t>(i) * K + i] = 1.0;
  return Tensor({d, K}, std::move(v));
}

}  // namespace

SkillBasis qr_sign_stable(const Tensor& W) {
  if (W.rank() != 2) {
    throw std::invalid_argument("qr_sign_stable: W must be rank 2, got rank " +
                                std::to_string(W.rank()));
  }
  const int d = W.rows();
  const int K = W.cols();
  if (K < 1 || d < K) {
    throw std::invalid_argument("qr_sign_stable: need rows >= cols >= 1, got " +
                                std::to_string(d) + "x" + std::to_string(K));
  }

  Tensor M = W;
  std::vector<Tensor> reflectors;
  reflectors.reserve(K);
  for (int j = 0; j < K; ++j) {
    Tensor colj = cols(M, j, j + 1).reshaped({d});
    Tensor x = subvec(colj, j, d - j);

    double nrm2 = 0.0;
    for (double xv : x.data()) nrm2 += xv * xv;
    const double nrm = std::sqrt(nrm2);
    if (!(nrm > 1e-10)) {
      throw std::runtime_error("qr_sign_stable: rank-deficient input at column " +
                               std::to_string(j) + " (residual norm " + std::to_string(nrm) +
                               ")");
    }

    // Reflector u maps the residual column onto alpha * e_0 with
    // alpha = -sign(x_0)*||x||, the cancellation-free choice.
    Tensor xnorm = sqrt_t(sum_squares(x));
    Tensor alpha = mul_scalar(xnorm, -sgn_pos(x.at(0)));
    Tensor v = sub(x, zero_embed(alpha, d - j, 0));
    Tensor u = div_bcast(v, sqrt_t(sum_squares(v)));
    Tensor upad = zero_embed(u, d, j);
    reflectors.push_back(upad);
    M = reflect_apply(M, upad);
  }

  // Q = H_0 ... H_{K-1} applied to the first K columns of the identity;
  // reflectors go on in reverse so the product order matches.
  Tensor Q = eye_dk(d, K);
  for (int j = K - 1; j >= 0; --j) Q = reflect_apply(Q, reflectors[j]);

  std::vector<double> signs(K);
  std::vector<double> dmat(static_cast<std::size_t>(K) * K, 0.0);
  std::vector<double> uvals(static_cast<std::size_t>(K) * K, 0.0);
  for (int j = 0; j < K; ++j) {
    signs[j] = sgn_pos(M.at(j, j));
    dmat[static_cast<std::size_t>(j) * K + j] = signs[j];
    for (int i = 0; i <= j; ++i) uvals[static_cast<std::size_t>(i) * K + j] = M.at(i, j);
  }

  SkillBasis out;
  out.B = matmul(Q, Tensor({K, K}, std::move(dmat)));
  out.U = Tensor({K, K}, std::move(uvals));
  out.D = std::move(signs);
  return out;
}

BasisNet BasisNet::init(int d_s, int d, int K, int hidden, Rng& rng) {
  BasisNet bn;
  bn.net = nn::MLP::init({d_s, hidden, hidden, d * K}, rng);
  bn.d = d;
  bn.K = K;
  return bn;
}

Tensor BasisNet::unconstrained(const Tensor& s) const {
  if (s.rank() != 1) {
    throw std::invalid_argument("BasisNet: state must be rank 1, got rank " +
                                std::to_string(s.rank()));
  }
  Tensor y = net.forward(s.reshaped({1, s.numel()}));
  return y.reshaped({d, K});
}

Tensor BasisNet::unconstrained_batch(const Tensor& S) const {
  if (S.rank() != 2) {
    throw std::invalid_argument("BasisNet: state batch must be rank 2, got rank " +
                                std::to_string(S.rank()));
  }
  return net.forward(S);
}

SkillBasis BasisNet::forward(const Tensor& s) const {
  Tensor W = unconstrained(s);
  try {
    return qr_sign_stable(W);
  } catch (const std::runtime_error&) {
    // Degenerate W(s): perturb once with a fixed-seed jitter and retry.
    Rng jrng(0x62617369736a6974ULL);
    std::vector<double> eps(static_cast<std::size_t>(d) * K);
    for (double& e : eps) e = 1e-8 * jrng.normal();
    return qr_sign_stable(add(W, Tensor({d, K}, std::move(eps))));
  }
}

BasisNet BasisNet::watched(Tape& tape) const {
  BasisNet bn;
  bn.net = net.watched(tape);
  bn.d = d;
  bn.K = K;
  return bn;
}

void BasisNet::collect(const std::string& prefix, nn::ParamRefs& out) {
  net.collect(prefix, out);
}

Tensor decode_action(const Tensor& B, const Tensor& g, const Tensor& z) {
  if (B.rank() != 2 || g.rank() != 1 || z.rank() != 1 || g.numel() != B.cols() ||
      z.numel() != B.cols()) {
    throw std::invalid_argument("decode_action: need B [d,K], g [K], z [K]");
  }
  Tensor gz = mul(g, z).reshaped({B.cols(), 1});
  return matmul(B, gz).reshaped({B.rows()});
}

CoeffTargets coeff_targets(const Tensor& B, const Tensor& a, const Tensor& g_mean, double eps) {
  if (B.rank() != 2 || a.rank() != 1 || g_mean.rank() != 1 || a.numel() != B.rows() ||
      g_mean.numel() != B.cols()) {
    throw std::invalid_argument("coeff_targets: need B [d,K], a [d], g_mean [K]");
  }
  if (!(eps > 0.0)) {
    throw std::invalid_argument("coeff_targets: eps must be positive, got " +
                                std::to_string(eps));
  }
  const int K = B.cols();
  Tensor acol = a.reshaped({a.numel(), 1});
  Tensor denom = add_scalar(g_mean, eps);

  CoeffTargets out;
  out.z_sg = divide(matmul(transpose(stop_gradient(B)), acol).reshaped({K}), denom);
  out.z_rec = divide(matmul(transpose(B), acol).reshaped({K}), denom);
  return out;
}

}  // namespace smp
