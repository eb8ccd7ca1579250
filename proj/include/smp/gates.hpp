// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "smp/nn.hpp"
#include "smp/tensor.hpp"

namespace smp {

// Hyperparameters of the sticky Dirichlet gate chain: alpha spreads global
// usage, alpha0 anchors every gate to the usage mean, kappa carries the
// previous gate forward. kappa = 0 and alpha0 = 0 are ablation settings.
struct GateHyper {
  double alpha = 2.0;
  double alpha0 = 0.5;
  double kappa = 20.0;
};

// softplus + 1e-4 floor; maps raw network outputs to valid concentrations.
Tensor conc_positive(const Tensor& raw);

// Mean of Dir(conc): conc / sum(conc). Accepts rank-1 [K].
Tensor dirichlet_mean(const Tensor& conc);

// Closed-form KL(Dir(q) || Dir(p)); differentiable in both arguments.
// Rejects non-positive concentrations.
Tensor dirichlet_kl(const Tensor& q, const Tensor& p);

// kappa * g_prev + alpha0 * theta_mean. Rejects the all-zero case
// (kappa = 0 and alpha0 = 0 simultaneously).
Tensor sticky_concentration(const Tensor& g_prev, const Tensor& theta_mean, double kappa,
                            double alpha0);

// Linear ramp of the stickiness from kappa/10 to kappa over the first
// ramp_frac of training (default 20%); constant kappa afterwards (and when
// total <= 0 or ramp_frac <= 0).
double kappa_anneal(double kappa, long long step, long long total_steps);
double kappa_anneal(double kappa, long long step, long long total_steps, double ramp_frac);

// Three Dirichlet amortizers. The router is wired to states only; it can
// never read an action.
struct GateAmortizer {
  nn::MLP posterior;  // (s_t || a_t) -> K raw
  nn::MLP usage;      // mean-pooled (s || a) -> K raw
  nn::MLP router;     // s_t -> K raw
  int K = 0;

  static GateAmortizer init(int d_s, int d, int K, int hidden, Rng& rng);

  // SA is [T, d_s + d]; rows are per-step concentrations [T, K].
  Tensor posterior_conc(const Tensor& SA) const;
  // Mean-pools SA over steps, then one forward; returns rank-1 [K].
  Tensor usage_conc(const Tensor& SA) const;
  // S is [T, d_s]; rows are per-step router concentrations [T, K].
  Tensor router_conc(const Tensor& S) const;

  GateAmortizer watched(Tape& tape) const;
  void collect(const std::string& prefix, nn::ParamRefs& out);
};

// Gate chain loss: usage-vs-prior KL, initial-gate KL, and the sticky
// transition KLs, all in closed form on posterior means. kappa_eff is the
// (possibly annealed) stickiness actually applied. In the zero-anchor
// ablation (alpha0 = 0) the initial-gate term has a degenerate prior and is
// dropped; the transition terms survive on kappa alone.
Tensor gate_loss(const Tensor& post_conc /*[T,K]*/, const Tensor& usage_conc /*[K]*/,
                 const GateHyper& hyper, double kappa_eff);

// Sum over steps of KL(posterior_t || router_t). stop_posterior turns the
// term into pure distillation (no gradient into the posterior); temp != 1
// sharpens posterior concentrations by an elementwise exponent first.
Tensor router_align_loss(const Tensor& post_conc /*[T,K]*/, const Tensor& router_conc /*[T,K]*/,
                         bool stop_posterior = false, double temp = 1.0);

}  // namespace smp
