// SPDX-License-Identifier: Apache-2.0
#include "smp/gates.hpp"

#include <stdexcept>
#include <string>

namespace smp {

namespace {

void require_positive_conc(const Tensor& c, const char* who) {
  if (c.rank() != 1 || c.numel() < 1) {
    throw std::invalid_argument(std::string(who) + ": concentrations must be a nonempty vector");
  }
  for (int i = 0; i < c.numel(); ++i) {
    if (!(c.at(i) > 0.0)) {
      throw std::invalid_argument(std::string(who) + ": non-positive concentration " +
                                  std::to_string(c.at(i)) + " at index " + std::to_string(i));
    }
  }
}

Tensor row_vec(const Tensor& m, int i) { return row(m, i).reshaped({m.cols()}); }

}  // namespace

Tensor conc_positive(const Tensor& raw) { return add_scalar(softplus(raw), 1e-4); }

Tensor dirichlet_mean(const Tensor& conc) {
  require_positive_conc(conc, "dirichlet_mean");
  return div_bcast(conc, sum_all(conc));
}

Tensor dirichlet_kl(const Tensor& q, const Tensor& p) {
  require_positive_conc(q, "dirichlet_kl");
  require_positive_conc(p, "dirichlet_kl");
  if (q.numel() != p.numel()) {
    throw std::invalid_argument("dirichlet_kl: dimension mismatch " + std::to_string(q.numel()) +
                                " vs " + std::to_string(p.numel()));
  }
  Tensor sq = sum_all(q);
  Tensor head = sub(lgamma_t(sq), lgamma_t(sum_all(p)));
  Tensor body = sum_all(sub(lgamma_t(q), lgamma_t(p)));
  Tensor centered = add_bcast(digamma_t(q), neg(digamma_t(sq)));
  Tensor cross = sum_all(mul(sub(q, p), centered));
  return add(sub(head, body), cross);
}

Tensor sticky_concentration(const Tensor& g_prev, const Tensor& theta_mean, double kappa,
                            double alpha0) {
  if (g_prev.rank() != 1 || theta_mean.rank() != 1 || g_prev.numel() != theta_mean.numel()) {
    throw std::invalid_argument("sticky_concentration: g_prev and theta_mean must be equal-length vectors");
  }
  if (kappa == 0.0 && alpha0 == 0.0) {
    throw std::invalid_argument("sticky_concentration: kappa and alpha0 are both zero; prior degenerates");
  }
  return add(mul_scalar(g_prev, kappa), mul_scalar(theta_mean, alpha0));
}

double kappa_anneal(double kappa, long long step, long long total_steps) {
  return kappa_anneal(kappa, step, total_steps, 0.2);
}

double kappa_anneal(double kappa, long long step, long long total_steps, double ramp_frac) {
  if (total_steps <= 0 || ramp_frac <= 0.0) return kappa;
  const double ramp = ramp_frac * static_cast<double>(total_steps);
  if (static_cast<double>(step) >= ramp) return kappa;
  const double frac = static_cast<double>(step) / ramp;
  const double lo = kappa / 10.0;
  return lo + (kappa - lo) * frac;
}

GateAmortizer GateAmortizer::init(int d_s, int d, int K, int hidden, Rng& rng) {
  GateAmortizer ga;
  ga.posterior = nn::MLP::init({d_s + d, hidden, hidden, K}, rng);
  ga.usage = nn::MLP::init({d_s + d, hidden, hidden, K}, rng);
  ga.router = nn::MLP::init({d_s, hidden, hidden, K}, rng);
  ga.K = K;
  return ga;
}

Tensor GateAmortizer::posterior_conc(const Tensor& SA) const {
  return conc_positive(posterior.forward(SA));
}

Tensor GateAmortizer::usage_conc(const Tensor& SA) const {
  Tensor pooled = mean_rows(SA);
  return conc_positive(usage.forward(pooled)).reshaped({K});
}

Tensor GateAmortizer::router_conc(const Tensor& S) const {
  return conc_positive(router.forward(S));
}

GateAmortizer GateAmortizer::watched(Tape& tape) const {
  GateAmortizer ga;
  ga.posterior = posterior.watched(tape);
  ga.usage = usage.watched(tape);
  ga.router = router.watched(tape);
  ga.K = K;
  return ga;
}

void GateAmortizer::collect(const std::string& prefix, nn::ParamRefs& out) {
  posterior.collect(prefix + ".posterior", out);
  usage.collect(prefix + ".usage", out);
  router.collect(prefix + ".router", out);
}

Tensor gate_loss(const Tensor& post_conc, const Tensor& usage_conc, const GateHyper& hyper,
                 double kappa_eff) {
  if (post_conc.rank() != 2 || post_conc.rows() < 1) {
    throw std::invalid_argument("gate_loss: need at least one posterior step, [T,K]");
  }
  const int T = post_conc.rows();
  const int K = post_conc.cols();
  if (usage_conc.rank() != 1 || usage_conc.numel() != K) {
    throw std::invalid_argument("gate_loss: usage concentration length " +
                                std::to_string(usage_conc.numel()) + " does not match K=" +
                                std::to_string(K));
  }
  if (!(hyper.alpha > 0.0)) {
    throw std::invalid_argument("gate_loss: alpha must be positive, got " +
                                std::to_string(hyper.alpha));
  }

  Tensor theta_mean = dirichlet_mean(usage_conc);
  Tensor loss = dirichlet_kl(usage_conc, Tensor::full({K}, hyper.alpha));
  if (hyper.alpha0 > 0.0) {
    loss = add(loss, dirichlet_kl(row_vec(post_conc, 0), mul_scalar(theta_mean, hyper.alpha0)));
  }
  for (int t = 1; t < T; ++t) {
    Tensor g_prev = dirichlet_mean(row_vec(post_conc, t - 1));
    Tensor prior = sticky_concentration(g_prev, theta_mean, kappa_eff, hyper.alpha0);
    loss = add(loss, dirichlet_kl(row_vec(post_conc, t), prior));
  }
  return loss;
}

Tensor router_align_loss(const Tensor& post_conc, const Tensor& router_conc, bool stop_posterior,
                         double temp) {
  if (post_conc.rank() != 2 || router_conc.rank() != 2 ||
      post_conc.shape() != router_conc.shape()) {
    throw std::invalid_argument("router_align_loss: posterior and router sequences must share shape [T,K]");
  }
  if (!(temp > 0.0)) {
    throw std::invalid_argument("router_align_loss: temperature must be positive, got " +
                                std::to_string(temp));
  }
  Tensor loss = Tensor::scalar(0.0);
  for (int t = 0; t < post_conc.rows(); ++t) {
    Tensor q = row_vec(post_conc, t);
    if (temp != 1.0) q = exp_t(mul_scalar(log_t(q), temp));
    if (stop_posterior) q = stop_gradient(q);
    loss = add(loss, dirichlet_kl(q, row_vec(router_conc, t)));
  }
  return loss;
}

}  // namespace smp
