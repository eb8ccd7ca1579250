// SPDX-License-Identifier: Apache-2.0
#include "smp/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace smp {

DiffusionSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) {
    throw std::invalid_argument("make_schedule: steps must be >= 1, got " +
                                std::to_string(steps));
  }
  if (!(beta_start > 0.0) || !(beta_end < 1.0) || !(beta_start <= beta_end)) {
    throw std::invalid_argument("make_schedule: need 0 < beta_start <= beta_end < 1, got [" +
                                std::to_string(beta_start) + ", " + std::to_string(beta_end) +
                                "]");
  }
  DiffusionSchedule sched;
  sched.steps = steps;
  sched.beta.resize(steps);
  sched.alpha_bar.resize(steps);
  double prod = 1.0;
  for (int i = 0; i < steps; ++i) {
    double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    sched.beta[i] = beta_start + (beta_end - beta_start) * frac;
    prod *= 1.0 - sched.beta[i];
    sched.alpha_bar[i] = prod;
  }
  return sched;
}

Tensor timestep_embedding(int tau, int dim) {
  if (dim < 2 || dim % 2 != 0) {
    throw std::invalid_argument("timestep_embedding: dim must be even and >= 2, got " +
                                std::to_string(dim));
  }
  const int half = dim / 2;
  std::vector<double> v(dim);
  for (int i = 0; i < half; ++i) {
    double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
    v[2 * i] = std::sin(tau * freq);
    v[2 * i + 1] = std::cos(tau * freq);
  }
  return Tensor({dim}, std::move(v));
}

namespace {

void require_tau(int tau, const DiffusionSchedule& sched, const char* who) {
  if (tau < 1 || tau > sched.steps) {
    throw std::invalid_argument(std::string(who) + ": tau " + std::to_string(tau) +
                                " outside [1, " + std::to_string(sched.steps) + "]");
  }
}

}  // namespace

Tensor q_sample(const Tensor& z0, int tau, const Tensor& noise, const DiffusionSchedule& sched) {
  require_tau(tau, sched, "q_sample");
  if (z0.shape() != noise.shape()) {
    throw std::invalid_argument("q_sample: z0 and noise must share shape");
  }
  const double ab = sched.alpha_bar[tau - 1];
  return add(mul_scalar(z0, std::sqrt(ab)), mul_scalar(noise, std::sqrt(1.0 - ab)));
}

ExpertDenoiser ExpertDenoiser::init(int K, int d_s, int temb_dim, int hidden, Rng& rng) {
  if (K < 1) throw std::invalid_argument("ExpertDenoiser: K must be >= 1");
  ExpertDenoiser ex;
  ex.K = K;
  ex.d_s = d_s;
  ex.temb_dim = temb_dim;
  ex.experts.reserve(K);
  for (int i = 0; i < K; ++i) {
    ex.experts.push_back(nn::MLP::init({1 + temb_dim + d_s, hidden, hidden, 1}, rng));
  }
  return ex;
}

Tensor ExpertDenoiser::forward_expert(int i, const Tensor& inputs) const {
  if (i < 0 || i >= K) {
    throw std::invalid_argument("ExpertDenoiser: expert index " + std::to_string(i) +
                                " outside [0, " + std::to_string(K) + ")");
  }
  return experts[static_cast<std::size_t>(i)].forward(inputs);
}

ExpertDenoiser ExpertDenoiser::watched(Tape& tape) const {
  ExpertDenoiser ex;
  ex.K = K;
  ex.d_s = d_s;
  ex.temb_dim = temb_dim;
  ex.experts.reserve(experts.size());
  for (const auto& e : experts) ex.experts.push_back(e.watched(tape));
  return ex;
}

void ExpertDenoiser::collect(const std::string& prefix, nn::ParamRefs& out) {
  for (std::size_t i = 0; i < experts.size(); ++i) {
    experts[i].collect(prefix + ".e" + std::to_string(i), out);
  }
}

int ExpertDenoiser::expert_param_count() const {
  return experts.empty() ? 0 : experts.front().param_count();
}

CoeffBatch make_coeff_batch(const Tensor& Z0, const Tensor& S, int temb_dim,
                            const DiffusionSchedule& sched, Rng& rng, bool shared_tau) {
  if (Z0.rank() != 2 || S.rank() != 2 || Z0.rows() != S.rows()) {
    throw std::invalid_argument("make_coeff_batch: Z0 [T,K] and S [T,d_s] must share T");
  }
  const int T = Z0.rows();
  const int K = Z0.cols();
  const int d_s = S.cols();

  CoeffBatch batch;
  batch.shared_tau = shared_tau;
  batch.T = T;
  batch.K = K;
  batch.taus.resize(shared_tau ? T : static_cast<std::size_t>(T) * K);
  for (int& tau : batch.taus) tau = rng.uniform_int(1, sched.steps);
  std::vector<double> eps(static_cast<std::size_t>(T) * K);
  for (double& e : eps) e = rng.normal();
  batch.noise = Tensor({T, K}, std::move(eps));

  // Targets enter as plain data; the basis and gate paths stay unreachable.
  Tensor z0 = stop_gradient(Z0);
  Tensor s_const = stop_gradient(S);

  batch.inputs.reserve(K);
  for (int i = 0; i < K; ++i) {
    std::vector<double> in(static_cast<std::size_t>(T) * (1 + temb_dim + d_s));
    for (int t = 0; t < T; ++t) {
      const int tau = batch.taus[shared_tau ? t : static_cast<std::size_t>(t) * K + i];
      const double ab = sched.alpha_bar[tau - 1];
      double* dst = in.data() + static_cast<std::size_t>(t) * (1 + temb_dim + d_s);
      dst[0] = std::sqrt(ab) * z0.at(t, i) + std::sqrt(1.0 - ab) * batch.noise.at(t, i);
      Tensor emb = timestep_embedding(tau, temb_dim);
      for (int j = 0; j < temb_dim; ++j) dst[1 + j] = emb.at(j);
      for (int j = 0; j < d_s; ++j) dst[1 + temb_dim + j] = s_const.at(t, j);
    }
    batch.inputs.push_back(Tensor({T, 1 + temb_dim + d_s}, std::move(in)));
  }
  return batch;
}

Tensor coeff_diffusion_loss(const ExpertDenoiser& ex, const CoeffBatch& batch) {
  if (batch.K != ex.K) {
    throw std::invalid_argument("coeff_diffusion_loss: batch K " + std::to_string(batch.K) +
                                " does not match expert count " + std::to_string(ex.K));
  }
  Tensor total = Tensor::scalar(0.0);
  for (int i = 0; i < ex.K; ++i) {
    Tensor pred = ex.forward_expert(i, batch.inputs[static_cast<std::size_t>(i)]);
    Tensor target = cols(batch.noise, i, i + 1);
    total = add(total, sum_squares(sub(pred, target)));
  }
  return mul_scalar(total, 1.0 / batch.T);
}

std::vector<double> denoise_sample(const ExpertDenoiser& ex, const std::vector<double>& s,
                                   const std::vector<int>& active,
                                   const DiffusionSchedule& sched, const Rng& stream) {
  if (active.empty()) {
    throw std::invalid_argument("denoise_sample: active expert set is empty");
  }
  if (static_cast<int>(s.size()) != ex.d_s) {
    throw std::invalid_argument("denoise_sample: state size " + std::to_string(s.size()) +
                                " does not match d_s " + std::to_string(ex.d_s));
  }
  std::vector<double> z0(static_cast<std::size_t>(ex.K), 0.0);
  const int in_dim = 1 + ex.temb_dim + ex.d_s;
  for (int i : active) {
    if (i < 0 || i >= ex.K) {
      throw std::invalid_argument("denoise_sample: active index " + std::to_string(i) +
                                  " outside [0, " + std::to_string(ex.K) + ")");
    }
    Rng erng = stream.derived(static_cast<std::uint64_t>(i));
    double z = erng.normal();
    for (int tau = sched.steps; tau >= 1; --tau) {
      std::vector<double> in(static_cast<std::size_t>(in_dim));
      in[0] = z;
      Tensor emb = timestep_embedding(tau, ex.temb_dim);
      for (int j = 0; j < ex.temb_dim; ++j) in[1 + j] = emb.at(j);
      for (int j = 0; j < ex.d_s; ++j) in[1 + ex.temb_dim + j] = s[static_cast<std::size_t>(j)];
      double eps_hat = ex.forward_expert(i, Tensor({1, in_dim}, std::move(in))).at(0, 0);

      const double beta = sched.beta[tau - 1];
      const double ab = sched.alpha_bar[tau - 1];
      const double ab_prev = tau > 1 ? sched.alpha_bar[tau - 2] : 1.0;
      double mean = (z - beta / std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(1.0 - beta);
      if (tau > 1) {
        double sigma = std::sqrt((1.0 - ab_prev) / (1.0 - ab) * beta);
        mean += sigma * erng.normal();
      }
      z = mean;
    }
    z0[static_cast<std::size_t>(i)] = z;
  }
  return z0;
}

}  // namespace smp
