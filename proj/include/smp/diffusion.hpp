// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "smp/nn.hpp"
#include "smp/rng.hpp"
#include "smp/tensor.hpp"

namespace smp {

// Linear variance schedule with cached cumulative products.
struct DiffusionSchedule {
  int steps = 0;
  std::vector<double> beta;       // [steps], each in (0,1)
  std::vector<double> alpha_bar;  // [steps], strictly decreasing products of (1-beta)
};

// Rejects beta bounds outside 0 < start <= end < 1 or steps < 1.
DiffusionSchedule make_schedule(int steps, double beta_start, double beta_end);

// Sinusoidal embedding of a timestep index; dim must be even and >= 2.
// Constant tensor: the embedding is never differentiated.
Tensor timestep_embedding(int tau, int dim);

// Forward noising z^(tau) = sqrt(ab_tau) z0 + sqrt(1 - ab_tau) eps.
// tau is 1-based in [1, steps].
Tensor q_sample(const Tensor& z0, int tau, const Tensor& noise, const DiffusionSchedule& sched);

// K parameter-disjoint scalar denoisers; expert i consumes
// [z_i^(tau), timestep embedding, state] rows.
struct ExpertDenoiser {
  std::vector<nn::MLP> experts;
  int K = 0;
  int d_s = 0;
  int temb_dim = 0;

  static ExpertDenoiser init(int K, int d_s, int temb_dim, int hidden, Rng& rng);

  // inputs: [T, 1 + temb_dim + d_s] -> [T, 1] noise predictions.
  Tensor forward_expert(int i, const Tensor& inputs) const;

  ExpertDenoiser watched(Tape& tape) const;
  void collect(const std::string& prefix, nn::ParamRefs& out);
  int expert_param_count() const;  // parameters of one expert
};

// Pre-drawn diffusion training batch. Everything here is constant data: the
// targets were stop-gradiented on entry, so the loss can only reach expert
// parameters. Draw order (fixed for determinism): all taus first (t-major,
// expert-minor when per-expert), then the noise matrix row-major.
struct CoeffBatch {
  std::vector<Tensor> inputs;  // per expert: [T, 1 + temb_dim + d_s]
  Tensor noise;                // [T, K] targets
  std::vector<int> taus;       // [T] when shared, [T*K] t-major otherwise
  bool shared_tau = true;
  int T = 0;
  int K = 0;
};

CoeffBatch make_coeff_batch(const Tensor& Z0 /*[T,K]*/, const Tensor& S /*[T,d_s]*/,
                            int temb_dim, const DiffusionSchedule& sched, Rng& rng,
                            bool shared_tau = true);

// (1/T) * sum over steps and experts of squared noise-prediction error; a
// zero-output expert contributes ~1 per coordinate, so an all-zero mixture
// scores ~K.
Tensor coeff_diffusion_loss(const ExpertDenoiser& ex, const CoeffBatch& batch);

// Masked ancestral sampling from z^(steps) ~ N(0,1), run independently per
// active expert with the stream derived(i); inactive coordinates are exactly
// zero. Posterior variance beta-tilde, so the final step (tau = 1) is
// deterministic. Rejects an empty active set.
std::vector<double> denoise_sample(const ExpertDenoiser& ex, const std::vector<double>& s,
                                   const std::vector<int>& active,
                                   const DiffusionSchedule& sched, const Rng& stream);

}  // namespace smp
