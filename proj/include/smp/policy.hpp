// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "smp/basis.hpp"
#include "smp/diffusion.hpp"
#include "smp/gates.hpp"
#include "smp/nn.hpp"
#include "smp/rng.hpp"
#include "smp/tensor.hpp"

namespace smp {

// Architecture sizes; everything an init needs besides the seed.
struct PolicyDims {
  int d_s = 22;
  int d = 6;
  int K = 6;
  int H = 1;  // action chunk horizon
  int basis_hidden = 128;
  int gate_hidden = 64;
  int expert_hidden = 64;
  int temb_dim = 64;
  int diff_steps = 50;
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

// Optimization-time knobs. Loss weights default to the unweighted sum; the
// freeze flags drop whole components from the update (checked to never freeze
// everything that a nonzero loss touches).
struct TrainConfig {
  double sigma_a = 0.1;  // reconstruction std, sigma_a^2 << 1
  double eps = 1e-3;     // coefficient-target denominator floor
  double lr = 1e-5;
  int batch_size = 16;
  long long total_steps = 0;
  std::uint64_t seed = 0;
  double w_coeff = 1.0;
  double w_recon = 1.0;
  double w_gate = 1.0;
  double w_align = 1.0;
  double anneal_frac = 0.2;  // kappa ramp fraction of total_steps
  bool freeze_basis = false;
  bool freeze_experts = false;
  bool freeze_posterior = false;
  bool freeze_usage = false;
  bool freeze_router = false;
  bool align_stop_posterior = false;  // router distillation mode
  double align_temp = 1.0;
  int metric_every = 50;
  long long checkpoint_every = 1000;
  std::string checkpoint_dir;  // empty: no periodic checkpoints

  void validate() const;  // throws std::invalid_argument
};

// The full parameter set: state-conditioned basis, the three gate
// amortizers, and the per-expert denoisers, plus the fixed noise schedule
// and gate hyperparameters.
struct SkillPolicy {
  BasisNet basis;
  GateAmortizer gates;
  ExpertDenoiser experts;
  DiffusionSchedule schedule;
  PolicyDims dims;
  GateHyper hyper;
  TrainConfig config;

  static SkillPolicy init(const PolicyDims& dims, const GateHyper& hyper,
                          const TrainConfig& config, Rng& rng);

  // Canonical named parameters, name-sorted. Names are stable across runs
  // ("basis.l0.W", "gates.router.l1.b", "experts.e3.l0.W", ...).
  nn::ParamRefs params();
  std::map<std::string, Tensor*> param_map();

  // Copy whose parameters are leaf views on `tape`; buffers shared.
  SkillPolicy watched(Tape& tape) const;

  // Cross-component agreement (K, d_s, schedule) and parameter finiteness.
  void validate() const;  // throws std::invalid_argument

  int total_param_count();
};

}  // namespace smp
