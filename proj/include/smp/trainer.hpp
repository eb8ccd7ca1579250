// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "smp/checkpoint.hpp"
#include "smp/dataset.hpp"
#include "smp/optim.hpp"
#include "smp/policy.hpp"
#include "smp/rng.hpp"
#include "smp/synthenv.hpp"

namespace smp {

struct LossReport {
  double coeff = 0.0;
  double recon = 0.0;
  double gate = 0.0;
  double align = 0.0;
  double total = 0.0;
  bool applied = false;  // false when the step was skipped (non-finite loss)
};

// Per-step metric callback: (1-based step, batch-mean losses).
using MetricSink = std::function<void(long long step, const LossReport& report)>;

// One optimization step on a batch of trajectories: per-trajectory losses
// (noise prediction on stop-gradient coefficient targets, reconstruction
// through the basis with posterior gate means, gate-chain KL, router
// alignment) are weighted per policy.config, averaged over the batch with a
// fixed reduction order, and applied with one optimizer update covering every
// unfrozen component. Zero-weight terms are never built, so their parameters
// receive neither gradient nor weight decay. A non-finite loss skips the step
// (diagnostic on stderr, parameters and counters untouched).
// anneal_step / anneal_total drive the kappa ramp; pass (0, 0) outside loops.
LossReport train_step(SkillPolicy& policy, AdamW& opt,
                      const std::vector<const Trajectory*>& batch, Rng& rng,
                      long long anneal_step, long long anneal_total);

// Fixed-budget loop with seeded epoch shuffling, metric emission every
// config.metric_every steps, and periodic checkpoints (config.checkpoint_every,
// into config.checkpoint_dir when nonempty). total_steps == 0 returns the
// initial state unchanged. The resume overload adopts `cfg` as the run config.
Checkpoint train_loop(const Dataset& data, const PolicyDims& dims, const GateHyper& hyper,
                      const TrainConfig& cfg, const MetricSink& sink = {});
Checkpoint train_loop(const Dataset& data, Checkpoint init, const TrainConfig& cfg,
                      const MetricSink& sink = {});

// Router-only fine-tuning: basis, experts, and the usage amortizer are frozen
// (bitwise, by exclusion from the update); the posterior joins the update only
// when unfreeze_posterior is set.
Checkpoint finetune_router(Checkpoint init, const Dataset& data, TrainConfig cfg,
                           bool unfreeze_posterior = false, const MetricSink& sink = {});

}  // namespace smp
