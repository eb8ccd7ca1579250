// SPDX-License-Identifier: Apache-2.0
#include "smp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "smp/basis.hpp"
#include "smp/diffusion.hpp"
#include "smp/gates.hpp"

namespace smp {
namespace {

// qr with the same one-shot jitter retry BasisNet::forward applies.
SkillBasis qr_with_retry(const Tensor& W, int d, int K) {
  try {
    return qr_sign_stable(W);
  } catch (const std::runtime_error&) {
    Rng jrng(0x62617369736a6974ULL);
    std::vector<double> noise(static_cast<std::size_t>(d * K));
    for (double& x : noise) x = 1e-8 * jrng.normal();
    Tensor jit({d, K}, std::move(noise));
    return qr_sign_stable(add(W, jit));
  }
}

struct TrajResult {
  double coeff = 0.0, recon = 0.0, gate = 0.0, align = 0.0, total = 0.0;
  bool finite = true;
  bool built = false;  // at least one loss term existed
  std::string error;   // nonempty when the forward itself failed
  std::map<std::string, std::vector<double>> grads;
};

bool frozen_name(const TrainConfig& cf, const std::string& name) {
  if (cf.freeze_basis && name.rfind("basis.", 0) == 0) return true;
  if (cf.freeze_experts && name.rfind("experts.", 0) == 0) return true;
  if (cf.freeze_posterior && name.rfind("gates.posterior.", 0) == 0) return true;
  if (cf.freeze_usage && name.rfind("gates.usage.", 0) == 0) return true;
  if (cf.freeze_router && name.rfind("gates.router.", 0) == 0) return true;
  return false;
}

TrajResult trajectory_losses(SkillPolicy& policy, const Trajectory& traj, Rng traj_rng,
                             double kappa_eff) {
  const TrainConfig& cf = policy.config;
  TrajResult res;

  Tape tape;
  TapeScope scope(tape);
  SkillPolicy wp = policy.watched(tape);

  auto [S, A] = traj_matrices(traj);
  const int T = S.rows();
  const int K = policy.dims.K;
  const int d = policy.dims.d;
  Tensor SA = concat_cols(S, A);

  Tensor post_conc = wp.gates.posterior_conc(SA);  // [T,K]

  const bool need_basis = cf.w_coeff > 0.0 || cf.w_recon > 0.0;
  std::vector<Tensor> z0_rows;
  std::vector<Tensor> recon_terms;
  if (need_basis) {
    Tensor Wb = wp.basis.unconstrained_batch(S);  // [T, d*K]
    z0_rows.reserve(static_cast<std::size_t>(T));
    recon_terms.reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
      Tensor Wt = row(Wb, t).reshaped({d, K});
      SkillBasis sb = qr_with_retry(Wt, d, K);
      Tensor g_t = dirichlet_mean(row(post_conc, t).reshaped({K}));
      Tensor a_t = row(A, t).reshaped({d});
      CoeffTargets ct = coeff_targets(sb.B, a_t, g_t, cf.eps);
      if (cf.w_coeff > 0.0) z0_rows.push_back(ct.z_sg);
      if (cf.w_recon > 0.0) {
        Tensor a_hat = decode_action(sb.B, g_t, ct.z_rec);
        recon_terms.push_back(sum_squares(sub(a_hat, a_t)));
      }
    }
  }

  std::vector<std::pair<double, Tensor>> terms;
  if (cf.w_coeff > 0.0) {
    CoeffBatch batch = make_coeff_batch(stack_rows(z0_rows), S, policy.dims.temb_dim,
                                        policy.schedule, traj_rng);
    Tensor l_coeff = coeff_diffusion_loss(wp.experts, batch);
    res.coeff = l_coeff.value();
    terms.emplace_back(cf.w_coeff, l_coeff);
  }
  if (cf.w_recon > 0.0) {
    Tensor acc = recon_terms[0];
    for (std::size_t i = 1; i < recon_terms.size(); ++i) acc = add(acc, recon_terms[i]);
    Tensor l_recon = mul_scalar(acc, 1.0 / (2.0 * cf.sigma_a * cf.sigma_a));
    res.recon = l_recon.value();
    terms.emplace_back(cf.w_recon, l_recon);
  }
  if (cf.w_gate > 0.0) {
    Tensor usage = wp.gates.usage_conc(SA);  // [K]
    Tensor l_gate = gate_loss(post_conc, usage, policy.hyper, kappa_eff);
    res.gate = l_gate.value();
    terms.emplace_back(cf.w_gate, l_gate);
  }
  if (cf.w_align > 0.0) {
    Tensor router = wp.gates.router_conc(S);  // [T,K]
    Tensor l_align =
        router_align_loss(post_conc, router, cf.align_stop_posterior, cf.align_temp);
    res.align = l_align.value();
    terms.emplace_back(cf.w_align, l_align);
  }
  if (terms.empty()) return res;
  res.built = true;

  Tensor total = mul_scalar(terms[0].second, terms[0].first);
  for (std::size_t i = 1; i < terms.size(); ++i)
    total = add(total, mul_scalar(terms[i].second, terms[i].first));
  res.total = total.value();
  if (!std::isfinite(res.total) || !std::isfinite(res.coeff) || !std::isfinite(res.recon) ||
      !std::isfinite(res.gate) || !std::isfinite(res.align)) {
    res.finite = false;
    return res;
  }

  tape.backward(total);
  for (auto& [name, t] : wp.params()) {
    if (frozen_name(cf, name)) continue;
    res.grads.emplace(name, tape.grad(*t));
  }
  return res;
}

}  // namespace

LossReport train_step(SkillPolicy& policy, AdamW& opt,
                      const std::vector<const Trajectory*>& batch, Rng& rng,
                      long long anneal_step, long long anneal_total) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  for (const Trajectory* tr : batch) {
    if (tr == nullptr || tr->steps.empty())
      throw std::invalid_argument("train_step: null or empty trajectory in batch");
    if (static_cast<int>(tr->steps.front().state.size()) != policy.dims.d_s ||
        static_cast<int>(tr->steps.front().action.size()) != policy.dims.d)
      throw std::invalid_argument("train_step: trajectory dims disagree with policy");
  }
  const double kappa_eff =
      kappa_anneal(policy.hyper.kappa, anneal_step, anneal_total, policy.config.anneal_frac);
  const std::uint64_t salt = rng.next_u64();
  const int B = static_cast<int>(batch.size());
  std::vector<TrajResult> results(static_cast<std::size_t>(B));

// Exceptions must not escape the parallel region; a failed forward (e.g. a
// rank-deficient basis from non-finite parameters) skips the step like any
// other non-finite loss.
#pragma omp parallel for schedule(dynamic)
  for (int b = 0; b < B; ++b) {
    TrajResult& slot = results[static_cast<std::size_t>(b)];
    try {
      Rng salted(salt);
      slot = trajectory_losses(policy, *batch[static_cast<std::size_t>(b)],
                               salted.derived(static_cast<std::uint64_t>(b)), kappa_eff);
    } catch (const std::exception& e) {
      slot.finite = false;
      slot.error = e.what();
    }
  }

  LossReport rep;
  bool built = false;
  for (const TrajResult& r : results) {
    if (!r.finite) {
      std::fprintf(stderr, "train_step: %s, step skipped\n",
                   r.error.empty() ? "non-finite loss" : r.error.c_str());
      return rep;
    }
    rep.coeff += r.coeff;
    rep.recon += r.recon;
    rep.gate += r.gate;
    rep.align += r.align;
    rep.total += r.total;
    built = built || r.built;
  }
  const double inv = 1.0 / static_cast<double>(B);
  rep.coeff *= inv;
  rep.recon *= inv;
  rep.gate *= inv;
  rep.align *= inv;
  rep.total *= inv;
  if (!built) {  // zero objective: nothing to update
    rep.applied = true;
    return rep;
  }

  // Fixed-order reduction: trajectory grads merge in batch order.
  std::map<std::string, std::vector<double>> grads;
  for (const TrajResult& r : results) {
    for (const auto& [name, g] : r.grads) {
      auto [it, fresh] = grads.try_emplace(name, g.size(), 0.0);
      std::vector<double>& acc = it->second;
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    }
  }
  for (auto& [name, g] : grads)
    for (double& x : g) x *= inv;

  std::map<std::string, Tensor*> params;
  for (auto& [name, t] : policy.param_map())
    if (grads.count(name)) params.emplace(name, t);
  rep.applied = opt.step(params, grads);
  return rep;
}

Checkpoint train_loop(const Dataset& data, const PolicyDims& dims, const GateHyper& hyper,
                      const TrainConfig& cfg, const MetricSink& sink) {
  cfg.validate();
  Rng master(cfg.seed);
  Rng param_rng = master.derived(1);
  Checkpoint ck;
  ck.policy = SkillPolicy::init(dims, hyper, cfg, param_rng);
  AdamWConfig oc;
  oc.lr = cfg.lr;
  ck.opt = AdamW(oc);
  ck.rng = master.derived(2);
  return train_loop(data, std::move(ck), cfg, sink);
}

Checkpoint train_loop(const Dataset& data, Checkpoint init, const TrainConfig& cfg,
                      const MetricSink& sink) {
  cfg.validate();
  init.policy.config = cfg;
  init.policy.validate();
  init.opt.set_lr(cfg.lr);
  if (data.trajs.empty()) throw std::invalid_argument("train_loop: empty dataset");
  if (data.d_s != init.policy.dims.d_s || data.d != init.policy.dims.d)
    throw std::invalid_argument("train_loop: dataset dims disagree with policy");

  const int n = static_cast<int>(data.trajs.size());
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  int cursor = n;  // forces a shuffle before the first batch

  for (long long step = 0; step < cfg.total_steps; ++step) {
    std::vector<const Trajectory*> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch_size));
    for (int i = 0; i < cfg.batch_size; ++i) {
      if (cursor == n) {
        for (int j = n - 1; j > 0; --j) {
          int k = init.rng.uniform_int(0, j);
          std::swap(perm[static_cast<std::size_t>(j)], perm[static_cast<std::size_t>(k)]);
        }
        cursor = 0;
      }
      batch.push_back(&data.trajs[static_cast<std::size_t>(perm[static_cast<std::size_t>(cursor++)])]);
    }
    LossReport rep = train_step(init.policy, init.opt, batch, init.rng, step, cfg.total_steps);
    if (sink && ((step + 1) % cfg.metric_every == 0 || step == 0)) sink(step + 1, rep);
    if (!cfg.checkpoint_dir.empty() && (step + 1) % cfg.checkpoint_every == 0)
      save_checkpoint(init, cfg.checkpoint_dir + "/ckpt_" + std::to_string(step + 1) + ".smp");
  }
  return init;
}

Checkpoint finetune_router(Checkpoint init, const Dataset& data, TrainConfig cfg,
                           bool unfreeze_posterior, const MetricSink& sink) {
  cfg.freeze_basis = true;
  cfg.freeze_experts = true;
  cfg.freeze_usage = true;
  cfg.freeze_posterior = !unfreeze_posterior;
  cfg.freeze_router = false;
  return train_loop(data, std::move(init), cfg, sink);
}

}  // namespace smp
