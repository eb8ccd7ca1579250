// SPDX-License-Identifier: Apache-2.0
#include "smp/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "smp/checkpoint.hpp"
#include "smp/config.hpp"
#include "smp/dataset.hpp"
#include "smp/inference.hpp"
#include "smp/metrics.hpp"
#include "smp/trainer.hpp"

namespace smp {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_or_nan(const std::vector<double>& xs) {
  if (xs.empty()) return kNaN;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

// Every command materializes its resolved configuration next to its outputs.
void echo_config(const ExperimentConfig& cfg, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir + "/config_resolved.txt", render_config(cfg));
}

void ensure_parent(const std::string& path) {
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

Dataset obtain_dataset(const ExperimentConfig& cfg) {
  if (!cfg.data_path.empty()) return load_dataset(cfg.data_path);
  return make_dataset(cfg.data_tasks, cfg.data_demos_per_task,
                      static_cast<std::uint64_t>(cfg.data_seed), cfg.env);
}

Checkpoint load_required_ckpt(const ExperimentConfig& cfg, const char* who) {
  if (cfg.ckpt_path.empty())
    throw std::invalid_argument(std::string(who) + ": io.ckpt must name a trained checkpoint");
  return load_checkpoint(cfg.ckpt_path);
}

// ---------------------------------------------------------------- training

const std::vector<std::string> kTrainCols = {"coeff", "recon", "gate",
                                             "align", "total", "applied"};

MetricsRow train_row(const std::string& run, long long step, const LossReport& r) {
  MetricsRow row;
  row.run = run;
  row.index = step;
  row.values = {{"coeff", r.coeff}, {"recon", r.recon},
                {"gate", r.gate},   {"align", r.align},
                {"total", r.total}, {"applied", r.applied ? 1.0 : 0.0}};
  return row;
}

enum class TrainKind { Fresh, Finetune, FinetuneRouter };

int run_training(const ExperimentConfig& cfg, TrainKind kind, bool unfreeze_posterior) {
  const char* run_name = kind == TrainKind::Fresh          ? "train"
                         : kind == TrainKind::Finetune     ? "finetune"
                                                           : "finetune-router";
  Dataset data = obtain_dataset(cfg);
  echo_config(cfg, cfg.out_dir);
  TrainConfig tc = cfg.train;
  tc.checkpoint_dir = cfg.out_dir;

  std::vector<MetricsRow> rows;
  MetricSink sink = [&](long long step, const LossReport& r) {
    rows.push_back(train_row(run_name, step, r));
  };

  Checkpoint ck = [&] {
    switch (kind) {
      case TrainKind::Fresh:
        if (!cfg.ckpt_path.empty())
          return train_loop(data, load_checkpoint(cfg.ckpt_path), tc, sink);
        return train_loop(data, cfg.dims, cfg.gate, tc, sink);
      case TrainKind::Finetune:
        return train_loop(data, load_required_ckpt(cfg, "finetune"), tc, sink);
      default:
        return finetune_router(load_required_ckpt(cfg, "finetune-router"), data, tc,
                               unfreeze_posterior, sink);
    }
  }();

  emit_csv(kTrainCols, rows, cfg.out_dir + "/train_metrics.csv");
  emit_jsonl(kTrainCols, rows, cfg.out_dir + "/train_metrics.jsonl");
  std::string final_path = cfg.out_dir + "/final.smp";
  save_checkpoint(ck, final_path);
  double last_total = rows.empty() ? kNaN : rows.back().values[4].second;
  std::printf("%s: %lld steps on %zu trajectories, last total loss %.6g, wrote %s\n", run_name,
              cfg.train.total_steps, data.trajs.size(), last_total, final_path.c_str());
  return 0;
}

// -------------------------------------------------------------- evaluation

struct EpisodeRecord {
  int task_id = -1;
  int episode = -1;
  Trajectory traj;
  RolloutDiagnostics diag;
};

std::vector<EpisodeRecord> run_eval_episodes(const SkillPolicy& policy,
                                             const ExperimentConfig& cfg,
                                             const ActivationBudget& budget) {
  budget.validate(policy.dims.K);
  Rng master(static_cast<std::uint64_t>(cfg.eval_seed));
  std::vector<EpisodeRecord> records;
  for (int task_id : cfg.eval_tasks) {
    const TaskSpec& spec = task_by_id(task_id);
    for (int e = 0; e < cfg.eval_episodes; ++e) {
      std::uint64_t salt =
          (static_cast<std::uint64_t>(task_id) << 32) | static_cast<std::uint64_t>(e);
      Rng ep = master.derived(salt);
      EpisodeRecord rec;
      rec.task_id = task_id;
      rec.episode = e;
      rec.traj = rollout(policy, spec, cfg.env, budget, cfg.eval_max_steps, ep, &rec.diag);
      records.push_back(std::move(rec));
    }
  }
  return records;
}

std::vector<int> argmax_seq(const std::vector<std::vector<double>>& gates) {
  std::vector<int> out;
  out.reserve(gates.size());
  for (const auto& g : gates) out.push_back(gate_argmax(g));
  return out;
}

// Gate stability of one episode; degenerate lengths yield NaN.
double episode_flip(const std::vector<int>& seq) {
  return seq.size() >= 2 ? flip_rate(seq) : kNaN;
}
double episode_seg(const std::vector<int>& seq) {
  return seq.empty() ? kNaN : mean_segment_length(seq);
}

struct SubspaceStats {
  std::vector<double> fractions;   // per labeled step: trace fraction in truth
  std::vector<double> max_angles;  // per labeled step: largest principal angle
};

// Compares the mass-weighted active frame against the phase's ground-truth
// subspace at every step that lies inside a phase.
SubspaceStats subspace_stats(const SkillPolicy& policy, const ExperimentConfig& cfg,
                             const ActivationBudget& budget, const EpisodeRecord& rec) {
  SubspaceStats out;
  const TaskSpec& spec = task_by_id(rec.task_id);
  std::vector<int> labels = phase_labels(rec.traj, spec, cfg.env);
  int P = static_cast<int>(spec.phases.size());
  for (std::size_t t = 0; t < rec.traj.steps.size(); ++t) {
    if (labels[t] >= P) continue;
    Tensor G = ground_truth_subspace(spec, labels[t]);
    Tensor B = policy.basis.forward(
        Tensor({policy.dims.d_s}, rec.traj.steps[t].state)).B;
    const auto& g = rec.diag.gates[t];
    std::vector<double> masses(g.size());
    for (std::size_t i = 0; i < g.size(); ++i)
      masses[i] = budget.linear_mass ? g[i] : g[i] * g[i];
    const auto& S = rec.diag.active_sets[t];
    out.fractions.push_back(subspace_trace_fraction(B, masses, S, G));

    Tensor BS = Tensor::zeros({policy.dims.d, static_cast<int>(S.size())});
    for (std::size_t c = 0; c < S.size(); ++c)
      for (int r = 0; r < policy.dims.d; ++r)
        BS.raw()[static_cast<std::size_t>(r) * S.size() + c] = B.at(r, S[c]);
    auto angles = principal_angles(BS, G);
    out.max_angles.push_back(angles.back());
  }
  return out;
}

const std::vector<std::string> kEpisodeCols = {"task_id", "episode",  "steps",
                                               "progress", "success", "failed",
                                               "mean_active", "flip_rate", "seg_len"};
const std::vector<std::string> kDiagCols = {
    "episodes",  "success_rate", "mean_progress", "mean_steps",     "flip_rate",
    "seg_len",   "mean_active",  "subspace_frac", "subspace_hit",   "max_angle",
    "param_total", "param_active", "param_ratio"};

std::vector<std::string> trace_cols(int K) {
  std::vector<std::string> cols = {"episode", "step"};
  for (int i = 0; i < K; ++i) cols.push_back("g" + std::to_string(i));
  cols.push_back("active_mask");
  cols.push_back("active_count");
  return cols;
}

MetricsRow episode_row(const EpisodeRecord& rec, const std::string& run, long long index) {
  const std::vector<int> seq = argmax_seq(rec.diag.gates);
  MetricsRow row;
  row.run = run;
  row.index = index;
  row.values = {{"task_id", static_cast<double>(rec.task_id)},
                {"episode", static_cast<double>(rec.episode)},
                {"steps", static_cast<double>(rec.diag.steps)},
                {"progress", rec.traj.progress},
                {"success", rec.traj.progress == 1.0 ? 1.0 : 0.0},
                {"failed", rec.diag.failed ? 1.0 : 0.0},
                {"mean_active", rec.diag.mean_active},
                {"flip_rate", episode_flip(seq)},
                {"seg_len", episode_seg(seq)}};
  return row;
}

// Aggregates one group of episodes into a diagnostics row; the accounting
// pools every step's active set so the expected-active figure is the
// trace-weighted mean the deployment budget promises.
MetricsRow diagnostics_row(SkillPolicy& policy, const ExperimentConfig& cfg,
                           const ActivationBudget& budget,
                           const std::vector<const EpisodeRecord*>& group,
                           const std::string& run, long long index) {
  std::vector<double> progress, steps, flips, segs, means, fracs, angles;
  double succ = 0.0;
  std::vector<std::vector<int>> pooled;
  for (const EpisodeRecord* rec : group) {
    progress.push_back(rec->traj.progress);
    steps.push_back(static_cast<double>(rec->diag.steps));
    means.push_back(rec->diag.mean_active);
    if (rec->traj.progress == 1.0) succ += 1.0;
    const std::vector<int> seq = argmax_seq(rec->diag.gates);
    if (seq.size() >= 2) flips.push_back(flip_rate(seq));
    if (!seq.empty()) segs.push_back(mean_segment_length(seq));
    SubspaceStats ss = subspace_stats(policy, cfg, budget, *rec);
    fracs.insert(fracs.end(), ss.fractions.begin(), ss.fractions.end());
    angles.insert(angles.end(), ss.max_angles.begin(), ss.max_angles.end());
    for (const auto& S : rec->diag.active_sets) pooled.push_back(S);
  }
  double hit = kNaN;
  if (!fracs.empty()) {
    double h = 0.0;
    for (double f : fracs)
      if (f >= 0.8) h += 1.0;
    hit = h / static_cast<double>(fracs.size());
  }
  double p_total = kNaN, p_active = kNaN, p_ratio = kNaN;
  if (!pooled.empty()) {
    ParamAccounting acc = active_param_count(policy, pooled);
    p_total = static_cast<double>(acc.total);
    p_active = acc.active;
    p_ratio = acc.ratio;
  }
  MetricsRow row;
  row.run = run;
  row.index = index;
  row.values = {{"episodes", static_cast<double>(group.size())},
                {"success_rate", succ / static_cast<double>(group.size())},
                {"mean_progress", mean_or_nan(progress)},
                {"mean_steps", mean_or_nan(steps)},
                {"flip_rate", mean_or_nan(flips)},
                {"seg_len", mean_or_nan(segs)},
                {"mean_active", mean_or_nan(means)},
                {"subspace_frac", mean_or_nan(fracs)},
                {"subspace_hit", hit},
                {"max_angle", mean_or_nan(angles)},
                {"param_total", p_total},
                {"param_active", p_active},
                {"param_ratio", p_ratio}};
  return row;
}

// Wall-clock per act() with the first `warmup` calls excluded.
MetricsRow latency_row(const SkillPolicy& policy, const ExperimentConfig& cfg) {
  const TaskSpec& spec = task_by_id(cfg.eval_tasks.front());
  Rng r(static_cast<std::uint64_t>(cfg.eval_seed));
  std::vector<double> state = initial_state(spec, cfg.env, r);
  const int warmup = 10, timed = 20;
  std::vector<double> us;
  for (int i = 0; i < warmup + timed; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    act(policy, state, cfg.budget, r.derived(static_cast<std::uint64_t>(i)));
    auto t1 = std::chrono::steady_clock::now();
    if (i >= warmup)
      us.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
  }
  double mn = us[0], mx = us[0];
  for (double u : us) {
    mn = std::min(mn, u);
    mx = std::max(mx, u);
  }
  MetricsRow row;
  row.run = "act";
  row.index = 0;
  row.values = {{"calls", static_cast<double>(warmup + timed)},
                {"warmup", static_cast<double>(warmup)},
                {"mean_us", mean_or_nan(us)},
                {"min_us", mn},
                {"max_us", mx}};
  return row;
}

int run_eval(const ExperimentConfig& cfg) {
  Checkpoint ck = load_required_ckpt(cfg, "eval");
  cfg.budget.validate(ck.policy.dims.K);
  echo_config(cfg, cfg.out_dir);
  const int K = ck.policy.dims.K;
  auto records = run_eval_episodes(ck.policy, cfg, cfg.budget);

  std::vector<MetricsRow> ep_rows;
  for (std::size_t i = 0; i < records.size(); ++i)
    ep_rows.push_back(episode_row(records[i], task_by_id(records[i].task_id).name,
                                  static_cast<long long>(i)));
  emit_csv(kEpisodeCols, ep_rows, cfg.out_dir + "/eval_episodes.csv");
  emit_jsonl(kEpisodeCols, ep_rows, cfg.out_dir + "/eval_episodes.jsonl");

  for (int task_id : cfg.eval_tasks) {
    std::vector<MetricsRow> trows;
    const std::string name = task_by_id(task_id).name;
    for (const auto& rec : records) {
      if (rec.task_id != task_id) continue;
      for (int t = 0; t < rec.diag.steps; ++t) {
        MetricsRow row;
        row.run = name;
        row.index = static_cast<long long>(trows.size());
        row.values = {{"episode", static_cast<double>(rec.episode)},
                      {"step", static_cast<double>(t)}};
        for (int i = 0; i < K; ++i)
          row.values.emplace_back("g" + std::to_string(i),
                                  rec.diag.gates[static_cast<std::size_t>(t)]
                                               [static_cast<std::size_t>(i)]);
        double mask = 0.0;
        for (int i : rec.diag.active_sets[static_cast<std::size_t>(t)])
          mask += std::ldexp(1.0, i);
        row.values.emplace_back("active_mask", mask);
        row.values.emplace_back(
            "active_count",
            static_cast<double>(rec.diag.active_sets[static_cast<std::size_t>(t)].size()));
        trows.push_back(std::move(row));
      }
    }
    emit_csv(trace_cols(K), trows,
             cfg.out_dir + "/trace_task" + std::to_string(task_id) + ".csv");
  }

  std::vector<MetricsRow> diag_rows;
  for (int task_id : cfg.eval_tasks) {
    std::vector<const EpisodeRecord*> group;
    for (const auto& rec : records)
      if (rec.task_id == task_id) group.push_back(&rec);
    diag_rows.push_back(diagnostics_row(ck.policy, cfg, cfg.budget, group,
                                        task_by_id(task_id).name, task_id));
  }
  std::vector<const EpisodeRecord*> all;
  for (const auto& rec : records) all.push_back(&rec);
  diag_rows.push_back(diagnostics_row(ck.policy, cfg, cfg.budget, all, "overall", -1));
  emit_csv(kDiagCols, diag_rows, cfg.out_dir + "/diagnostics.csv");
  emit_jsonl(kDiagCols, diag_rows, cfg.out_dir + "/diagnostics.jsonl");

  emit_csv({"calls", "warmup", "mean_us", "min_us", "max_us"}, {latency_row(ck.policy, cfg)},
           cfg.out_dir + "/latency.csv");

  const auto& overall = diag_rows.back().values;
  std::printf("eval: %zu episodes, success_rate %.3f, mean_active %.3f, wrote %s\n",
              records.size(), overall[1].second, overall[6].second, cfg.out_dir.c_str());
  return 0;
}

int run_infer(const ExperimentConfig& cfg) {
  Checkpoint ck = load_required_ckpt(cfg, "infer");
  cfg.budget.validate(ck.policy.dims.K);
  echo_config(cfg, cfg.out_dir);
  const TaskSpec& spec = task_by_id(cfg.eval_tasks.front());
  Rng r(static_cast<std::uint64_t>(cfg.eval_seed));
  std::vector<double> state = initial_state(spec, cfg.env, r);
  ActResult res = act(ck.policy, state, cfg.budget, r.derived(1));
  nlohmann::ordered_json j;
  j["task"] = spec.name;
  j["action"] = res.action;
  j["gate"] = res.gate;
  j["active"] = res.active.indices;
  j["covered"] = res.active.covered;
  std::printf("%s\n", j.dump().c_str());
  return 0;
}

// ------------------------------------------------------------------ sweeps

const std::vector<std::string> kSweepCols = {"value",    "success_rate", "mean_progress",
                                             "flip_rate", "seg_len",     "mean_active"};

MetricsRow sweep_row(const std::string& run, long long index, double value,
                     const std::vector<EpisodeRecord>& records) {
  double succ = 0.0;
  std::vector<double> progress, flips, segs, means;
  for (const auto& rec : records) {
    progress.push_back(rec.traj.progress);
    means.push_back(rec.diag.mean_active);
    if (rec.traj.progress == 1.0) succ += 1.0;
    const std::vector<int> seq = argmax_seq(rec.diag.gates);
    if (seq.size() >= 2) flips.push_back(flip_rate(seq));
    if (!seq.empty()) segs.push_back(mean_segment_length(seq));
  }
  MetricsRow row;
  row.run = run;
  row.index = index;
  row.values = {{"value", value},
                {"success_rate", succ / std::max<double>(1.0, records.size())},
                {"mean_progress", mean_or_nan(progress)},
                {"flip_rate", mean_or_nan(flips)},
                {"seg_len", mean_or_nan(segs)},
                {"mean_active", mean_or_nan(means)}};
  return row;
}

int run_ablate_gates(const ExperimentConfig& cfg) {
  Dataset data = obtain_dataset(cfg);
  echo_config(cfg, cfg.out_dir);
  struct Axis {
    const char* name;
    std::vector<double> grid;
    void (*apply)(ExperimentConfig&, double);
  };
  const std::vector<Axis> axes = {
      {"kappa", {0.0, 5.0, 20.0, 50.0, 100.0},
       [](ExperimentConfig& c, double v) { c.gate.kappa = v; }},
      {"alpha", {0.1, 0.5, 2.0, 5.0, 10.0},
       [](ExperimentConfig& c, double v) { c.gate.alpha = v; }},
      {"alpha0", {0.0, 0.1, 0.5, 1.0, 2.0},
       [](ExperimentConfig& c, double v) { c.gate.alpha0 = v; }},
  };
  std::vector<MetricsRow> rows;
  for (const auto& axis : axes) {
    for (std::size_t i = 0; i < axis.grid.size(); ++i) {
      ExperimentConfig cell = cfg;
      axis.apply(cell, axis.grid[i]);
      std::string cell_dir =
          cfg.out_dir + "/gates_" + axis.name + "_" + std::to_string(i);
      cell.out_dir = cell_dir;
      echo_config(cell, cell_dir);
      TrainConfig tc = cell.train;
      tc.checkpoint_dir = "";
      Checkpoint ck = train_loop(data, cell.dims, cell.gate, tc);
      save_checkpoint(ck, cell_dir + "/final.smp");
      auto records = run_eval_episodes(ck.policy, cell, cell.budget);
      rows.push_back(
          sweep_row(axis.name, static_cast<long long>(i), axis.grid[i], records));
      std::printf("ablate-gates: %s=%g success_rate %.3f flip_rate %.4f\n", axis.name,
                  axis.grid[i], rows.back().values[1].second, rows.back().values[3].second);
    }
  }
  emit_csv(kSweepCols, rows, cfg.out_dir + "/sweep_gates.csv");
  emit_jsonl(kSweepCols, rows, cfg.out_dir + "/sweep_gates.jsonl");
  return 0;
}

int run_ablate_activation(const ExperimentConfig& cfg) {
  Checkpoint ck = load_required_ckpt(cfg, "ablate-activation");
  echo_config(cfg, cfg.out_dir);
  const int K = ck.policy.dims.K;
  std::vector<MetricsRow> rows;
  for (int k = 1; k <= K; ++k) {
    ExperimentConfig cell = cfg;
    cell.budget.mode = ActivationBudget::Mode::TopK;
    cell.budget.k = k;
    cell.out_dir = cfg.out_dir + "/act_topk_" + std::to_string(k);
    echo_config(cell, cell.out_dir);
    auto records = run_eval_episodes(ck.policy, cell, cell.budget);
    rows.push_back(sweep_row("topk", k, static_cast<double>(k), records));
  }
  const std::vector<double> taus = {0.90, 0.925, 0.95, 0.975};
  for (std::size_t i = 0; i < taus.size(); ++i) {
    ExperimentConfig cell = cfg;
    cell.budget.mode = ActivationBudget::Mode::Coverage;
    cell.budget.tau_m = taus[i];
    cell.out_dir = cfg.out_dir + "/act_tau_" + std::to_string(i);
    echo_config(cell, cell.out_dir);
    auto records = run_eval_episodes(ck.policy, cell, cell.budget);
    rows.push_back(sweep_row("coverage", static_cast<long long>(i), taus[i], records));
  }
  emit_csv(kSweepCols, rows, cfg.out_dir + "/sweep_activation.csv");
  emit_jsonl(kSweepCols, rows, cfg.out_dir + "/sweep_activation.jsonl");
  std::printf("ablate-activation: %zu cells, wrote %s/sweep_activation.csv\n", rows.size(),
              cfg.out_dir.c_str());
  return 0;
}

// ----------------------------------------------------------------- metrics

int run_metrics(const ExperimentConfig& cfg, const std::vector<std::string>& traces) {
  echo_config(cfg, cfg.out_dir);
  const std::vector<std::string> cols = {"steps", "flip_rate", "seg_len", "mean_active"};
  std::vector<MetricsRow> out_rows;
  for (const auto& path : traces) {
    auto [names, rows] = read_csv(path);
    std::vector<int> gcols;
    int c_episode = -1, c_count = -1;
    for (std::size_t i = 0; i < names.size(); ++i) {
      const std::string& n = names[i];
      if (n == "episode") c_episode = static_cast<int>(i);
      if (n == "active_count") c_count = static_cast<int>(i);
      if (n.size() >= 2 && n[0] == 'g' &&
          n.find_first_not_of("0123456789", 1) == std::string::npos)
        gcols.push_back(static_cast<int>(i));
    }
    if (c_episode < 0 || c_count < 0 || gcols.empty())
      throw std::invalid_argument("metrics: " + path +
                                  " lacks episode/g*/active_count trace columns");

    // Episodes are stored as contiguous row groups.
    std::size_t r = 0;
    while (r < rows.size()) {
      const std::string run = rows[r].run;
      const double episode = rows[r].values[static_cast<std::size_t>(c_episode)].second;
      std::vector<int> seq;
      std::vector<double> counts;
      while (r < rows.size() && rows[r].run == run &&
             rows[r].values[static_cast<std::size_t>(c_episode)].second == episode) {
        std::vector<double> g;
        g.reserve(gcols.size());
        for (int c : gcols) g.push_back(rows[r].values[static_cast<std::size_t>(c)].second);
        seq.push_back(gate_argmax(g));
        counts.push_back(rows[r].values[static_cast<std::size_t>(c_count)].second);
        ++r;
      }
      MetricsRow row;
      row.run = run;
      row.index = static_cast<long long>(episode);
      row.values = {{"steps", static_cast<double>(seq.size())},
                    {"flip_rate", episode_flip(seq)},
                    {"seg_len", episode_seg(seq)},
                    {"mean_active", mean_or_nan(counts)}};
      out_rows.push_back(std::move(row));
    }
  }
  emit_csv(cols, out_rows, cfg.out_dir + "/recomputed_metrics.csv");
  emit_jsonl(cols, out_rows, cfg.out_dir + "/recomputed_metrics.jsonl");
  std::printf("metrics: recomputed %zu episodes from %zu trace file(s)\n", out_rows.size(),
              traces.size());
  return 0;
}

int run_gen_data(const ExperimentConfig& cfg) {
  Dataset ds = make_dataset(cfg.data_tasks, cfg.data_demos_per_task,
                            static_cast<std::uint64_t>(cfg.data_seed), cfg.env);
  echo_config(cfg, cfg.out_dir);
  std::string path = cfg.data_path.empty() ? cfg.out_dir + "/dataset.smpd" : cfg.data_path;
  ensure_parent(path);
  save_dataset(ds, path);
  std::printf("gen-data: wrote %zu trajectories (%zu tasks x %d demos) to %s\n",
              ds.trajs.size(), cfg.data_tasks.size(), cfg.data_demos_per_task, path.c_str());
  return 0;
}

}  // namespace

int cmd_dispatch(const std::vector<std::string>& args) {
  CLI::App app{"skill-mixture diffusion policy toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  bool unfreeze_posterior = false;
  std::vector<std::string> traces;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "config file of 'key = value' lines");
    sub->add_option("--set", sets, "override a config key, key=value (repeatable)");
    return sub;
  };
  CLI::App* c_gen = add_common(app.add_subcommand(
      "gen-data", "generate scripted demonstrations into a dataset file"));
  CLI::App* c_train = add_common(app.add_subcommand(
      "train", "train a policy (resumes when io.ckpt is set)"));
  CLI::App* c_ft = add_common(
      app.add_subcommand("finetune", "continue training a checkpoint on new data"));
  CLI::App* c_ftr = add_common(app.add_subcommand(
      "finetune-router", "adapt only the router of a trained checkpoint"));
  c_ftr->add_flag("--unfreeze-posterior", unfreeze_posterior,
                  "let the posterior amortizer update as well");
  CLI::App* c_eval = add_common(app.add_subcommand(
      "eval", "roll out a checkpoint and write episode, trace, and diagnostic files"));
  CLI::App* c_infer = add_common(app.add_subcommand(
      "infer", "print one action for a sampled initial state as JSON"));
  CLI::App* c_ag = add_common(app.add_subcommand(
      "ablate-gates", "sweep kappa/alpha/alpha0 grids, training each cell"));
  CLI::App* c_aa = add_common(app.add_subcommand(
      "ablate-activation", "sweep top-k and coverage budgets on one checkpoint"));
  CLI::App* c_met = add_common(app.add_subcommand(
      "metrics", "recompute gate diagnostics from stored trace CSVs"));
  c_met->add_option("--trace", traces, "gate-trace CSV produced by eval (repeatable)")
      ->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    ExperimentConfig cfg = parse_config(config_path, sets);
    if (c_gen->parsed()) return run_gen_data(cfg);
    if (c_train->parsed()) return run_training(cfg, TrainKind::Fresh, false);
    if (c_ft->parsed()) return run_training(cfg, TrainKind::Finetune, false);
    if (c_ftr->parsed()) return run_training(cfg, TrainKind::FinetuneRouter, unfreeze_posterior);
    if (c_eval->parsed()) return run_eval(cfg);
    if (c_infer->parsed()) return run_infer(cfg);
    if (c_ag->parsed()) return run_ablate_gates(cfg);
    if (c_aa->parsed()) return run_ablate_activation(cfg);
    if (c_met->parsed()) return run_metrics(cfg, traces);
    std::fprintf(stderr, "error: no subcommand selected\n");
    return 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}

int cmd_dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cmd_dispatch(args);
}

}  // namespace smp
