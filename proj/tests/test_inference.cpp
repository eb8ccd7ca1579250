// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "smp/basis.hpp"
#include "smp/diffusion.hpp"
#include "smp/gates.hpp"
#include "smp/inference.hpp"
#include "smp/rng.hpp"
#include "smp/synthenv.hpp"

using namespace smp;

namespace {

SkillPolicy tiny_policy(std::uint64_t seed = 4, int H = 1) {
  PolicyDims dm;
  dm.d_s = kStateDim;
  dm.d = kActionDim;
  dm.K = 4;
  dm.H = H;
  dm.basis_hidden = 24;
  dm.gate_hidden = 16;
  dm.expert_hidden = 16;
  dm.temb_dim = 8;
  dm.diff_steps = 8;
  Rng rng(seed);
  return SkillPolicy::init(dm, GateHyper{}, TrainConfig{}, rng);
}

// Exhaustive oracle: the covering subset ranked by cardinality, then total
// mass (descending), then lexicographic order of the sorted index set.
std::vector<int> best_cover(const std::vector<double>& masses, double tau) {
  const int K = static_cast<int>(masses.size());
  double total = 0.0;
  for (double m : masses) total += m;
  std::vector<int> best;
  double best_mass = -1.0;
  for (std::uint32_t bits = 1; bits < (1u << K); ++bits) {
    std::vector<int> set;
    double mass = 0.0;
    for (int i = 0; i < K; ++i)
      if (bits & (1u << i)) {
        set.push_back(i);
        mass += masses[static_cast<std::size_t>(i)];
      }
    if (mass / total < tau) continue;
    bool better = false;
    if (best.empty())
      better = true;
    else if (set.size() != best.size())
      better = set.size() < best.size();
    else if (mass != best_mass)
      better = mass > best_mass;
    else
      better = set < best;
    if (better) {
      best = set;
      best_mass = mass;
    }
  }
  return best;
}

std::vector<int> ascending(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST_CASE("select_active: worked examples") {
  ActivationBudget both;
  both.k = 3;
  both.tau_m = 0.9;

  SUBCASE("dominant gate covers alone") {
    ActiveSet s = select_active({0.7, 0.2, 0.1}, both);
    CHECK(s.masses[0] == doctest::Approx(0.49));
    CHECK(s.masses[1] == doctest::Approx(0.04));
    CHECK(s.masses[2] == doctest::Approx(0.01));
    REQUIRE(s.indices == std::vector<int>({0}));
    CHECK(s.covered == doctest::Approx(0.49 / 0.54));
    CHECK(s.covered >= 0.9);
  }
  SUBCASE("same gate under linear mass needs two experts") {
    ActivationBudget lin = both;
    lin.linear_mass = true;
    ActiveSet s = select_active({0.7, 0.2, 0.1}, lin);
    CHECK(s.indices == std::vector<int>({0, 1}));
    CHECK(s.covered == doctest::Approx(0.9));
  }
  SUBCASE("pure top-k sorts by mass") {
    ActivationBudget topk;
    topk.mode = ActivationBudget::Mode::TopK;
    topk.k = 2;
    ActiveSet s = select_active({0.1, 0.5, 0.4}, topk);
    CHECK(s.indices == std::vector<int>({1, 2}));
  }
  SUBCASE("one-hot gate always yields that expert") {
    for (double tau : {0.0, 0.5, 1.0}) {
      ActivationBudget b;
      b.k = 3;
      b.tau_m = tau;
      ActiveSet s = select_active({0.0, 0.0, 1.0}, b);
      CHECK(s.indices == std::vector<int>({2}));
    }
  }
  SUBCASE("degenerate tau_m = 0 falls back to top-1") {
    ActivationBudget b;
    b.k = 3;
    b.tau_m = 0.0;
    ActiveSet s = select_active({0.2, 0.5, 0.3}, b);
    CHECK(s.indices == std::vector<int>({1}));
  }
  SUBCASE("equal masses break ties to the lower index") {
    ActivationBudget topk;
    topk.mode = ActivationBudget::Mode::TopK;
    topk.k = 2;
    ActiveSet s = select_active({0.25, 0.25, 0.25, 0.25}, topk);
    CHECK(s.indices == std::vector<int>({0, 1}));
  }
  SUBCASE("validation") {
    ActivationBudget bad;
    bad.k = 0;
    CHECK_THROWS_AS(select_active({0.5, 0.5}, bad), std::invalid_argument);
    bad.k = 5;
    CHECK_THROWS_AS(select_active({0.5, 0.5}, bad), std::invalid_argument);
    ActivationBudget bad2;
    bad2.tau_m = 1.5;
    bad2.k = 2;
    CHECK_THROWS_AS(select_active({0.5, 0.5}, bad2), std::invalid_argument);
  }
}

TEST_CASE("select_active: greedy set matches the exhaustive optimum") {
  Rng rng(404);
  for (int trial = 0; trial < 1000; ++trial) {
    const int K = 2 + static_cast<int>(rng.next_u64() % 11);  // 2..12
    std::vector<double> g(static_cast<std::size_t>(K));
    double sum = 0.0;
    for (double& v : g) {
      v = rng.uniform(0.01, 1.0);
      sum += v;
    }
    for (double& v : g) v /= sum;
    const double tau = rng.uniform(0.05, 1.0);

    ActivationBudget cov;
    cov.mode = ActivationBudget::Mode::Coverage;
    cov.tau_m = tau;
    cov.k = K;
    ActiveSet s = select_active(g, cov);

    std::vector<double> masses(static_cast<std::size_t>(K));
    for (int i = 0; i < K; ++i)
      masses[static_cast<std::size_t>(i)] =
          g[static_cast<std::size_t>(i)] * g[static_cast<std::size_t>(i)];
    CHECK(ascending(s.indices) == best_cover(masses, tau));
  }
}

TEST_CASE("select_active: monotone in tau_m and k, bounded comparisons") {
  Rng rng(405);
  const int K = 6;
  std::vector<std::vector<double>> gates;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> g(K);
    double sum = 0.0;
    for (double& v : g) {
      v = rng.uniform(0.01, 1.0);
      sum += v;
    }
    for (double& v : g) v /= sum;
    gates.push_back(g);
  }

  SUBCASE("mean active size is non-decreasing in tau_m") {
    double prev = 0.0;
    for (double tau : {0.5, 0.7, 0.9, 0.95, 0.99, 1.0}) {
      ActivationBudget b;
      b.k = K;
      b.tau_m = tau;
      double mean = 0.0;
      for (const auto& g : gates) mean += static_cast<double>(select_active(g, b).indices.size());
      mean /= static_cast<double>(gates.size());
      CHECK(mean >= prev);
      prev = mean;
    }
  }
  SUBCASE("mean active size is non-decreasing in k") {
    double prev = 0.0;
    for (int k = 1; k <= K; ++k) {
      ActivationBudget b;
      b.k = k;
      b.tau_m = 1.0;
      double mean = 0.0;
      for (const auto& g : gates) mean += static_cast<double>(select_active(g, b).indices.size());
      mean /= static_cast<double>(gates.size());
      CHECK(mean >= prev);
      prev = mean;
    }
  }
  SUBCASE("comparison count stays within the heap bound") {
    Rng crng(406);
    for (int bigK : {4, 16, 64}) {
      std::vector<double> g(static_cast<std::size_t>(bigK));
      double sum = 0.0;
      for (double& v : g) {
        v = crng.uniform(0.01, 1.0);
        sum += v;
      }
      for (double& v : g) v /= sum;
      ActivationBudget b;
      b.k = bigK;
      b.tau_m = 1.0;  // worst case: select everything
      long long count = 0;
      ActiveSet s = select_active(g, b, &count);
      CHECK(static_cast<int>(s.indices.size()) == bigK);
      const double bound = 3.0 * bigK + 2.0 * bigK * (std::log2(static_cast<double>(bigK)) + 2.0);
      CHECK(static_cast<double>(count) <= bound);
    }
  }
}

TEST_CASE("router_mean: purity and state-only wiring") {
  SkillPolicy p = tiny_policy();
  Rng rng(7);
  std::vector<double> s(static_cast<std::size_t>(p.dims.d_s));
  for (double& v : s) v = rng.uniform(-1.0, 1.0);

  std::vector<double> g1 = router_mean(p, s);
  std::vector<double> g2 = router_mean(p, s);
  CHECK(g1 == g2);
  REQUIRE(static_cast<int>(g1.size()) == p.dims.K);
  double sum = 0.0;
  for (double v : g1) {
    CHECK(v > 0.0);
    sum += v;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  SUBCASE("constant raw output gives the uniform gate") {
    SkillPolicy q = tiny_policy(11);
    nn::Linear& head = q.gates.router.layers.back();
    for (double& v : head.W.raw()) v = 0.0;
    for (double& v : head.b.raw()) v = 0.0;
    std::vector<double> g = router_mean(q, s);
    for (double v : g) CHECK(v == doctest::Approx(1.0 / q.dims.K).epsilon(1e-14));
  }
  SUBCASE("wrong state size rejected") {
    CHECK_THROWS_AS(router_mean(p, std::vector<double>(3, 0.0)), std::invalid_argument);
  }
}

TEST_CASE("act: determinism, sparsity, dense reference, chunks") {
  SkillPolicy p = tiny_policy(12);
  Rng rng(88);
  std::vector<double> s = initial_state(task_by_id(0), EnvParams{}, rng);

  ActivationBudget dense;
  dense.k = p.dims.K;
  dense.tau_m = 1.0;

  SUBCASE("same stream, same action; different stream, different action") {
    Rng stream(9);
    ActResult a1 = act(p, s, dense, stream);
    ActResult a2 = act(p, s, dense, stream);
    CHECK(a1.action == a2.action);
    CHECK(a1.z == a2.z);
    ActResult a3 = act(p, s, dense, Rng(10));
    CHECK(a1.action != a3.action);
  }

  SUBCASE("dense budget equals the all-experts reference path") {
    Rng stream(14);
    ActResult a = act(p, s, dense, stream);
    CHECK(static_cast<int>(a.active.indices.size()) == p.dims.K);
    std::vector<int> all(static_cast<std::size_t>(p.dims.K));
    for (int i = 0; i < p.dims.K; ++i) all[static_cast<std::size_t>(i)] = i;
    std::vector<double> z =
        denoise_sample(p.experts, s, all, p.schedule, stream.derived(0));
    SkillBasis sb = p.basis.forward(Tensor({p.dims.d_s}, s));
    Tensor ref =
        decode_action(sb.B, Tensor({p.dims.K}, a.gate), Tensor({p.dims.K}, z));
    CHECK(a.action == ref.data());
  }

  SUBCASE("single-expert activation stays in that skill direction") {
    ActivationBudget one;
    one.mode = ActivationBudget::Mode::TopK;
    one.k = 1;
    Rng stream(15);
    ActResult a = act(p, s, one, stream);
    REQUIRE(a.active.indices.size() == 1);
    const int on = a.active.indices[0];
    for (int i = 0; i < p.dims.K; ++i)
      if (i != on) CHECK(a.z[static_cast<std::size_t>(i)] == 0.0);
    SkillBasis sb = p.basis.forward(Tensor({p.dims.d_s}, s));
    Tensor bta = matmul(transpose(sb.B), Tensor({p.dims.d, 1}, a.action));
    for (int i = 0; i < p.dims.K; ++i)
      if (i != on) CHECK(std::fabs(bta.at(i, 0)) < 1e-12);
  }

  SUBCASE("chunked policy returns H actions from one routing") {
    SkillPolicy pc = tiny_policy(12, 3);
    Rng stream(16);
    ActResult a = act(pc, s, dense, stream);
    REQUIRE(a.chunk.size() == 3);
    CHECK(a.action == a.chunk[0]);
    CHECK(a.chunk[0] != a.chunk[1]);  // fresh denoising stream per slot
  }
}

TEST_CASE("rollout: caps, determinism, diagnostics") {
  SkillPolicy p = tiny_policy(13);
  ActivationBudget budget;
  budget.k = p.dims.K;
  budget.tau_m = 0.95;
  const TaskSpec& task = task_by_id(0);
  EnvParams env;

  SUBCASE("max_steps = 0 gives an empty failed trajectory") {
    Rng rng(1);
    RolloutDiagnostics diag;
    Trajectory tr = rollout(p, task, env, budget, 0, rng, &diag);
    CHECK(tr.steps.empty());
    CHECK(tr.progress == 0.0);
    CHECK(diag.steps == 0);
  }

  SUBCASE("seeded rollouts are bitwise identical") {
    Rng r1(5), r2(5);
    RolloutDiagnostics d1, d2;
    Trajectory t1 = rollout(p, task, env, budget, 25, r1, &d1);
    Trajectory t2 = rollout(p, task, env, budget, 25, r2, &d2);
    REQUIRE(t1.steps.size() == t2.steps.size());
    for (std::size_t i = 0; i < t1.steps.size(); ++i) {
      CHECK(t1.steps[i].state == t2.steps[i].state);
      CHECK(t1.steps[i].action == t2.steps[i].action);
    }
    CHECK(t1.final_state == t2.final_state);
    CHECK(d1.gates == d2.gates);
    CHECK(d1.active_sets == d2.active_sets);
  }

  SUBCASE("diagnostics align with steps") {
    Rng rng(6);
    RolloutDiagnostics diag;
    Trajectory tr = rollout(p, task, env, budget, 20, rng, &diag);
    CHECK(diag.steps == static_cast<int>(tr.steps.size()));
    CHECK(diag.gates.size() == tr.steps.size());
    CHECK(diag.active_sets.size() == tr.steps.size());
    CHECK(diag.mean_active >= 1.0);
    CHECK(diag.mean_active <= static_cast<double>(p.dims.K));
    CHECK(tr.progress >= 0.0);
    CHECK(tr.progress <= 1.0);
    CHECK(!diag.failed);
    for (const Step& st : tr.steps) CHECK(st.phase == -1);
  }

  SUBCASE("non-finite action aborts as failed") {
    SkillPolicy bad = tiny_policy(14);
    // Poison the denoisers: the decoded action goes non-finite while the
    // basis stays healthy, so the failure surfaces at the environment.
    for (auto& [name, t] : bad.params())
      if (name.rfind("experts.", 0) == 0)
        for (double& v : t->raw()) v = 1e308;
    Rng rng(7);
    RolloutDiagnostics diag;
    Trajectory tr = rollout(bad, task, env, budget, 10, rng, &diag);
    CHECK(diag.failed);
    CHECK(diag.progress == 0.0);
  }
}
