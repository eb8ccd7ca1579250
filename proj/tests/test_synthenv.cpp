// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "smp/dataset.hpp"
#include "smp/rng.hpp"
#include "smp/synthenv.hpp"

using namespace smp;

namespace {

const EnvParams P{};

std::vector<double> blank_state(int task = 0) {
  Rng rng(1);
  return initial_state(task_by_id(task), P, rng);
}

}  // namespace

TEST_CASE("env_step: fixed point, integrator, clipping") {
  std::vector<double> s = blank_state();
  s[4] = 0.7;  // closed left gripper, nothing nearby
  std::vector<double> zero(kActionDim, 0.0);
  std::vector<double> s2 = env_step(s, zero, P);
  for (int i = 0; i < kStateDim; ++i) CHECK(s2[i] == s[i]);

  SUBCASE("translation integrates") {
    std::vector<double> st = blank_state();
    st[0] = 0.0;
    st[1] = 0.0;
    std::vector<double> a = {0.1, 0.0, 0.0, 0.0, 0.0, 0.0};
    std::vector<double> nx = env_step(st, a, P);
    CHECK(nx[0] == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(nx[1] == 0.0);
    CHECK(nx[2] == st[2]);  // right arm untouched
  }

  SUBCASE("workspace clipping") {
    std::vector<double> st = blank_state();
    st[0] = 0.95;
    std::vector<double> a = {0.3, 0.0, 0.0, 0.0, 0.0, 0.0};
    CHECK(env_step(st, a, P)[0] == 1.0);
  }

  SUBCASE("gripper rate limit and bounds") {
    std::vector<double> st = blank_state();
    std::vector<double> a(kActionDim, 0.0);
    a[4] = 5.0;  // wildly over the rate
    std::vector<double> nx = env_step(st, a, P);
    CHECK(nx[4] == 0.5);
    nx = env_step(nx, a, P);
    CHECK(nx[4] == 1.0);
    nx = env_step(nx, a, P);
    CHECK(nx[4] == 1.0);  // saturated
    a[4] = -0.2;
    nx = env_step(nx, a, P);
    CHECK(nx[4] == doctest::Approx(0.8).epsilon(1e-15));
  }

  SUBCASE("validation") {
    std::vector<double> bad = {0.0, 0.0, 0.0, 0.0, 0.0, std::nan("")};
    CHECK_THROWS_AS(env_step(s, bad, P), std::invalid_argument);
    CHECK_THROWS_AS(env_step(s, std::vector<double>(5, 0.0), P), std::invalid_argument);
    CHECK_THROWS_AS(env_step(std::vector<double>(7, 0.0), zero, P), std::invalid_argument);
  }
}

TEST_CASE("env_step: objects ride closed grippers") {
  std::vector<double> s = blank_state();
  s[0] = 0.2;
  s[1] = 0.3;   // left arm
  s[6] = 0.2;
  s[7] = 0.3;   // left object exactly at the arm
  s[4] = 1.0;   // closed

  std::vector<double> a = {0.15, -0.1, 0.0, 0.0, 0.0, 0.0};
  std::vector<double> nx = env_step(s, a, P);
  CHECK(nx[6] == doctest::Approx(0.35).epsilon(1e-15));
  CHECK(nx[7] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(nx[6] == nx[0]);
  CHECK(nx[7] == nx[1]);

  SUBCASE("open gripper leaves the object") {
    s[4] = 0.3;
    nx = env_step(s, a, P);
    CHECK(nx[6] == 0.2);
    CHECK(nx[7] == 0.3);
  }
  SUBCASE("outside the grasp radius nothing moves") {
    s[6] = 0.5;  // 0.3 away
    nx = env_step(s, a, P);
    CHECK(nx[6] == 0.5);
    CHECK(nx[7] == 0.3);
  }
  SUBCASE("threshold is strict") {
    s[4] = 0.5;  // exactly at the threshold: open
    nx = env_step(s, a, P);
    CHECK(nx[6] == 0.2);
    CHECK(nx[7] == 0.3);
  }
}

TEST_CASE("task suite: structure and subspace declarations") {
  const auto& suite = task_suite();
  REQUIRE(suite.size() == 8);
  for (int i = 0; i < 8; ++i) {
    CHECK(suite[i].id == i);
    CHECK(!suite[i].phases.empty());
    std::set<std::string> names;
    std::set<int> all_coords;
    for (const auto& ph : suite[i].phases) {
      CHECK(names.insert(ph.name).second);  // names unique within a task
      auto sub = ph.subspace();
      CHECK(!sub.empty());
      CHECK(std::is_sorted(sub.begin(), sub.end()));
      for (int c : sub) {
        CHECK(c >= 0);
        CHECK(c < kActionDim);
        all_coords.insert(c);
      }
    }
    CHECK(static_cast<int>(all_coords.size()) <= kActionDim);
  }
  CHECK(train_task_ids() == std::vector<int>({0, 1, 2, 3, 4, 5}));
  CHECK(recombination_task_ids() == std::vector<int>({6, 7}));
  CHECK_THROWS_AS(task_by_id(8), std::invalid_argument);
  CHECK_THROWS_AS(task_by_id(-1), std::invalid_argument);
}

TEST_CASE("ground_truth_subspace: coordinate bases and disjoint-phase orthogonality") {
  const TaskSpec& both = task_by_id(5);  // pick-place-both
  Tensor reach = ground_truth_subspace(both, std::string("reach"));
  CHECK(reach.rows() == 6);
  CHECK(reach.cols() == 4);
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 6; ++i) CHECK(reach.at(i, j) == (i == j ? 1.0 : 0.0));

  Tensor grasp = ground_truth_subspace(both, std::string("grasp"));
  CHECK(grasp.cols() == 2);
  CHECK(grasp.at(4, 0) == 1.0);
  CHECK(grasp.at(5, 1) == 1.0);

  // Declared-disjoint phases are exactly orthogonal.
  for (const TaskSpec& spec : task_suite()) {
    for (std::size_t a = 0; a < spec.phases.size(); ++a)
      for (std::size_t b = a + 1; b < spec.phases.size(); ++b) {
        auto sa = spec.phases[a].subspace();
        auto sb = spec.phases[b].subspace();
        std::vector<int> inter;
        std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(),
                              std::back_inserter(inter));
        if (!inter.empty()) continue;  // not declared disjoint
        Tensor Ba = ground_truth_subspace(spec, static_cast<int>(a));
        Tensor Bb = ground_truth_subspace(spec, static_cast<int>(b));
        for (int i = 0; i < Ba.cols(); ++i)
          for (int j = 0; j < Bb.cols(); ++j) {
            double dot = 0.0;
            for (int r = 0; r < 6; ++r) dot += Ba.at(r, i) * Bb.at(r, j);
            CHECK(dot == 0.0);
          }
      }
  }

  CHECK_THROWS_AS(ground_truth_subspace(both, std::string("warp")), std::invalid_argument);
  CHECK_THROWS_AS(ground_truth_subspace(both, 99), std::invalid_argument);
}

TEST_CASE("scripted episodes: all tasks succeed with pure per-phase actions") {
  for (const TaskSpec& spec : task_suite()) {
    for (int trial = 0; trial < 5; ++trial) {
      Rng rng(700 + 13 * spec.id + trial);
      Trajectory tr = run_scripted_episode(spec, P, rng);
      INFO("task ", spec.name, " trial ", trial);
      CHECK(tr.progress == 1.0);
      CHECK(static_cast<int>(tr.steps.size()) <= spec.cap);
      REQUIRE(!tr.steps.empty());

      int prev_phase = 0;
      for (const Step& st : tr.steps) {
        REQUIRE(st.phase >= 0);
        REQUIRE(st.phase < static_cast<int>(spec.phases.size()));
        CHECK(st.phase >= prev_phase);  // phases never regress
        prev_phase = st.phase;
        auto sub = spec.phases[static_cast<std::size_t>(st.phase)].subspace();
        for (int c = 0; c < kActionDim; ++c) {
          bool active = std::find(sub.begin(), sub.end(), c) != sub.end();
          if (!active) CHECK(st.action[static_cast<std::size_t>(c)] == 0.0);
        }
      }
    }
  }
}

TEST_CASE("replayability: env_step reproduces recorded states exactly") {
  Rng rng(711);
  Trajectory tr = run_scripted_episode(task_by_id(4), P, rng);  // handover
  REQUIRE(tr.progress == 1.0);
  for (std::size_t t = 0; t + 1 < tr.steps.size(); ++t) {
    std::vector<double> nx = env_step(tr.steps[t].state, tr.steps[t].action, P);
    for (int j = 0; j < kStateDim; ++j) {
      CHECK(std::fabs(nx[static_cast<std::size_t>(j)] -
                      tr.steps[t + 1].state[static_cast<std::size_t>(j)]) <= 1e-12);
    }
  }
  std::vector<double> last = env_step(tr.steps.back().state, tr.steps.back().action, P);
  for (int j = 0; j < kStateDim; ++j)
    CHECK(last[static_cast<std::size_t>(j)] == tr.final_state[static_cast<std::size_t>(j)]);
}

TEST_CASE("success_check: progress fractions") {
  Rng rng(712);
  const TaskSpec& pick = task_by_id(2);  // 4 phases
  Trajectory tr = run_scripted_episode(pick, P, rng);
  REQUIRE(tr.progress == 1.0);
  CHECK(success_check(tr, pick, P) == 1.0);

  CHECK(success_check(Trajectory{}, pick, P) == 0.0);

  // Truncate right after the grasp phase: 2 of 4 milestones.
  Trajectory cut;
  cut.task_id = tr.task_id;
  for (const Step& st : tr.steps) {
    if (st.phase >= 2) {
      cut.final_state = st.state;
      break;
    }
    cut.steps.push_back(st);
  }
  REQUIRE(!cut.final_state.empty());
  CHECK(success_check(cut, pick, P) == doctest::Approx(0.5));

  // Truncate before anything happens: 0 milestones.
  Trajectory nothing;
  nothing.task_id = tr.task_id;
  nothing.steps.push_back(tr.steps.front());
  nothing.final_state = tr.steps.front().state;
  CHECK(success_check(nothing, pick, P) == 0.0);
}

TEST_CASE("gen_demos: determinism, counts, validity, purity") {
  std::vector<int> ids = train_task_ids();
  std::vector<Trajectory> a = gen_demos(ids, 4, 42, P);
  std::vector<Trajectory> b = gen_demos(ids, 4, 42, P);
  REQUIRE(a.size() == 24);
  REQUIRE(b.size() == 24);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].task_id == b[i].task_id);
    REQUIRE(a[i].steps.size() == b[i].steps.size());
    for (std::size_t t = 0; t < a[i].steps.size(); ++t) {
      for (int j = 0; j < kStateDim; ++j)
        CHECK(a[i].steps[t].state[static_cast<std::size_t>(j)] ==
              b[i].steps[t].state[static_cast<std::size_t>(j)]);
      for (int j = 0; j < kActionDim; ++j)
        CHECK(a[i].steps[t].action[static_cast<std::size_t>(j)] ==
              b[i].steps[t].action[static_cast<std::size_t>(j)]);
      CHECK(a[i].steps[t].phase == b[i].steps[t].phase);
    }
  }
  std::vector<Trajectory> c = gen_demos(ids, 4, 43, P);
  bool differs = false;
  for (std::size_t i = 0; i < c.size() && !differs; ++i)
    if (c[i].steps.size() != a[i].steps.size() ||
        c[i].steps.front().state[6] != a[i].steps.front().state[6])
      differs = true;
  CHECK(differs);

  for (const Trajectory& tr : a) {
    CHECK(tr.progress == 1.0);
    const TaskSpec& spec = task_by_id(tr.task_id);
    for (const Step& st : tr.steps) {
      auto sub = spec.phases[static_cast<std::size_t>(st.phase)].subspace();
      for (int cidx = 0; cidx < kActionDim; ++cidx) {
        if (std::find(sub.begin(), sub.end(), cidx) == sub.end())
          CHECK(st.action[static_cast<std::size_t>(cidx)] == 0.0);
      }
      double onehot = 0.0;
      for (int j = 14; j < kStateDim; ++j) onehot += st.state[static_cast<std::size_t>(j)];
      CHECK(onehot == 1.0);
    }
  }

  std::vector<Trajectory> single = gen_demos({0}, 1, 7, P);
  CHECK(single.size() == 1);
  CHECK(single[0].progress == 1.0);
  CHECK_THROWS_AS(gen_demos({0}, 0, 7, P), std::invalid_argument);
}

TEST_CASE("dataset: save/load round-trip is bitwise") {
  Dataset ds = make_dataset({0, 2, 5}, 2, 99, P);
  const char* path = "test_dataset_roundtrip.bin";
  save_dataset(ds, path);
  Dataset back = load_dataset(path);

  CHECK(back.d_s == ds.d_s);
  CHECK(back.d == ds.d);
  CHECK(back.seed == ds.seed);
  CHECK(back.n_per_task == ds.n_per_task);
  CHECK(back.task_ids == ds.task_ids);
  REQUIRE(back.trajs.size() == ds.trajs.size());
  for (std::size_t i = 0; i < ds.trajs.size(); ++i) {
    CHECK(back.trajs[i].task_id == ds.trajs[i].task_id);
    CHECK(back.trajs[i].progress == ds.trajs[i].progress);
    REQUIRE(back.trajs[i].steps.size() == ds.trajs[i].steps.size());
    for (std::size_t t = 0; t < ds.trajs[i].steps.size(); ++t) {
      CHECK(back.trajs[i].steps[t].state == ds.trajs[i].steps[t].state);
      CHECK(back.trajs[i].steps[t].action == ds.trajs[i].steps[t].action);
      CHECK(back.trajs[i].steps[t].phase == ds.trajs[i].steps[t].phase);
    }
    CHECK(back.trajs[i].final_state == ds.trajs[i].final_state);
  }

  SUBCASE("truncation is rejected") {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string whole = ss.str();
    std::ofstream out("test_dataset_trunc.bin", std::ios::binary | std::ios::trunc);
    out.write(whole.data(), static_cast<std::streamsize>(whole.size() - 9));
    out.close();
    CHECK_THROWS_AS(load_dataset("test_dataset_trunc.bin"), std::runtime_error);
    std::remove("test_dataset_trunc.bin");
  }

  SUBCASE("bad magic is rejected") {
    std::ofstream out("test_dataset_magic.bin", std::ios::binary | std::ios::trunc);
    out << "magic=wrong\nversion=1\nn_traj=0\n\n";
    out.close();
    CHECK_THROWS_AS(load_dataset("test_dataset_magic.bin"), std::runtime_error);
    std::remove("test_dataset_magic.bin");
  }

  SUBCASE("version mismatch reports both numbers") {
    std::ofstream out("test_dataset_ver.bin", std::ios::binary | std::ios::trunc);
    out << "magic=smpdata\nversion=9\nn_traj=0\n\n";
    out.close();
    CHECK_THROWS_WITH_AS(load_dataset("test_dataset_ver.bin"), doctest::Contains("9"),
                         std::runtime_error);
    std::remove("test_dataset_ver.bin");
  }

  std::remove(path);
}

TEST_CASE("traj_matrices: stacked views") {
  Rng rng(713);
  Trajectory tr = run_scripted_episode(task_by_id(0), P, rng);
  auto [S, A] = traj_matrices(tr);
  CHECK(S.rows() == static_cast<int>(tr.steps.size()));
  CHECK(S.cols() == kStateDim);
  CHECK(A.rows() == S.rows());
  CHECK(A.cols() == kActionDim);
  CHECK(S.at(0, 0) == tr.steps[0].state[0]);
  CHECK(A.at(1, 0) == tr.steps[1].action[0]);
  CHECK_THROWS_AS(traj_matrices(Trajectory{}), std::invalid_argument);
}
