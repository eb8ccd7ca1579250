// SPDX-License-Identifier: Apache-2.0
#include "smp/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace smp {
namespace {

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct KeySpec {
  const char* key;
  Setter set;
  Getter get;
};

[[noreturn]] void bad_value(const std::string& what) { throw std::invalid_argument(what); }

long long to_ll(const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    bad_value("expected an integer, got '" + v + "'");
  }
  if (used != v.size()) bad_value("expected an integer, got '" + v + "'");
  return out;
}

int to_int(const std::string& v) {
  long long x = to_ll(v);
  if (x < -2147483648LL || x > 2147483647LL) bad_value("integer out of range: '" + v + "'");
  return static_cast<int>(x);
}

double to_f64(const std::string& v) {
  const char* s = v.c_str();
  char* endp = nullptr;
  double out = std::strtod(s, &endp);
  if (endp == s || *endp != '\0') bad_value("expected a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value("expected true/false, got '" + v + "'");
}

std::vector<int> to_int_list(const std::string& v) {
  std::vector<int> out;
  std::string item;
  std::istringstream ss(v);
  while (std::getline(ss, item, ',')) out.push_back(to_int(item));
  if (out.empty()) bad_value("expected a comma-separated integer list, got '" + v + "'");
  return out;
}

std::string fmt_f64(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_list(const std::vector<int>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(xs[i]);
  }
  return out;
}

std::string fmt_mode(ActivationBudget::Mode m) {
  switch (m) {
    case ActivationBudget::Mode::TopK: return "top-k";
    case ActivationBudget::Mode::Coverage: return "coverage";
    default: return "both";
  }
}

ActivationBudget::Mode to_mode(const std::string& v) {
  if (v == "top-k") return ActivationBudget::Mode::TopK;
  if (v == "coverage") return ActivationBudget::Mode::Coverage;
  if (v == "both") return ActivationBudget::Mode::Both;
  bad_value("expected top-k|coverage|both, got '" + v + "'");
}

#define F64_KEY(name, field)                                             \
  KeySpec {                                                              \
    name, [](ExperimentConfig& c, const std::string& v) { c.field = to_f64(v); }, \
        [](const ExperimentConfig& c) { return fmt_f64(c.field); }       \
  }
#define INT_KEY(name, field)                                             \
  KeySpec {                                                              \
    name, [](ExperimentConfig& c, const std::string& v) { c.field = to_int(v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.field); } \
  }
#define LL_KEY(name, field)                                              \
  KeySpec {                                                              \
    name, [](ExperimentConfig& c, const std::string& v) { c.field = to_ll(v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.field); } \
  }
#define BOOL_KEY(name, field)                                            \
  KeySpec {                                                              \
    name, [](ExperimentConfig& c, const std::string& v) { c.field = to_bool(v); }, \
        [](const ExperimentConfig& c) { return c.field ? "true" : "false"; } \
  }
#define STR_KEY(name, field)                                             \
  KeySpec {                                                              \
    name, [](ExperimentConfig& c, const std::string& v) { c.field = v; }, \
        [](const ExperimentConfig& c) { return c.field; }                \
  }
#define LIST_KEY(name, field)                                            \
  KeySpec {                                                              \
    name, [](ExperimentConfig& c, const std::string& v) { c.field = to_int_list(v); }, \
        [](const ExperimentConfig& c) { return fmt_list(c.field); }      \
  }

const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> table = {
      INT_KEY("dims.K", dims.K),
      INT_KEY("dims.H", dims.H),
      INT_KEY("dims.basis_hidden", dims.basis_hidden),
      INT_KEY("dims.gate_hidden", dims.gate_hidden),
      INT_KEY("dims.expert_hidden", dims.expert_hidden),
      INT_KEY("dims.temb_dim", dims.temb_dim),
      INT_KEY("diffusion.steps", dims.diff_steps),
      F64_KEY("diffusion.beta_start", dims.beta_start),
      F64_KEY("diffusion.beta_end", dims.beta_end),
      F64_KEY("gate.alpha", gate.alpha),
      F64_KEY("gate.alpha0", gate.alpha0),
      F64_KEY("gate.kappa", gate.kappa),
      F64_KEY("train.sigma_a", train.sigma_a),
      F64_KEY("train.eps", train.eps),
      F64_KEY("train.lr", train.lr),
      INT_KEY("train.batch_size", train.batch_size),
      LL_KEY("train.total_steps", train.total_steps),
      LL_KEY("train.seed", train.seed),
      F64_KEY("train.w_coeff", train.w_coeff),
      F64_KEY("train.w_recon", train.w_recon),
      F64_KEY("train.w_gate", train.w_gate),
      F64_KEY("train.w_align", train.w_align),
      F64_KEY("train.anneal_frac", train.anneal_frac),
      BOOL_KEY("train.freeze_basis", train.freeze_basis),
      BOOL_KEY("train.freeze_experts", train.freeze_experts),
      BOOL_KEY("train.freeze_posterior", train.freeze_posterior),
      BOOL_KEY("train.freeze_usage", train.freeze_usage),
      BOOL_KEY("train.freeze_router", train.freeze_router),
      BOOL_KEY("train.align_stop_posterior", train.align_stop_posterior),
      F64_KEY("train.align_temp", train.align_temp),
      LL_KEY("train.metric_every", train.metric_every),
      LL_KEY("train.checkpoint_every", train.checkpoint_every),
      INT_KEY("budget.k", budget.k),
      F64_KEY("budget.tau_m", budget.tau_m),
      KeySpec{"budget.mode",
              [](ExperimentConfig& c, const std::string& v) { c.budget.mode = to_mode(v); },
              [](const ExperimentConfig& c) { return fmt_mode(c.budget.mode); }},
      BOOL_KEY("budget.linear_mass", budget.linear_mass),
      F64_KEY("env.gain", env.gain),
      F64_KEY("env.grasp_radius", env.grasp_radius),
      F64_KEY("env.tol", env.tol),
      F64_KEY("env.grip_rate", env.grip_rate),
      F64_KEY("env.grip_close", env.grip_close),
      INT_KEY("env.cap", env.cap),
      F64_KEY("env.layout_lo", env.layout_lo),
      F64_KEY("env.layout_hi", env.layout_hi),
      INT_KEY("data.demos_per_task", data_demos_per_task),
      LL_KEY("data.seed", data_seed),
      LIST_KEY("data.tasks", data_tasks),
      STR_KEY("data.path", data_path),
      INT_KEY("eval.episodes", eval_episodes),
      INT_KEY("eval.max_steps", eval_max_steps),
      LL_KEY("eval.seed", eval_seed),
      LIST_KEY("eval.tasks", eval_tasks),
      STR_KEY("io.ckpt", ckpt_path),
      STR_KEY("io.out_dir", out_dir),
  };
  return table;
}

#undef F64_KEY
#undef INT_KEY
#undef LL_KEY
#undef BOOL_KEY
#undef STR_KEY
#undef LIST_KEY

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

void require(bool ok, const std::string& key, const std::string& reason) {
  if (!ok) throw std::invalid_argument("config: key '" + key + "': " + reason);
}

void check_tasks(const std::vector<int>& tasks, const std::string& key) {
  require(!tasks.empty(), key, "task list must not be empty");
  for (int t : tasks)
    require(t >= 0 && t < kNumTasks, key,
            "task id " + std::to_string(t) + " outside [0," + std::to_string(kNumTasks - 1) + "]");
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& spec : key_table()) out.emplace_back(spec.key);
  return out;
}

void config_set(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& spec : key_table()) {
    if (key == spec.key) {
      try {
        spec.set(cfg, value);
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("config: key '" + key + "': " + e.what());
      }
      return;
    }
  }
  throw std::invalid_argument("config: unknown key '" + key + "' (not a recognized tunable)");
}

void ExperimentConfig::validate() const {
  require(dims.d_s >= 1, "dims.d_s", "must be >= 1");
  require(dims.d >= 1, "dims.d", "must be >= 1");
  require(dims.K >= 1, "dims.K", "must be >= 1");
  require(dims.K <= dims.d, "dims.K",
          "must be <= action dimension " + std::to_string(dims.d) +
              " to keep the skill basis orthonormal");
  require(dims.H >= 1, "dims.H", "must be >= 1");
  require(dims.basis_hidden >= 1, "dims.basis_hidden", "must be >= 1");
  require(dims.gate_hidden >= 1, "dims.gate_hidden", "must be >= 1");
  require(dims.expert_hidden >= 1, "dims.expert_hidden", "must be >= 1");
  require(dims.temb_dim >= 2 && dims.temb_dim % 2 == 0, "dims.temb_dim", "must be even and >= 2");
  require(dims.diff_steps >= 1, "diffusion.steps", "must be >= 1");
  require(dims.beta_start > 0.0, "diffusion.beta_start", "must be > 0");
  require(dims.beta_end >= dims.beta_start && dims.beta_end < 1.0, "diffusion.beta_end",
          "must lie in [beta_start, 1)");
  require(gate.alpha > 0.0, "gate.alpha", "must be > 0 (Dirichlet concentration)");
  require(gate.alpha0 >= 0.0, "gate.alpha0", "must be >= 0 (0 disables the usage anchor)");
  require(gate.kappa >= 0.0, "gate.kappa", "must be >= 0 (0 disables stickiness)");
  train.validate();
  budget.validate(dims.K);
  require(env.gain > 0.0, "env.gain", "must be > 0");
  require(env.grasp_radius > 0.0, "env.grasp_radius", "must be > 0");
  require(env.tol > 0.0, "env.tol", "must be > 0");
  require(env.grip_rate > 0.0, "env.grip_rate", "must be > 0");
  require(env.grip_close >= 0.0 && env.grip_close < 1.0, "env.grip_close", "must be in [0,1)");
  require(env.cap >= 1, "env.cap", "must be >= 1");
  require(env.layout_lo < env.layout_hi, "env.layout_lo", "must be < env.layout_hi");
  require(data_demos_per_task >= 1, "data.demos_per_task", "must be >= 1");
  check_tasks(data_tasks, "data.tasks");
  require(eval_episodes >= 1, "eval.episodes", "must be >= 1");
  require(eval_max_steps >= 1, "eval.max_steps", "must be >= 1");
  check_tasks(eval_tasks, "eval.tasks");
  require(!out_dir.empty(), "io.out_dir", "must not be empty");
}

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides,
                                   const std::string& source) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: " + source + ":" + std::to_string(lineno) +
                                  ": expected 'key = value', got '" + line + "'");
    config_set(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  for (const auto& ov : overrides) {
    std::size_t eq = ov.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: override '" + ov + "' is not key=value");
    config_set(cfg, trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::string text;
  if (!path.empty()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  return parse_config_text(text, overrides, path.empty() ? "<defaults>" : path);
}

std::string render_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& spec : key_table()) {
    out += spec.key;
    out += " = ";
    out += spec.get(cfg);
    out += '\n';
  }
  return out;
}

}  // namespace smp
