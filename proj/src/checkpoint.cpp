// SPDX-License-Identifier: Apache-2.0
#include "smp/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "smp/wire.hpp"

namespace smp {
namespace {

constexpr const char* kMagic = "smpckpt";
constexpr int kVersion = 1;

std::string hexf(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double parse_f(const std::string& s, const std::string& key) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw std::runtime_error("checkpoint: bad float for " + key);
  return v;
}

long long parse_i(const std::string& s, const std::string& key) {
  try {
    return std::stoll(s);
  } catch (const std::exception&) {
    throw std::runtime_error("checkpoint: bad integer for " + key);
  }
}

}  // namespace

void save_checkpoint(Checkpoint& ck, const std::string& path) {
  SkillPolicy& pol = ck.policy;
  pol.validate();
  const PolicyDims& dm = pol.dims;
  const GateHyper& hy = pol.hyper;
  const TrainConfig& cf = pol.config;
  if (cf.checkpoint_dir.find('\n') != std::string::npos)
    throw std::invalid_argument("checkpoint: checkpoint_dir must not contain newlines");

  std::ostringstream man;
  man << "magic=" << kMagic << "\n";
  man << "version=" << kVersion << "\n";
  man << "d_s=" << dm.d_s << "\nd=" << dm.d << "\nK=" << dm.K << "\nH=" << dm.H << "\n";
  man << "basis_hidden=" << dm.basis_hidden << "\ngate_hidden=" << dm.gate_hidden << "\n";
  man << "expert_hidden=" << dm.expert_hidden << "\ntemb_dim=" << dm.temb_dim << "\n";
  man << "diff_steps=" << dm.diff_steps << "\n";
  man << "beta_start=" << hexf(dm.beta_start) << "\nbeta_end=" << hexf(dm.beta_end) << "\n";
  man << "alpha=" << hexf(hy.alpha) << "\nalpha0=" << hexf(hy.alpha0) << "\nkappa="
      << hexf(hy.kappa) << "\n";
  man << "sigma_a=" << hexf(cf.sigma_a) << "\neps=" << hexf(cf.eps) << "\nlr=" << hexf(cf.lr)
      << "\n";
  man << "batch_size=" << cf.batch_size << "\ntotal_steps=" << cf.total_steps << "\nseed="
      << cf.seed << "\n";
  man << "w_coeff=" << hexf(cf.w_coeff) << "\nw_recon=" << hexf(cf.w_recon) << "\nw_gate="
      << hexf(cf.w_gate) << "\nw_align=" << hexf(cf.w_align) << "\n";
  man << "anneal_frac=" << hexf(cf.anneal_frac) << "\n";
  man << "freeze=" << cf.freeze_basis << cf.freeze_experts << cf.freeze_posterior
      << cf.freeze_usage << cf.freeze_router << "\n";
  man << "align_stop_posterior=" << (cf.align_stop_posterior ? 1 : 0) << "\n";
  man << "align_temp=" << hexf(cf.align_temp) << "\n";
  man << "metric_every=" << cf.metric_every << "\ncheckpoint_every=" << cf.checkpoint_every
      << "\n";
  man << "checkpoint_dir=" << cf.checkpoint_dir << "\n";

  const AdamWConfig& oc = ck.opt.config();
  man << "opt_cfg=" << hexf(oc.lr) << ' ' << hexf(oc.beta1) << ' ' << hexf(oc.beta2) << ' '
      << hexf(oc.eps) << ' ' << hexf(oc.weight_decay) << "\n";
  man << "opt_step=" << ck.opt.step_count() << "\n";
  man << "rng=" << ck.rng.serialize() << "\n";

  std::string blob;
  long long offset = 0;
  for (auto& [name, t] : pol.params()) {
    man << "param=" << name << ' ' << t->rank();
    for (int dim : t->shape()) man << ' ' << dim;
    man << ' ' << offset << "\n";
    for (double v : t->data()) wire::put_f64(blob, v);
    offset += t->numel();
  }
  const auto& mm = ck.opt.m();
  const auto& vv = ck.opt.v();
  if (mm.size() != vv.size())
    throw std::runtime_error("checkpoint: optimizer moment maps disagree");
  for (const auto& [name, mvec] : mm) {
    auto it = vv.find(name);
    if (it == vv.end() || it->second.size() != mvec.size())
      throw std::runtime_error("checkpoint: optimizer moment maps disagree on " + name);
    man << "moment=" << name << ' ' << mvec.size() << ' ' << offset << ' '
        << (offset + static_cast<long long>(mvec.size())) << "\n";
    for (double x : mvec) wire::put_f64(blob, x);
    for (double x : it->second) wire::put_f64(blob, x);
    offset += 2 * static_cast<long long>(mvec.size());
  }
  man << "blob=" << offset << "\n\n";

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
  const std::string head = man.str();
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string whole = ss.str();

  std::map<std::string, std::string> kv;
  struct ParamLine {
    std::string name;
    std::vector<int> shape;
    long long offset = 0;
  };
  struct MomentLine {
    std::string name;
    long long len = 0, m_off = 0, v_off = 0;
  };
  std::vector<ParamLine> plines;
  std::vector<MomentLine> mlines;

  std::size_t pos = 0;
  bool saw_blank = false;
  while (pos < whole.size()) {
    std::size_t nl = whole.find('\n', pos);
    if (nl == std::string::npos) break;
    std::string line = whole.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) {
      saw_blank = true;
      break;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("checkpoint: malformed line: " + line);
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    if (key == "param") {
      std::istringstream ls(val);
      ParamLine pl;
      int rank = 0;
      ls >> pl.name >> rank;
      if (!ls || rank < 1 || rank > 2)
        throw std::runtime_error("checkpoint: malformed param line: " + line);
      pl.shape.resize(static_cast<std::size_t>(rank));
      for (int& dim : pl.shape) ls >> dim;
      ls >> pl.offset;
      if (!ls) throw std::runtime_error("checkpoint: malformed param line: " + line);
      plines.push_back(std::move(pl));
    } else if (key == "moment") {
      std::istringstream ls(val);
      MomentLine ml;
      ls >> ml.name >> ml.len >> ml.m_off >> ml.v_off;
      if (!ls) throw std::runtime_error("checkpoint: malformed moment line: " + line);
      mlines.push_back(std::move(ml));
    } else {
      kv[key] = val;
    }
  }
  if (!saw_blank) throw std::runtime_error("checkpoint: manifest not terminated");

  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error("checkpoint: missing key " + key);
    return it->second;
  };
  if (need("magic") != kMagic) throw std::runtime_error("checkpoint: unknown magic");
  long long ver = parse_i(need("version"), "version");
  if (ver != kVersion)
    throw std::runtime_error("checkpoint: format version " + std::to_string(ver) +
                             " unsupported, expected " + std::to_string(kVersion));

  PolicyDims dm;
  dm.d_s = static_cast<int>(parse_i(need("d_s"), "d_s"));
  dm.d = static_cast<int>(parse_i(need("d"), "d"));
  dm.K = static_cast<int>(parse_i(need("K"), "K"));
  dm.H = static_cast<int>(parse_i(need("H"), "H"));
  dm.basis_hidden = static_cast<int>(parse_i(need("basis_hidden"), "basis_hidden"));
  dm.gate_hidden = static_cast<int>(parse_i(need("gate_hidden"), "gate_hidden"));
  dm.expert_hidden = static_cast<int>(parse_i(need("expert_hidden"), "expert_hidden"));
  dm.temb_dim = static_cast<int>(parse_i(need("temb_dim"), "temb_dim"));
  dm.diff_steps = static_cast<int>(parse_i(need("diff_steps"), "diff_steps"));
  dm.beta_start = parse_f(need("beta_start"), "beta_start");
  dm.beta_end = parse_f(need("beta_end"), "beta_end");

  GateHyper hy;
  hy.alpha = parse_f(need("alpha"), "alpha");
  hy.alpha0 = parse_f(need("alpha0"), "alpha0");
  hy.kappa = parse_f(need("kappa"), "kappa");

  TrainConfig cf;
  cf.sigma_a = parse_f(need("sigma_a"), "sigma_a");
  cf.eps = parse_f(need("eps"), "eps");
  cf.lr = parse_f(need("lr"), "lr");
  cf.batch_size = static_cast<int>(parse_i(need("batch_size"), "batch_size"));
  cf.total_steps = parse_i(need("total_steps"), "total_steps");
  cf.seed = static_cast<std::uint64_t>(parse_i(need("seed"), "seed"));
  cf.w_coeff = parse_f(need("w_coeff"), "w_coeff");
  cf.w_recon = parse_f(need("w_recon"), "w_recon");
  cf.w_gate = parse_f(need("w_gate"), "w_gate");
  cf.w_align = parse_f(need("w_align"), "w_align");
  cf.anneal_frac = parse_f(need("anneal_frac"), "anneal_frac");
  const std::string& fz = need("freeze");
  if (fz.size() != 5) throw std::runtime_error("checkpoint: malformed freeze mask");
  cf.freeze_basis = fz[0] == '1';
  cf.freeze_experts = fz[1] == '1';
  cf.freeze_posterior = fz[2] == '1';
  cf.freeze_usage = fz[3] == '1';
  cf.freeze_router = fz[4] == '1';
  cf.align_stop_posterior = parse_i(need("align_stop_posterior"), "align_stop_posterior") != 0;
  cf.align_temp = parse_f(need("align_temp"), "align_temp");
  cf.metric_every = static_cast<int>(parse_i(need("metric_every"), "metric_every"));
  cf.checkpoint_every = parse_i(need("checkpoint_every"), "checkpoint_every");
  cf.checkpoint_dir = need("checkpoint_dir");

  Checkpoint ck;
  Rng scratch(0);
  ck.policy = SkillPolicy::init(dm, hy, cf, scratch);

  std::istringstream ocs(need("opt_cfg"));
  std::string f1, f2, f3, f4, f5;
  ocs >> f1 >> f2 >> f3 >> f4 >> f5;
  if (!ocs) throw std::runtime_error("checkpoint: malformed opt_cfg");
  AdamWConfig oc;
  oc.lr = parse_f(f1, "opt_cfg.lr");
  oc.beta1 = parse_f(f2, "opt_cfg.beta1");
  oc.beta2 = parse_f(f3, "opt_cfg.beta2");
  oc.eps = parse_f(f4, "opt_cfg.eps");
  oc.weight_decay = parse_f(f5, "opt_cfg.weight_decay");
  long long opt_step = parse_i(need("opt_step"), "opt_step");
  ck.rng = Rng::deserialize(need("rng"));

  const long long blob_doubles = parse_i(need("blob"), "blob");
  const std::size_t blob_bytes = whole.size() - pos;
  if (blob_bytes != static_cast<std::size_t>(blob_doubles) * 8)
    throw std::runtime_error("checkpoint: blob length mismatch: manifest says " +
                             std::to_string(blob_doubles * 8) + " bytes, file has " +
                             std::to_string(blob_bytes));
  wire::Reader rd(whole, pos);

  auto pmap = ck.policy.param_map();
  if (plines.size() != pmap.size())
    throw std::runtime_error("checkpoint: parameter count mismatch");
  for (const ParamLine& pl : plines) {
    auto it = pmap.find(pl.name);
    if (it == pmap.end()) throw std::runtime_error("checkpoint: unknown parameter " + pl.name);
    Tensor* t = it->second;
    if (pl.shape != t->shape())
      throw std::runtime_error("checkpoint: shape mismatch for " + pl.name);
    if (rd.offset() - pos != static_cast<std::size_t>(pl.offset) * 8)
      throw std::runtime_error("checkpoint: offset mismatch for " + pl.name);
    std::vector<double>& raw = t->raw();
    for (double& dst : raw) dst = rd.f64();
  }

  std::map<std::string, std::vector<double>> m, v;
  for (const MomentLine& ml : mlines) {
    if (pmap.find(ml.name) == pmap.end())
      throw std::runtime_error("checkpoint: moment for unknown parameter " + ml.name);
    if (rd.offset() - pos != static_cast<std::size_t>(ml.m_off) * 8)
      throw std::runtime_error("checkpoint: offset mismatch for moment " + ml.name);
    std::vector<double> mv(static_cast<std::size_t>(ml.len));
    std::vector<double> vv(static_cast<std::size_t>(ml.len));
    for (double& x : mv) x = rd.f64();
    for (double& x : vv) x = rd.f64();
    m.emplace(ml.name, std::move(mv));
    v.emplace(ml.name, std::move(vv));
  }
  if (!rd.exhausted()) throw std::runtime_error("checkpoint: trailing bytes in blob");

  ck.opt = AdamW(oc);
  ck.opt.restore(opt_step, std::move(m), std::move(v));
  ck.policy.validate();
  return ck;
}

}  // namespace smp
