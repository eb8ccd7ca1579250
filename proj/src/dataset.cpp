// SPDX-License-Identifier: Apache-2.0
#include "smp/dataset.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "smp/wire.hpp"

namespace smp {

namespace {

constexpr const char* kMagic = "smpdata";
constexpr int kVersion = 1;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace

Dataset make_dataset(const std::vector<int>& task_ids, int n_per_task, std::uint64_t seed,
                     const EnvParams& params) {
  Dataset ds;
  ds.seed = seed;
  ds.n_per_task = n_per_task;
  ds.task_ids = task_ids;
  ds.trajs = gen_demos(task_ids, n_per_task, seed, params);
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ostringstream head;
  head << "magic=" << kMagic << "\n";
  head << "version=" << ds.version << "\n";
  head << "d_s=" << ds.d_s << "\n";
  head << "d=" << ds.d << "\n";
  head << "seed=" << ds.seed << "\n";
  head << "n_per_task=" << ds.n_per_task << "\n";
  head << "task_ids=";
  for (std::size_t i = 0; i < ds.task_ids.size(); ++i) {
    head << (i ? "," : "") << ds.task_ids[i];
  }
  head << "\n";
  head << "n_traj=" << ds.trajs.size() << "\n";
  head << "\n";

  std::string out = head.str();
  for (const Trajectory& tr : ds.trajs) {
    wire::put_i64(out, tr.task_id);
    wire::put_i64(out, static_cast<std::int64_t>(tr.steps.size()));
    wire::put_f64(out, tr.progress);
    for (const Step& st : tr.steps) {
      if (static_cast<int>(st.state.size()) != ds.d_s ||
          static_cast<int>(st.action.size()) != ds.d) {
        throw std::invalid_argument("save_dataset: step dimensions disagree with manifest");
      }
      for (double v : st.state) wire::put_f64(out, v);
      for (double v : st.action) wire::put_f64(out, v);
      wire::put_i64(out, st.phase);
    }
    wire::put_i64(out, static_cast<std::int64_t>(tr.final_state.size()));
    for (double v : tr.final_state) wire::put_f64(out, v);
  }
  write_file(path, out);
}

Dataset load_dataset(const std::string& path) {
  const std::string data = read_file(path);

  // Manifest: key=value lines up to the first blank line.
  Dataset ds;
  std::size_t pos = 0;
  std::int64_t n_traj = -1;
  bool magic_ok = false;
  while (true) {
    std::size_t eol = data.find('\n', pos);
    if (eol == std::string::npos) throw std::runtime_error("dataset '" + path + "': truncated manifest");
    std::string line = data.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) break;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("dataset '" + path + "': malformed manifest line '" + line + "'");
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    if (key == "magic") {
      if (val != kMagic) throw std::runtime_error("dataset '" + path + "': bad magic '" + val + "'");
      magic_ok = true;
    } else if (key == "version") {
      ds.version = std::stoi(val);
      if (ds.version != kVersion) {
        throw std::runtime_error("dataset '" + path + "': version " + val + " unsupported (expected " +
                                 std::to_string(kVersion) + ")");
      }
    } else if (key == "d_s") {
      ds.d_s = std::stoi(val);
    } else if (key == "d") {
      ds.d = std::stoi(val);
    } else if (key == "seed") {
      ds.seed = std::stoull(val);
    } else if (key == "n_per_task") {
      ds.n_per_task = std::stoi(val);
    } else if (key == "task_ids") {
      std::stringstream ss(val);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) ds.task_ids.push_back(std::stoi(tok));
      }
    } else if (key == "n_traj") {
      n_traj = std::stoll(val);
    } else {
      throw std::runtime_error("dataset '" + path + "': unknown manifest key '" + key + "'");
    }
  }
  if (!magic_ok) throw std::runtime_error("dataset '" + path + "': missing magic");
  if (n_traj < 0) throw std::runtime_error("dataset '" + path + "': missing n_traj");
  if (ds.d_s < 1 || ds.d < 1) throw std::runtime_error("dataset '" + path + "': invalid dims");

  wire::Reader rd(data, pos);
  ds.trajs.reserve(static_cast<std::size_t>(n_traj));
  for (std::int64_t k = 0; k < n_traj; ++k) {
    Trajectory tr;
    tr.task_id = static_cast<int>(rd.i64());
    std::int64_t steps = rd.i64();
    if (steps < 0) throw std::runtime_error("dataset '" + path + "': negative step count");
    tr.progress = rd.f64();
    tr.steps.reserve(static_cast<std::size_t>(steps));
    for (std::int64_t t = 0; t < steps; ++t) {
      Step st;
      st.state.resize(static_cast<std::size_t>(ds.d_s));
      for (double& v : st.state) v = rd.f64();
      st.action.resize(static_cast<std::size_t>(ds.d));
      for (double& v : st.action) v = rd.f64();
      st.phase = static_cast<int>(rd.i64());
      tr.steps.push_back(std::move(st));
    }
    std::int64_t flen = rd.i64();
    if (flen < 0) throw std::runtime_error("dataset '" + path + "': negative final-state length");
    tr.final_state.resize(static_cast<std::size_t>(flen));
    for (double& v : tr.final_state) v = rd.f64();
    ds.trajs.push_back(std::move(tr));
  }
  if (!rd.exhausted()) {
    throw std::runtime_error("dataset '" + path + "': trailing bytes after last trajectory");
  }
  return ds;
}

std::pair<Tensor, Tensor> traj_matrices(const Trajectory& traj) {
  const int T = static_cast<int>(traj.steps.size());
  if (T < 1) throw std::invalid_argument("traj_matrices: empty trajectory");
  const int d_s = static_cast<int>(traj.steps.front().state.size());
  const int d = static_cast<int>(traj.steps.front().action.size());
  std::vector<double> sv(static_cast<std::size_t>(T) * d_s);
  std::vector<double> av(static_cast<std::size_t>(T) * d);
  for (int t = 0; t < T; ++t) {
    const Step& st = traj.steps[static_cast<std::size_t>(t)];
    if (static_cast<int>(st.state.size()) != d_s || static_cast<int>(st.action.size()) != d) {
      throw std::invalid_argument("traj_matrices: ragged trajectory");
    }
    for (int j = 0; j < d_s; ++j) sv[static_cast<std::size_t>(t) * d_s + j] = st.state[static_cast<std::size_t>(j)];
    for (int j = 0; j < d; ++j) av[static_cast<std::size_t>(t) * d + j] = st.action[static_cast<std::size_t>(j)];
  }
  return {Tensor({T, d_s}, std::move(sv)), Tensor({T, d}, std::move(av))};
}

}  // namespace smp
