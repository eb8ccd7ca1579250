// SPDX-License-Identifier: Apache-2.0
#include "smp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace smp {
namespace {

void write_whole_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("metrics: cannot open " + path + " for writing");
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw std::runtime_error("metrics: write failed for " + path);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool needs_quoting(const std::string& field) {
  return field.find_first_of(",\"\n\r") != std::string::npos;
}

std::string csv_field(const std::string& field) {
  if (!needs_quoting(field)) return field;
  std::string out = "\"";
  for (char c : field) {
    out += c;
    if (c == '"') out += '"';
  }
  out += '"';
  return out;
}

void check_row_names(const std::vector<std::string>& names, const MetricsRow& row,
                     std::size_t row_idx) {
  if (row.values.size() != names.size())
    throw std::invalid_argument("metrics: row " + std::to_string(row_idx) + " has " +
                                std::to_string(row.values.size()) + " values, header has " +
                                std::to_string(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i)
    if (row.values[i].first != names[i])
      throw std::invalid_argument("metrics: row " + std::to_string(row_idx) + " column '" +
                                  row.values[i].first + "' does not match header '" + names[i] +
                                  "'");
}

void check_names(const std::vector<std::string>& names) {
  for (const auto& n : names) {
    if (n.empty()) throw std::invalid_argument("metrics: empty column name");
    if (n == "run" || n == "index")
      throw std::invalid_argument("metrics: column name '" + n + "' is reserved");
  }
  for (std::size_t i = 0; i < names.size(); ++i)
    for (std::size_t j = i + 1; j < names.size(); ++j)
      if (names[i] == names[j])
        throw std::invalid_argument("metrics: duplicate column name '" + names[i] + "'");
}

// Splits one RFC 4180 stream into records of fields; quoted fields may embed
// separators and newlines.
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false, field_started = false;
  std::size_t i = 0;
  auto end_field = [&] {
    record.push_back(field);
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(record);
    record.clear();
  };
  while (i < text.size()) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
      ++i;
      continue;
    }
    switch (c) {
      case '"':
        if (field.empty() && !field_started)
          in_quotes = true;
        else
          throw std::invalid_argument("metrics: stray quote in CSV");
        field_started = true;
        ++i;
        break;
      case ',':
        end_field();
        ++i;
        break;
      case '\r':
        ++i;
        break;
      case '\n':
        end_record();
        ++i;
        break;
      default:
        field += c;
        field_started = true;
        ++i;
        break;
    }
  }
  if (field_started || !record.empty()) end_record();
  return records;
}

}  // namespace

int gate_argmax(const std::vector<double>& g) {
  if (g.empty()) throw std::invalid_argument("gate_argmax: empty gate vector");
  return static_cast<int>(std::max_element(g.begin(), g.end()) - g.begin());
}

double flip_rate(const std::vector<int>& argmax_seq) {
  if (argmax_seq.size() < 2)
    throw std::invalid_argument("flip_rate: need at least 2 steps, got " +
                                std::to_string(argmax_seq.size()));
  int flips = 0;
  for (std::size_t t = 1; t < argmax_seq.size(); ++t)
    if (argmax_seq[t] != argmax_seq[t - 1]) ++flips;
  return static_cast<double>(flips) / static_cast<double>(argmax_seq.size() - 1);
}

double mean_segment_length(const std::vector<int>& argmax_seq) {
  if (argmax_seq.empty()) throw std::invalid_argument("mean_segment_length: empty sequence");
  int segments = 1;
  for (std::size_t t = 1; t < argmax_seq.size(); ++t)
    if (argmax_seq[t] != argmax_seq[t - 1]) ++segments;
  return static_cast<double>(argmax_seq.size()) / static_cast<double>(segments);
}

std::vector<double> principal_angles(const Tensor& B1, const Tensor& B2) {
  if (B1.rank() != 2 || B2.rank() != 2)
    throw std::invalid_argument("principal_angles: inputs must be matrices");
  if (B1.rows() != B2.rows())
    throw std::invalid_argument("principal_angles: ambient dimensions differ");
  for (const Tensor* B : {&B1, &B2}) {
    int d = B->rows(), k = B->cols();
    if (k < 1 || k > d) throw std::invalid_argument("principal_angles: bad column count");
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) {
        double dot = 0.0;
        for (int r = 0; r < d; ++r) dot += B->at(r, a) * B->at(r, b);
        double target = (a == b) ? 1.0 : 0.0;
        if (!(std::abs(dot - target) <= 1e-6))
          throw std::invalid_argument("principal_angles: input columns are not orthonormal");
      }
  }

  // Overlap M = B1^T B2, p x q, stored as q column vectors of length p.
  int d = B1.rows(), p = B1.cols(), q = B2.cols();
  std::vector<std::vector<double>> col(q, std::vector<double>(p, 0.0));
  for (int j = 0; j < q; ++j)
    for (int i = 0; i < p; ++i) {
      double s = 0.0;
      for (int r = 0; r < d; ++r) s += B1.at(r, i) * B2.at(r, j);
      col[j][i] = s;
    }

  // One-sided Jacobi: rotate column pairs until mutually orthogonal; the
  // singular values are then the column norms.
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int a = 0; a < q; ++a)
      for (int b = a + 1; b < q; ++b) {
        double saa = 0.0, sbb = 0.0, sab = 0.0;
        for (int i = 0; i < p; ++i) {
          saa += col[a][i] * col[a][i];
          sbb += col[b][i] * col[b][i];
          sab += col[a][i] * col[b][i];
        }
        off = std::max(off, std::abs(sab));
        if (std::abs(sab) <= 1e-18) continue;
        double zeta = (sbb - saa) / (2.0 * sab);
        double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        double cs = 1.0 / std::sqrt(1.0 + t * t), sn = cs * t;
        for (int i = 0; i < p; ++i) {
          double xa = col[a][i], xb = col[b][i];
          col[a][i] = cs * xa - sn * xb;
          col[b][i] = sn * xa + cs * xb;
        }
      }
    if (off < 1e-14) break;
  }

  std::vector<double> sv(q, 0.0);
  for (int j = 0; j < q; ++j) {
    double s = 0.0;
    for (int i = 0; i < p; ++i) s += col[j][i] * col[j][i];
    sv[j] = std::sqrt(s);
  }
  std::sort(sv.begin(), sv.end(), std::greater<double>());
  int n_angles = std::min(p, q);
  std::vector<double> angles(n_angles, 0.0);
  for (int j = 0; j < n_angles; ++j)
    angles[j] = std::acos(std::min(1.0, std::max(0.0, sv[j])));
  std::sort(angles.begin(), angles.end());
  return angles;
}

ParamAccounting active_param_count(SkillPolicy& policy,
                                   const std::vector<std::vector<int>>& active_trace) {
  if (active_trace.empty())
    throw std::invalid_argument("active_param_count: empty active-set trace");
  int K = policy.dims.K;
  long long shared = 0;
  std::vector<long long> expert(K, 0);
  for (auto& [name, t] : policy.params()) {
    if (name.rfind("basis.", 0) == 0 || name.rfind("gates.router.", 0) == 0) {
      shared += t->numel();
    } else if (name.rfind("experts.e", 0) == 0) {
      std::size_t dot = name.find('.', 9);
      int idx = std::stoi(name.substr(9, dot - 9));
      expert[idx] += t->numel();
    }
    // gates.posterior.* and gates.usage.* are training-only amortizers.
  }
  ParamAccounting acc;
  acc.shared = shared;
  acc.total = shared;
  for (int i = 0; i < K; ++i) acc.total += expert[i];

  double mean_selected = 0.0;
  for (std::size_t t = 0; t < active_trace.size(); ++t) {
    const auto& S = active_trace[t];
    if (S.empty())
      throw std::invalid_argument("active_param_count: empty active set at step " +
                                  std::to_string(t));
    std::vector<char> seen(K, 0);
    long long step_sum = 0;
    for (int i : S) {
      if (i < 0 || i >= K)
        throw std::invalid_argument("active_param_count: expert index out of range");
      if (seen[i]++)
        throw std::invalid_argument("active_param_count: duplicate expert in active set");
      step_sum += expert[i];
    }
    mean_selected += static_cast<double>(step_sum);
  }
  mean_selected /= static_cast<double>(active_trace.size());
  acc.active = static_cast<double>(shared) + mean_selected;
  acc.ratio = acc.active / static_cast<double>(acc.total);
  return acc;
}

double subspace_trace_fraction(const Tensor& B, const std::vector<double>& masses,
                               const std::vector<int>& S, const Tensor& G) {
  if (B.rank() != 2 || G.rank() != 2 || B.rows() != G.rows())
    throw std::invalid_argument("subspace_trace_fraction: shape mismatch");
  if (static_cast<int>(masses.size()) != B.cols())
    throw std::invalid_argument("subspace_trace_fraction: need one mass per column");
  int d = G.rows(), r = G.cols();
  for (int a = 0; a < r; ++a)
    for (int b = 0; b < r; ++b) {
      double dot = 0.0;
      for (int i = 0; i < d; ++i) dot += G.at(i, a) * G.at(i, b);
      if (!(std::abs(dot - (a == b ? 1.0 : 0.0)) <= 1e-6))
        throw std::invalid_argument("subspace_trace_fraction: G is not orthonormal");
    }
  if (S.empty()) throw std::invalid_argument("subspace_trace_fraction: empty active set");
  double num = 0.0, den = 0.0;
  for (int i : S) {
    if (i < 0 || i >= B.cols())
      throw std::invalid_argument("subspace_trace_fraction: index out of range");
    double col_norm2 = 0.0, proj2 = 0.0;
    for (int a = 0; a < r; ++a) {
      double dot = 0.0;
      for (int row = 0; row < d; ++row) dot += G.at(row, a) * B.at(row, i);
      proj2 += dot * dot;
    }
    for (int row = 0; row < d; ++row) col_norm2 += B.at(row, i) * B.at(row, i);
    if (!(std::abs(col_norm2 - 1.0) <= 1e-6))
      throw std::invalid_argument("subspace_trace_fraction: selected column not unit length");
    num += masses[static_cast<std::size_t>(i)] * proj2;
    den += masses[static_cast<std::size_t>(i)];
  }
  if (!(den > 0.0)) throw std::invalid_argument("subspace_trace_fraction: zero selected mass");
  return num / den;
}

std::vector<int> phase_labels(const Trajectory& traj, const TaskSpec& spec,
                              const EnvParams& env) {
  std::vector<int> labels;
  labels.reserve(traj.steps.size());
  int phase = 0;
  for (const auto& step : traj.steps) {
    scripted_expert(step.state, spec, env, phase);  // advances past satisfied phases
    labels.push_back(phase);
  }
  return labels;
}

void emit_csv(const std::vector<std::string>& names, const std::vector<MetricsRow>& rows,
              const std::string& path) {
  check_names(names);
  std::string body = "run,index";
  for (const auto& n : names) {
    body += ',';
    body += csv_field(n);
  }
  body += '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    check_row_names(names, rows[r], r);
    body += csv_field(rows[r].run);
    body += ',';
    body += std::to_string(rows[r].index);
    for (const auto& [name, v] : rows[r].values) {
      body += ',';
      body += csv_field(fmt_double(v));
    }
    body += '\n';
  }
  write_whole_file(path, body);
}

void emit_jsonl(const std::vector<std::string>& names, const std::vector<MetricsRow>& rows,
                const std::string& path) {
  check_names(names);
  std::string body;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    check_row_names(names, rows[r], r);
    nlohmann::ordered_json j;
    j["run"] = rows[r].run;
    j["index"] = rows[r].index;
    for (const auto& [name, v] : rows[r].values) j[name] = v;
    body += j.dump();
    body += '\n';
  }
  write_whole_file(path, body);
}

std::pair<std::vector<std::string>, std::vector<MetricsRow>> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("metrics: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  auto records = parse_csv(ss.str());
  if (records.empty()) throw std::invalid_argument("metrics: CSV has no header: " + path);
  const auto& head = records[0];
  if (head.size() < 2 || head[0] != "run" || head[1] != "index")
    throw std::invalid_argument("metrics: CSV header must start with run,index: " + path);
  std::vector<std::string> names(head.begin() + 2, head.end());
  check_names(names);
  std::vector<MetricsRow> rows;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.size() != head.size())
      throw std::invalid_argument("metrics: CSV row " + std::to_string(r) + " has " +
                                  std::to_string(rec.size()) + " fields, header has " +
                                  std::to_string(head.size()));
    MetricsRow row;
    row.run = rec[0];
    std::size_t used = 0;
    row.index = std::stoll(rec[1], &used);
    if (used != rec[1].size())
      throw std::invalid_argument("metrics: bad index field '" + rec[1] + "'");
    for (std::size_t c = 2; c < rec.size(); ++c) {
      const char* s = rec[c].c_str();
      char* endp = nullptr;
      double v = std::strtod(s, &endp);
      if (endp == s || *endp != '\0')
        throw std::invalid_argument("metrics: bad numeric field '" + rec[c] + "'");
      row.values.emplace_back(names[c - 2], v);
    }
    rows.push_back(std::move(row));
  }
  return {std::move(names), std::move(rows)};
}

}  // namespace smp
