// SPDX-License-Identifier: Apache-2.0
#include "smp/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace smp::nn {

Linear Linear::init(int in, int out, Rng& rng) {
  if (in <= 0 || out <= 0) throw std::invalid_argument("Linear::init: non-positive dims");
  const double lim = std::sqrt(6.0 / (in + out));
  std::vector<double> w(static_cast<std::size_t>(in) * out);
  for (double& v : w) v = rng.uniform(-lim, lim);
  Linear l;
  l.W = Tensor({in, out}, std::move(w));
  l.b = Tensor::zeros({out});
  return l;
}

Tensor Linear::forward(const Tensor& x) const { return add_rowvec(matmul(x, W), b); }

Linear Linear::watched(Tape& tape) const {
  Linear l;
  l.W = tape.watch(W);
  l.b = tape.watch(b);
  return l;
}

void Linear::collect(const std::string& prefix, ParamRefs& out) {
  out.emplace_back(prefix + ".W", &W);
  out.emplace_back(prefix + ".b", &b);
}

MLP MLP::init(const std::vector<int>& dims, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("MLP::init: need at least {in, out} dims");
  MLP net;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i)
    net.layers.push_back(Linear::init(dims[i], dims[i + 1], rng));
  return net;
}

Tensor MLP::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(h);
    if (i + 1 < layers.size()) h = softplus(h);
  }
  return h;
}

MLP MLP::watched(Tape& tape) const {
  MLP net;
  net.layers.reserve(layers.size());
  for (const Linear& l : layers) net.layers.push_back(l.watched(tape));
  return net;
}

void MLP::collect(const std::string& prefix, ParamRefs& out) {
  for (std::size_t i = 0; i < layers.size(); ++i)
    layers[i].collect(prefix + ".l" + std::to_string(i), out);
}

int MLP::param_count() const {
  int n = 0;
  for (const Linear& l : layers) n += l.param_count();
  return n;
}

}  // namespace smp::nn
