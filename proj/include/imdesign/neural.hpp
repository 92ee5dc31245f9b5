#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "imdesign/errors.hpp"
#include "imdesign/rng.hpp"
#include "imdesign/text_format.hpp"

namespace imdesign::nn {

/// Fully connected layer; weight is (out x in) row-major.
struct Dense {
  int in = 0;
  int out = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  static Dense zeros(int in, int out) {
    return Dense{in, out, std::vector<double>(static_cast<std::size_t>(in) * out, 0.0),
                 std::vector<double>(static_cast<std::size_t>(out), 0.0)};
  }

  bool same_shape(const Dense& o) const { return in == o.in && out == o.out; }
  bool operator==(const Dense&) const = default;
};

/// tanh hidden layers, identity output.
struct Mlp {
  std::vector<Dense> layers;

  int input_size() const { return layers.empty() ? 0 : layers.front().in; }
  int output_size() const { return layers.empty() ? 0 : layers.back().out; }

  std::vector<int> sizes() const {
    std::vector<int> s;
    if (layers.empty()) return s;
    s.push_back(layers.front().in);
    for (const auto& l : layers) s.push_back(l.out);
    return s;
  }

  bool same_shape(const Mlp& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (!layers[i].same_shape(o.layers[i])) return false;
    return true;
  }

  bool operator==(const Mlp&) const = default;
};

/// Gradients with the same layout as the network they belong to.
struct Grads {
  std::vector<Dense> layers;

  static Grads zeros_like(const Mlp& net) {
    Grads g;
    for (const auto& l : net.layers) g.layers.push_back(Dense::zeros(l.in, l.out));
    return g;
  }

  void set_zero() {
    for (auto& l : layers) {
      std::fill(l.weight.begin(), l.weight.end(), 0.0);
      std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& l : layers) {
      for (double w : l.weight) s += w * w;
      for (double b : l.bias) s += b * b;
    }
    return s;
  }

  void scale(double k) {
    for (auto& l : layers) {
      for (double& w : l.weight) w *= k;
      for (double& b : l.bias) b *= k;
    }
  }

  bool all_finite() const {
    for (const auto& l : layers) {
      for (double w : l.weight)
        if (!std::isfinite(w)) return false;
      for (double b : l.bias)
        if (!std::isfinite(b)) return false;
    }
    return true;
  }
};

inline bool congruent(const Mlp& net, const Grads& g) {
  if (net.layers.size() != g.layers.size()) return false;
  for (std::size_t i = 0; i < g.layers.size(); ++i)
    if (!net.layers[i].same_shape(g.layers[i])) return false;
  return true;
}

/// Glorot-uniform weights, zero biases. `sizes` lists input, hidden..., output widths.
inline Mlp init(std::span<const int> sizes, std::uint64_t seed) {
  if (sizes.size() < 2) throw ContractViolation("an MLP needs at least input and output sizes");
  for (int s : sizes)
    if (s < 1) throw ContractViolation("layer sizes must be positive");
  Rng rng(seed);
  Mlp net;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    Dense l = Dense::zeros(sizes[i], sizes[i + 1]);
    const double a = std::sqrt(6.0 / (sizes[i] + sizes[i + 1]));
    for (double& w : l.weight) w = rng.uniform(-a, a);
    net.layers.push_back(std::move(l));
  }
  return net;
}

/// Activations of one forward pass. acts[0] is the input, acts[k] the output of layer k-1.
struct Cache {
  std::vector<std::vector<double>> acts;

  std::span<const double> output() const { return acts.back(); }
};

inline void forward(const Mlp& net, std::span<const double> input, Cache& cache) {
  if (net.layers.empty()) throw ContractViolation("forward on an empty network");
  if (static_cast<int>(input.size()) != net.input_size())
    throw ContractViolation("forward: input has " + std::to_string(input.size()) + " entries, network expects " +
                            std::to_string(net.input_size()));
  cache.acts.resize(net.layers.size() + 1);
  cache.acts[0].assign(input.begin(), input.end());
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const Dense& l = net.layers[k];
    const auto& x = cache.acts[k];
    auto& y = cache.acts[k + 1];
    y.resize(static_cast<std::size_t>(l.out));
    const bool hidden = k + 1 < net.layers.size();
    for (int o = 0; o < l.out; ++o) {
      const double* row = l.weight.data() + static_cast<std::size_t>(o) * l.in;
      double z = l.bias[static_cast<std::size_t>(o)];
      for (int i = 0; i < l.in; ++i) z += row[i] * x[static_cast<std::size_t>(i)];
      y[static_cast<std::size_t>(o)] = hidden ? std::tanh(z) : z;
    }
  }
}

inline Cache forward(const Mlp& net, std::span<const double> input) {
  Cache c;
  forward(net, input, c);
  return c;
}

/// Adds the parameter gradient of <output_grad, output> into `grads`.
inline void accumulate_backward(const Mlp& net, const Cache& cache, std::span<const double> output_grad,
                                Grads& grads) {
  if (cache.acts.size() != net.layers.size() + 1)
    throw ContractViolation("backward: cache does not come from this network");
  for (std::size_t k = 0; k < net.layers.size(); ++k)
    if (cache.acts[k].size() != static_cast<std::size_t>(net.layers[k].in) ||
        cache.acts[k + 1].size() != static_cast<std::size_t>(net.layers[k].out))
      throw ContractViolation("backward: cache shape mismatch");
  if (static_cast<int>(output_grad.size()) != net.output_size())
    throw ContractViolation("backward: output gradient has the wrong size");
  if (!congruent(net, grads)) throw ContractViolation("backward: gradient buffer shape mismatch");

  std::vector<double> delta(output_grad.begin(), output_grad.end());
  std::vector<double> prev;
  for (std::size_t k = net.layers.size(); k-- > 0;) {
    const Dense& l = net.layers[k];
    Dense& g = grads.layers[k];
    const auto& x = cache.acts[k];
    for (int o = 0; o < l.out; ++o) {
      const double d = delta[static_cast<std::size_t>(o)];
      if (d == 0.0) continue;
      double* grow = g.weight.data() + static_cast<std::size_t>(o) * l.in;
      for (int i = 0; i < l.in; ++i) grow[i] += d * x[static_cast<std::size_t>(i)];
      g.bias[static_cast<std::size_t>(o)] += d;
    }
    if (k == 0) break;
    prev.assign(static_cast<std::size_t>(l.in), 0.0);
    for (int o = 0; o < l.out; ++o) {
      const double d = delta[static_cast<std::size_t>(o)];
      if (d == 0.0) continue;
      const double* row = l.weight.data() + static_cast<std::size_t>(o) * l.in;
      for (int i = 0; i < l.in; ++i) prev[static_cast<std::size_t>(i)] += row[i] * d;
    }
    // x holds tanh outputs of the previous layer.
    for (int i = 0; i < l.in; ++i) {
      const double a = x[static_cast<std::size_t>(i)];
      prev[static_cast<std::size_t>(i)] *= 1.0 - a * a;
    }
    delta.swap(prev);
  }
}

inline Grads backward(const Mlp& net, const Cache& cache, std::span<const double> output_grad) {
  Grads g = Grads::zeros_like(net);
  accumulate_backward(net, cache, output_grad, g);
  return g;
}

/// Rescales both gradient sets so their joint L2 norm is at most max_norm. Returns the pre-clip norm.
inline double clip_global_norm(std::span<Grads* const> grads, double max_norm) {
  double sq = 0.0;
  for (const Grads* g : grads) sq += g->squared_norm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0)
    for (Grads* g : grads) g->scale(max_norm / norm);
  return norm;
}

struct AdamState {
  Grads m;
  Grads v;
  long long step = 0;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_network(const Mlp& net, double lr) {
    AdamState s;
    s.m = Grads::zeros_like(net);
    s.v = Grads::zeros_like(net);
    s.lr = lr;
    return s;
  }
};

/// Bias-corrected adaptive-moment update of `net` in place.
inline void adam_step(Mlp& net, const Grads& grads, AdamState& state) {
  if (!congruent(net, grads) || !congruent(net, state.m) || !congruent(net, state.v))
    throw ContractViolation("adam_step: shape mismatch");
  if (!grads.all_finite()) throw TrainingDiverged("adam_step: non-finite gradient");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                    std::vector<double>& v) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  };
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    update(net.layers[k].weight, grads.layers[k].weight, state.m.layers[k].weight, state.v.layers[k].weight);
    update(net.layers[k].bias, grads.layers[k].bias, state.m.layers[k].bias, state.v.layers[k].bias);
  }
}

/// Softmax distribution over a small set of actions.
class Categorical {
 public:
  explicit Categorical(std::span<const double> logits) : probs_(logits.size()), log_probs_(logits.size()) {
    if (logits.empty()) throw ContractViolation("categorical over zero outcomes");
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      probs_[i] = std::exp(logits[i] - mx);
      sum += probs_[i];
    }
    const double log_sum = std::log(sum);
    for (std::size_t i = 0; i < logits.size(); ++i) {
      probs_[i] /= sum;
      log_probs_[i] = logits[i] - mx - log_sum;
    }
  }

  std::size_t size() const { return probs_.size(); }
  std::span<const double> probs() const { return probs_; }
  double prob(std::size_t a) const { return probs_.at(a); }
  double log_prob(std::size_t a) const { return log_probs_.at(a); }

  double entropy() const {
    double h = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i)
      if (probs_[i] > 0.0) h -= probs_[i] * log_probs_[i];
    return h;
  }

  /// Inverse-CDF draw using one uniform from `rng`.
  std::size_t sample(Rng& rng) const {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
      acc += probs_[i];
      if (u < acc) return i;
    }
    // u landed in the rounding slack above the last partial sum.
    for (std::size_t i = probs_.size(); i-- > 0;)
      if (probs_[i] > 0.0) return i;
    return probs_.size() - 1;
  }

  std::size_t argmax() const {
    return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
  }

  /// d log p(a) / d logits.
  std::vector<double> log_prob_grad(std::size_t a) const {
    std::vector<double> g(probs_.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = (i == a ? 1.0 : 0.0) - probs_[i];
    return g;
  }

  /// d entropy / d logits.
  std::vector<double> entropy_grad() const {
    const double h = entropy();
    std::vector<double> g(probs_.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = -probs_[i] * (log_probs_[i] + h);
    return g;
  }

 private:
  std::vector<double> probs_;
  std::vector<double> log_probs_;
};

// --- serialization -----------------------------------------------------------
// Written inside a checkpoint document as "<prefix>.sizes" plus one line per tensor.

inline void write_tensors(std::ostream& os, const std::string& prefix, const std::vector<Dense>& layers) {
  os << prefix << ".sizes =";
  if (!layers.empty()) os << " " << layers.front().in;
  for (const auto& l : layers) os << " " << l.out;
  os << "\n";
  for (std::size_t k = 0; k < layers.size(); ++k) {
    os << prefix << ".layer" << k << ".weight =";
    for (double w : layers[k].weight) os << " " << text::format_double(w);
    os << "\n" << prefix << ".layer" << k << ".bias =";
    for (double b : layers[k].bias) os << " " << text::format_double(b);
    os << "\n";
  }
}

inline std::vector<Dense> read_tensors(const text::Section& sec, const std::string& prefix) {
  const auto& se = sec.require(prefix + ".sizes");
  std::vector<int> sizes;
  for (double s : text::parse_doubles(se.value, se.line)) {
    if (s < 1 || s != std::floor(s) || s > 1e6) throw MalformedFile("bad layer size", se.line);
    sizes.push_back(static_cast<int>(s));
  }
  if (sizes.size() < 2) throw MalformedFile("network needs at least two sizes", se.line);
  std::vector<Dense> layers;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    Dense l = Dense::zeros(sizes[k], sizes[k + 1]);
    const auto& we = sec.require(prefix + ".layer" + std::to_string(k) + ".weight");
    const auto& be = sec.require(prefix + ".layer" + std::to_string(k) + ".bias");
    l.weight = text::parse_doubles(we.value, we.line);
    l.bias = text::parse_doubles(be.value, be.line);
    if (l.weight.size() != static_cast<std::size_t>(l.in) * l.out) throw MalformedFile("weight size mismatch", we.line);
    if (l.bias.size() != static_cast<std::size_t>(l.out)) throw MalformedFile("bias size mismatch", be.line);
    layers.push_back(std::move(l));
  }
  return layers;
}

}  // namespace imdesign::nn
