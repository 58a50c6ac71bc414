// Copyright 2026 The bumlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bumlab/autodiff/graph.hpp"

namespace bumlab::model {

using ad::Graph;
using ad::Shape;
using ad::Tensor;
using ad::Var;

enum class Head { softmax, sigmoid };

inline std::string to_string(Head h) { return h == Head::softmax ? "softmax" : "sigmoid"; }

inline Head head_from_string(const std::string& s) {
  if (s == "softmax") return Head::softmax;
  if (s == "sigmoid") return Head::sigmoid;
  throw std::invalid_argument("unknown head kind '" + s + "'");
}

struct Layer {
  Tensor weight;  // d_out x d_in
  Tensor bias;    // d_out
};

/// Low-rank update W + A B for one layer. A is d_out x r, B is r x d_in.
struct LoraAdapter {
  Tensor a;
  Tensor b;
  std::size_t rank = 0;
  bool frozen_base = true;
};

struct ModelParams {
  std::vector<Layer> layers;
  Head head = Head::softmax;
  std::map<std::size_t, LoraAdapter> adapters;  // keyed by layer index
  std::uint64_t seed = 0;

  std::size_t input_dim() const { return layers.front().weight.cols(); }
  std::size_t output_dim() const { return layers.back().weight.rows(); }
  /// Number of classes the head distinguishes (2 for a sigmoid head).
  std::size_t num_classes() const { return head == Head::sigmoid ? 2 : output_dim(); }
  bool base_frozen() const {
    for (const auto& [_, ad] : adapters)
      if (ad.frozen_base) return true;
    return false;
  }

  friend bool operator==(const ModelParams& x, const ModelParams& y) {
    if (x.head != y.head || x.layers.size() != y.layers.size() ||
        x.adapters.size() != y.adapters.size())
      return false;
    for (std::size_t i = 0; i < x.layers.size(); ++i) {
      if (!(x.layers[i].weight == y.layers[i].weight) || !(x.layers[i].bias == y.layers[i].bias))
        return false;
    }
    for (const auto& [k, a] : x.adapters) {
      auto it = y.adapters.find(k);
      if (it == y.adapters.end() || !(it->second.a == a.a) || !(it->second.b == a.b) ||
          it->second.frozen_base != a.frozen_base)
        return false;
    }
    return true;
  }
};

struct Architecture {
  std::vector<std::size_t> layer_sizes;
  Head head = Head::softmax;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

inline Architecture architecture(const ModelParams& m) {
  Architecture a{{m.input_dim()}, m.head};
  for (const auto& l : m.layers) a.layer_sizes.push_back(l.weight.rows());
  return a;
}

inline void validate(const ModelParams& m) {
  if (m.layers.empty()) throw std::invalid_argument("model has no layers");
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const auto& l = m.layers[i];
    if (!l.weight.is_matrix() || l.bias.size() != l.weight.rows())
      throw ShapeError("layer " + std::to_string(i) + " has inconsistent weight/bias shapes");
    if (i > 0 && l.weight.cols() != m.layers[i - 1].weight.rows())
      throw ShapeError("layer " + std::to_string(i) + " input width " +
                       std::to_string(l.weight.cols()) + " does not chain with previous output " +
                       std::to_string(m.layers[i - 1].weight.rows()));
  }
  if (m.head == Head::sigmoid && m.output_dim() != 1)
    throw ShapeError("sigmoid head requires a single output unit");
  for (const auto& [k, ad] : m.adapters) {
    if (k >= m.layers.size())
      throw std::invalid_argument("adapter refers to missing layer " + std::to_string(k));
    const auto& w = m.layers[k].weight;
    if (ad.a.shape() != Shape{w.rows(), ad.rank} || ad.b.shape() != Shape{ad.rank, w.cols()})
      throw ShapeError("adapter shapes do not conform to layer " + std::to_string(k));
  }
}

/// Weights uniform in +-sqrt(6 / (d_in + d_out)), biases zero.
inline ModelParams init_model(const std::vector<std::size_t>& layer_sizes, Head head,
                              std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw std::invalid_argument("init_model: need at least two layer sizes");
  for (auto s : layer_sizes)
    if (s == 0) throw std::invalid_argument("init_model: layer sizes must be positive");
  if (head == Head::sigmoid && layer_sizes.back() != 1)
    throw std::invalid_argument("init_model: sigmoid head requires output size 1");
  ModelParams m;
  m.head = head;
  m.seed = seed;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
    const std::size_t din = layer_sizes[i], dout = layer_sizes[i + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(din + dout));
    std::uniform_real_distribution<double> u(-limit, limit);
    std::vector<double> w(dout * din);
    for (auto& v : w) v = u(rng);
    m.layers.push_back({Tensor({dout, din}, std::move(w)), Tensor::zeros({dout})});
  }
  return m;
}

inline ModelParams init_model(const Architecture& arch, std::uint64_t seed) {
  return init_model(arch.layer_sizes, arch.head, seed);
}

// ---------------------------------------------------------------------------
// Parameter slots: a fixed ordering of every tensor in a model, used for
// binding to graphs, flattening, optimizers and checkpoints.
//   W0, b0, W1, b1, ..., then (A, B) for each adapter in layer order.

enum class SlotKind { weight, bias, lora_a, lora_b };

struct SlotInfo {
  SlotKind kind;
  std::size_t layer;
  std::string name;
};

inline std::vector<SlotInfo> slot_info(const ModelParams& m) {
  std::vector<SlotInfo> out;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    out.push_back({SlotKind::weight, i, "layer" + std::to_string(i) + ".weight"});
    out.push_back({SlotKind::bias, i, "layer" + std::to_string(i) + ".bias"});
  }
  for (const auto& [k, _] : m.adapters) {
    out.push_back({SlotKind::lora_a, k, "lora" + std::to_string(k) + ".a"});
    out.push_back({SlotKind::lora_b, k, "lora" + std::to_string(k) + ".b"});
  }
  return out;
}

inline std::vector<Tensor*> slots(ModelParams& m) {
  std::vector<Tensor*> out;
  for (auto& l : m.layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  for (auto& [_, ad] : m.adapters) {
    out.push_back(&ad.a);
    out.push_back(&ad.b);
  }
  return out;
}

inline std::vector<const Tensor*> slots(const ModelParams& m) {
  std::vector<const Tensor*> out;
  for (const auto& l : m.layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  for (const auto& [_, ad] : m.adapters) {
    out.push_back(&ad.a);
    out.push_back(&ad.b);
  }
  return out;
}

enum class ParamSet {
  trainable,  // base weights, or only adapters when the base is frozen
  base,
  adapters,
  head,       // final layer weight and bias
  all,
};

inline std::vector<bool> param_mask(const ModelParams& m, ParamSet set) {
  const auto info = slot_info(m);
  std::vector<bool> mask(info.size(), false);
  if (set == ParamSet::trainable) set = m.base_frozen() ? ParamSet::adapters : ParamSet::base;
  for (std::size_t i = 0; i < info.size(); ++i) {
    const bool is_adapter = info[i].kind == SlotKind::lora_a || info[i].kind == SlotKind::lora_b;
    switch (set) {
      case ParamSet::base: mask[i] = !is_adapter; break;
      case ParamSet::adapters: mask[i] = is_adapter; break;
      case ParamSet::head: mask[i] = !is_adapter && info[i].layer + 1 == m.layers.size(); break;
      case ParamSet::all: mask[i] = true; break;
      case ParamSet::trainable: break;
    }
  }
  return mask;
}

/// Puts every slot on the graph: masked slots as differentiable leaves, the
/// rest as constants.
inline std::vector<Var> bind_params(Graph& g, const ModelParams& m, const std::vector<bool>& trainable) {
  auto ss = slots(m);
  std::vector<Var> out;
  out.reserve(ss.size());
  for (std::size_t i = 0; i < ss.size(); ++i) {
    Tensor t = *ss[i];
    t.clear_grad();
    out.push_back(trainable.at(i) ? g.leaf(std::move(t)) : g.constant(std::move(t)));
  }
  return out;
}

inline std::size_t flat_size(const ModelParams& m, const std::vector<bool>& mask) {
  auto ss = slots(m);
  std::size_t n = 0;
  for (std::size_t i = 0; i < ss.size(); ++i)
    if (mask[i]) n += ss[i]->size();
  return n;
}

inline Tensor flatten(const ModelParams& m, const std::vector<bool>& mask) {
  std::vector<double> out;
  auto ss = slots(m);
  for (std::size_t i = 0; i < ss.size(); ++i)
    if (mask[i]) out.insert(out.end(), ss[i]->data().begin(), ss[i]->data().end());
  if (out.empty()) throw std::invalid_argument("flatten: no parameters selected");
  return Tensor::vector(std::move(out));
}

inline void unflatten(ModelParams& m, const std::vector<bool>& mask, const Tensor& flat) {
  if (flat.size() != flat_size(m, mask)) throw ShapeError("unflatten: length mismatch");
  auto ss = slots(m);
  std::size_t off = 0;
  for (std::size_t i = 0; i < ss.size(); ++i) {
    if (!mask[i]) continue;
    auto& d = ss[i]->data();
    std::copy(flat.data().begin() + static_cast<std::ptrdiff_t>(off),
              flat.data().begin() + static_cast<std::ptrdiff_t>(off + d.size()), d.begin());
    off += d.size();
  }
}

/// Binds the masked slots as slices of one flat parameter node.
inline std::vector<Var> bind_flat(Graph& g, const ModelParams& m, const std::vector<bool>& mask,
                                  Var flat) {
  auto ss = slots(m);
  std::vector<Var> out;
  std::size_t off = 0;
  for (std::size_t i = 0; i < ss.size(); ++i) {
    if (mask[i]) {
      out.push_back(ad::slice(flat, off, ss[i]->shape()));
      off += ss[i]->size();
    } else {
      Tensor t = *ss[i];
      t.clear_grad();
      out.push_back(g.constant(std::move(t)));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forward pass.

namespace detail {

inline Var effective_weight(const ModelParams& m, std::span<const Var> bound, std::size_t layer) {
  Var w = bound[2 * layer];
  auto it = m.adapters.find(layer);
  if (it == m.adapters.end()) return w;
  std::size_t k = 0;
  for (const auto& [key, _] : m.adapters) {
    if (key == layer) break;
    ++k;
  }
  const std::size_t base = 2 * m.layers.size() + 2 * k;
  return ad::add(w, ad::matmul(bound[base], bound[base + 1]));
}

inline Var affine(const ModelParams& m, std::span<const Var> bound, std::size_t layer, Var h) {
  Var w = effective_weight(m, bound, layer);
  return ad::add_row(ad::matmul(h, ad::transpose(w)), bound[2 * layer + 1]);
}

}  // namespace detail

inline void check_width(const ModelParams& m, const Tensor& x) {
  if (!x.is_matrix() || x.cols() != m.input_dim()) {
    throw ShapeError("feature width " + ad::to_string(x.shape()) + " does not match model input " +
                     std::to_string(m.input_dim()));
  }
}

/// Activation of the last hidden layer (the input itself for linear models).
inline Var embedding_graph(const ModelParams& m, std::span<const Var> bound, Var x) {
  check_width(m, x.value());
  Var h = x;
  for (std::size_t i = 0; i + 1 < m.layers.size(); ++i) h = ad::relu(detail::affine(m, bound, i, h));
  return h;
}

/// Logits: (n, K) for softmax heads, (n, 1) for the sigmoid head.
inline Var forward_graph(const ModelParams& m, std::span<const Var> bound, Var x) {
  Var h = embedding_graph(m, bound, x);
  return detail::affine(m, bound, m.layers.size() - 1, h);
}

inline Tensor forward(const ModelParams& m, const Tensor& x) {
  check_width(m, x);
  Graph g;
  auto bound = bind_params(g, m, std::vector<bool>(slots(m).size(), false));
  Tensor out = forward_graph(m, bound, g.constant(x)).value();
  return out;
}

inline Tensor embed(const ModelParams& m, const Tensor& x) {
  Graph g;
  auto bound = bind_params(g, m, std::vector<bool>(slots(m).size(), false));
  return embedding_graph(m, bound, g.constant(x)).value();
}

// ---------------------------------------------------------------------------
// Losses.

inline void check_labels(const ModelParams& m, std::span<const int> labels, std::size_t rows) {
  if (labels.size() != rows)
    throw ShapeError("got " + std::to_string(labels.size()) + " labels for " + std::to_string(rows) +
                     " rows");
  const int k = static_cast<int>(m.num_classes());
  for (int y : labels)
    if (y < 0 || y >= k)
      throw std::out_of_range("label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
}

/// Mean cross-entropy of logits against integer labels.
inline Var loss_from_logits(Head head, Var logits, std::span<const int> labels) {
  Graph& g = *logits.graph;
  const std::size_t n = logits.value().rows(), k = logits.value().cols();
  if (head == Head::softmax) {
    Tensor onehot = Tensor::zeros({n, k});
    for (std::size_t i = 0; i < n; ++i) onehot(i, static_cast<std::size_t>(labels[i])) = 1.0;
    Var picked = ad::sum(ad::mul(g.constant(std::move(onehot)), ad::log_softmax(logits)));
    return ad::scale(picked, -1.0 / static_cast<double>(n));
  }
  Tensor y({n, 1}, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) y[i] = labels[i];
  Var per = ad::sub(ad::softplus(logits), ad::mul(g.constant(std::move(y)), logits));
  return ad::mean(per);
}

inline Var loss_graph(const ModelParams& m, std::span<const Var> bound, Var x,
                      std::span<const int> labels) {
  check_labels(m, labels, x.value().rows());
  return loss_from_logits(m.head, forward_graph(m, bound, x), labels);
}

inline double loss(const ModelParams& m, const Tensor& x, std::span<const int> labels) {
  check_width(m, x);
  Graph g;
  auto bound = bind_params(g, m, std::vector<bool>(slots(m).size(), false));
  return loss_graph(m, bound, g.constant(x), labels).item();
}

/// Class probabilities, (n, K); a sigmoid head yields columns (1 - p, p).
inline Tensor probabilities(Head head, const Tensor& logits) {
  const std::size_t n = logits.rows();
  if (head == Head::sigmoid) {
    Tensor out = Tensor::zeros({n, 2});
    for (std::size_t i = 0; i < n; ++i) {
      const double p = ad::detail::stable_sigmoid(logits[i]);
      out(i, 0) = 1.0 - p;
      out(i, 1) = p;
    }
    return out;
  }
  const std::size_t k = logits.cols();
  Tensor out = Tensor::zeros({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits(i, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, logits(i, j));
    double s = 0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(logits(i, j) - mx);
    for (std::size_t j = 0; j < k; ++j) out(i, j) = std::exp(logits(i, j) - mx) / s;
  }
  return out;
}

/// Per-sample cross-entropy, used by the membership-inference attacker.
inline std::vector<double> per_sample_loss(const ModelParams& m, const Tensor& x,
                                           std::span<const int> labels) {
  check_labels(m, labels, x.rows());
  Tensor logits = forward(m, x);
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (m.head == Head::sigmoid) {
      const double z = logits[i];
      out[i] = ad::detail::stable_softplus(z) - labels[i] * z;
    } else {
      const std::size_t k = logits.cols();
      double mx = logits(i, 0);
      for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, logits(i, j));
      double s = 0;
      for (std::size_t j = 0; j < k; ++j) s += std::exp(logits(i, j) - mx);
      out[i] = mx + std::log(s) - logits(i, static_cast<std::size_t>(labels[i]));
    }
  }
  return out;
}

inline std::vector<int> predict_from_logits(Head head, const Tensor& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (head == Head::sigmoid) {
      out[i] = ad::detail::stable_sigmoid(logits[i]) >= 0.5 ? 1 : 0;
    } else {
      std::size_t best = 0;
      for (std::size_t j = 1; j < logits.cols(); ++j)
        if (logits(i, j) > logits(i, best)) best = j;
      out[i] = static_cast<int>(best);
    }
  }
  return out;
}

inline std::vector<int> predict(const ModelParams& m, const Tensor& x) {
  return predict_from_logits(m.head, forward(m, x));
}

// ---------------------------------------------------------------------------
// Low-rank adapters.

/// Attaches rank-`rank` adapters to the given layers and freezes the base.
/// A is seeded uniform, B is zero, so the attached model computes exactly the
/// same function as the input model.
inline ModelParams attach_lora(const ModelParams& m, const std::vector<std::size_t>& layer_indices,
                               std::size_t rank, std::uint64_t seed) {
  if (rank == 0) throw std::invalid_argument("attach_lora: rank must be >= 1");
  ModelParams out = m;
  std::mt19937_64 rng(seed);
  for (auto idx : layer_indices) {
    if (idx >= m.layers.size())
      throw std::invalid_argument("attach_lora: layer index " + std::to_string(idx) + " out of range");
    const auto& w = m.layers[idx].weight;
    const std::size_t d = w.rows(), k = w.cols();
    if (rank > std::min(d, k))
      throw std::invalid_argument("attach_lora: rank " + std::to_string(rank) + " exceeds min(" +
                                  std::to_string(d) + ", " + std::to_string(k) + ")");
    const double limit = 1.0 / std::sqrt(static_cast<double>(rank));
    std::uniform_real_distribution<double> u(-limit, limit);
    std::vector<double> a(d * rank);
    for (auto& v : a) v = u(rng);
    out.adapters[idx] = LoraAdapter{Tensor({d, rank}, std::move(a)), Tensor::zeros({rank, k}), rank, true};
  }
  return out;
}

inline ModelParams detach_lora(const ModelParams& m) {
  ModelParams out = m;
  out.adapters.clear();
  return out;
}

/// Folds every adapter into its base weight (W <- W + A B) and drops adapters.
inline ModelParams merge_lora(const ModelParams& m) {
  ModelParams out = m;
  for (const auto& [idx, ad] : m.adapters) {
    auto& w = out.layers[idx].weight;
    for (std::size_t i = 0; i < w.rows(); ++i)
      for (std::size_t j = 0; j < w.cols(); ++j) {
        double s = 0;
        for (std::size_t r = 0; r < ad.rank; ++r) s += ad.a(i, r) * ad.b(r, j);
        w(i, j) += s;
      }
  }
  out.adapters.clear();
  return out;
}

/// Index of the layer feeding the output layer; 0 for single-layer models.
inline std::size_t final_hidden_layer(const ModelParams& m) {
  return m.layers.size() >= 2 ? m.layers.size() - 2 : 0;
}

}  // namespace bumlab::model
