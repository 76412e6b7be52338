// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#include "splitveil/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "splitveil/codec.hpp"
#include "splitveil/error.hpp"
#include "splitveil/rng.hpp"

namespace splitveil {

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kGelu: return "gelu";
  }
  return "unknown";
}

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  if (name == "gelu") return Activation::kGelu;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

void BackboneSpec::validate() const {
  if (layer_dims.size() < 2) throw ConfigError("backbone spec needs at least 2 layer widths");
  for (std::size_t w : layer_dims)
    if (w == 0) throw ConfigError("backbone spec has a zero-width layer");
}

std::string spec_hash(const BackboneSpec& spec) {
  std::string canon = "backbone:v1;act=" + std::string(to_string(spec.activation)) +
                      ";seed=" + std::to_string(spec.seed) + ";dims=";
  for (std::size_t w : spec.layer_dims) canon += std::to_string(w) + ",";
  return sha256_hex(canon);
}

namespace {

double activate(Activation act, double z) {
  switch (act) {
    case Activation::kTanh: return std::tanh(z);
    case Activation::kRelu: return z > 0.0 ? z : 0.0;
    case Activation::kGelu: return 0.5 * z * (1.0 + std::erf(z * std::numbers::sqrt2 / 2.0));
  }
  return z;
}

double activate_grad(Activation act, double z) {
  switch (act) {
    case Activation::kTanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::kRelu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::kGelu: {
      const double cdf = 0.5 * (1.0 + std::erf(z * std::numbers::sqrt2 / 2.0));
      const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
      return cdf + z * pdf;
    }
  }
  return 1.0;
}

void add_bias(Tensor& z, const std::vector<double>& bias) {
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto row = z.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias[j];
  }
}

}  // namespace

Backbone::Backbone(BackboneSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  Rng rng(spec_.seed);
  for (std::size_t l = 0; l < spec_.num_layers(); ++l) {
    const std::size_t in = spec_.layer_dims[l];
    const std::size_t out = spec_.layer_dims[l + 1];
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    DenseLayer layer{rng.normal_tensor(out, in, scale), std::vector<double>(out)};
    for (double& b : layer.bias) b = scale * rng.normal();
    layers_.push_back(std::move(layer));
  }
}

Backbone::Backbone(BackboneSpec spec, std::vector<DenseLayer> layers)
    : spec_(std::move(spec)), layers_(std::move(layers)) {
  spec_.validate();
  if (layers_.size() != spec_.num_layers()) throw DimensionError("backbone: layer count mismatch");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    if (L.weight.rows() != spec_.layer_dims[l + 1] || L.weight.cols() != spec_.layer_dims[l] ||
        L.bias.size() != spec_.layer_dims[l + 1]) {
      throw DimensionError("backbone: layer " + std::to_string(l) + " shape mismatch");
    }
  }
}

Tensor Backbone::forward(const Tensor& x) const {
  if (x.cols() != spec_.input_dim()) throw DimensionError("backbone forward: input width mismatch");
  Tensor cur = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Tensor z = matmul_nt(cur, layers_[l].weight);
    add_bias(z, layers_[l].bias);
    if (l + 1 < layers_.size())
      for (double& v : z.data()) v = activate(spec_.activation, v);
    cur = std::move(z);
  }
  return cur;
}

// ---------------------------------------------------------------------------
// Adapters

namespace {

template <typename F>
void for_each_factor(std::vector<LoraFactors>& layers, F&& f) {
  for (auto& l : layers) {
    f(l.a);
    f(l.b);
  }
}

template <typename F>
void for_each_factor(const std::vector<LoraFactors>& layers, F&& f) {
  for (const auto& l : layers) {
    f(l.a);
    f(l.b);
  }
}

std::size_t count_params(const std::vector<LoraFactors>& layers) {
  std::size_t n = 0;
  for_each_factor(layers, [&](const Tensor& t) { n += t.size(); });
  return n;
}

std::vector<double> flatten_factors(const std::vector<LoraFactors>& layers) {
  std::vector<double> out;
  out.reserve(count_params(layers));
  for_each_factor(layers, [&](const Tensor& t) { out.insert(out.end(), t.data().begin(), t.data().end()); });
  return out;
}

void assign_factors(std::vector<LoraFactors>& layers, std::span<const double> values) {
  if (values.size() != count_params(layers)) throw DimensionError("adapter flat size mismatch");
  std::size_t off = 0;
  for_each_factor(layers, [&](Tensor& t) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(off), t.size(), t.data().begin());
    off += t.size();
  });
}

void require_congruent(const std::vector<LoraFactors>& a, const std::vector<LoraFactors>& b) {
  if (a.size() != b.size()) throw DimensionError("adapter gradient layer count mismatch");
  for (std::size_t l = 0; l < a.size(); ++l) {
    require_same_shape(a[l].a, b[l].a, "adapter gradient");
    require_same_shape(a[l].b, b[l].b, "adapter gradient");
  }
}

}  // namespace

std::size_t AdapterSet::num_params() const { return count_params(layers); }
std::vector<double> AdapterSet::flatten() const { return flatten_factors(layers); }
void AdapterSet::assign_flat(std::span<const double> values) { assign_factors(layers, values); }

std::size_t AdapterGrad::num_params() const { return count_params(layers); }
std::vector<double> AdapterGrad::flatten() const { return flatten_factors(layers); }

AdapterGrad AdapterGrad::zeros_like(const AdapterSet& adapters) {
  AdapterGrad g;
  for (const auto& l : adapters.layers)
    g.layers.push_back({Tensor(l.a.rows(), l.a.cols()), Tensor(l.b.rows(), l.b.cols())});
  return g;
}

AdapterGrad AdapterGrad::from_flat(const AdapterSet& shape, std::span<const double> values) {
  AdapterGrad g = zeros_like(shape);
  assign_factors(g.layers, values);
  return g;
}

AdapterGrad& AdapterGrad::operator+=(const AdapterGrad& other) {
  axpy(1.0, other);
  return *this;
}

AdapterGrad& AdapterGrad::operator*=(double scale) {
  for_each_factor(layers, [&](Tensor& t) { t *= scale; });
  return *this;
}

void AdapterGrad::axpy(double scale, const AdapterGrad& other) {
  require_congruent(layers, other.layers);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    splitveil::axpy(scale, other.layers[l].a, layers[l].a);
    splitveil::axpy(scale, other.layers[l].b, layers[l].b);
  }
}

double norm(const AdapterGrad& g) {
  double s = 0.0;
  for_each_factor(g.layers, [&](const Tensor& t) { s += dot(t, t); });
  return std::sqrt(s);
}

double norm_diff(const AdapterGrad& a, const AdapterGrad& b) {
  require_congruent(a.layers, b.layers);
  double s = 0.0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const Tensor da = a.layers[l].a - b.layers[l].a;
    const Tensor db = a.layers[l].b - b.layers[l].b;
    s += dot(da, da) + dot(db, db);
  }
  return std::sqrt(s);
}

AdapterSet init_adapters(const BackboneSpec& spec, std::size_t rank, std::uint64_t seed,
                         double lora_alpha) {
  spec.validate();
  const std::size_t min_width = *std::ranges::min_element(spec.layer_dims);
  if (rank == 0 || rank > min_width) {
    throw ConfigError("adapter rank " + std::to_string(rank) + " must be in [1, " +
                      std::to_string(min_width) + "]");
  }
  const double alpha = lora_alpha > 0.0 ? lora_alpha : static_cast<double>(rank);
  AdapterSet set;
  set.rank = rank;
  set.scaling = alpha / static_cast<double>(rank);
  Rng rng(seed);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(rank));
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    set.layers.push_back({rng.normal_tensor(rank, spec.layer_dims[l], stddev),
                          Tensor(spec.layer_dims[l + 1], rank)});
  }
  return set;
}

void check_adapters(const Backbone& backbone, const AdapterSet& adapters) {
  const auto& spec = backbone.spec();
  if (adapters.layers.size() != spec.num_layers())
    throw DimensionError("adapter layer count does not match backbone");
  for (std::size_t l = 0; l < adapters.layers.size(); ++l) {
    const auto& f = adapters.layers[l];
    if (f.a.rows() != adapters.rank || f.a.cols() != spec.layer_dims[l] ||
        f.b.rows() != spec.layer_dims[l + 1] || f.b.cols() != adapters.rank) {
      throw DimensionError("adapter factors for layer " + std::to_string(l) +
                           " do not match backbone shape");
    }
  }
}

// ---------------------------------------------------------------------------
// Forward / backprop

ForwardResult forward(const Backbone& backbone, const Tensor& x, const AdapterSet& adapters) {
  check_adapters(backbone, adapters);
  if (x.cols() != backbone.spec().input_dim()) throw DimensionError("forward: input width mismatch");
  const auto& layers = backbone.layers();
  const Activation act = backbone.spec().activation;
  ForwardResult res;
  Tensor cur = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& f = adapters.layers[l];
    Tensor z = matmul_nt(cur, layers[l].weight);
    add_bias(z, layers[l].bias);
    axpy(adapters.scaling, matmul_nt(matmul_nt(cur, f.a), f.b), z);
    res.tape.inputs.push_back(std::move(cur));
    res.tape.pre_activations.push_back(z);
    if (l + 1 < layers.size())
      for (double& v : z.data()) v = activate(act, v);
    cur = std::move(z);
  }
  res.h = std::move(cur);
  return res;
}

AdapterGrad backprop(const Backbone& backbone, const Tensor& x, const AdapterSet& adapters,
                     const Tensor& g_h) {
  return backprop(backbone, forward(backbone, x, adapters).tape, adapters, g_h);
}

AdapterGrad backprop(const Backbone& backbone, const ActivationTape& tape,
                     const AdapterSet& adapters, const Tensor& g_h) {
  check_adapters(backbone, adapters);
  const auto& layers = backbone.layers();
  if (tape.inputs.size() != layers.size()) throw DimensionError("backprop: tape does not match backbone");
  const std::size_t batch = tape.inputs.front().rows();
  if (g_h.rows() != batch || g_h.cols() != backbone.spec().output_dim()) {
    throw DimensionError("backprop: g_h shape does not match forward output");
  }
  const Activation act = backbone.spec().activation;
  const double s = adapters.scaling;

  AdapterGrad grad = AdapterGrad::zeros_like(adapters);
  Tensor g = g_h;  // gradient w.r.t. the current layer's output
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& f = adapters.layers[li];
    if (li + 1 < layers.size()) {
      const Tensor& z = tape.pre_activations[li];
      auto gv = g.data();
      auto zv = z.data();
      for (std::size_t k = 0; k < gv.size(); ++k) gv[k] *= activate_grad(act, zv[k]);
    }
    const Tensor& in = tape.inputs[li];
    // dB = s * gᵀ (in Aᵀ), dA = s * (g B)ᵀ in
    const Tensor in_a = matmul_nt(in, f.a);
    const Tensor g_b = matmul(g, f.b);
    grad.layers[li].b = s * matmul_tn(g, in_a);
    grad.layers[li].a = s * matmul_tn(g_b, in);
    if (li > 0) {
      Tensor g_in = matmul(g, layers[li].weight);
      axpy(s, matmul(g_b, f.a), g_in);
      g = std::move(g_in);
    }
  }
  return grad;
}

Backbone merge_adapters(const Backbone& backbone, const AdapterSet& adapters) {
  check_adapters(backbone, adapters);
  std::vector<DenseLayer> merged = backbone.layers();
  for (std::size_t l = 0; l < merged.size(); ++l) {
    const auto& f = adapters.layers[l];
    axpy(adapters.scaling, matmul(f.b, f.a), merged[l].weight);
  }
  return Backbone(backbone.spec(), std::move(merged));
}

}  // namespace splitveil
