// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "splitveil/tensor.hpp"

namespace splitveil {

enum class Activation { kTanh, kRelu, kGelu };

std::string_view to_string(Activation act);
Activation parse_activation(std::string_view name);

/// Shape and seed of the frozen network. layer_dims = [d_in, d_1, ..., d_out];
/// each consecutive pair is one dense layer, the last of which is linear.
struct BackboneSpec {
  std::vector<std::size_t> layer_dims;
  Activation activation = Activation::kTanh;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
  std::size_t num_layers() const { return layer_dims.size() - 1; }
  bool operator==(const BackboneSpec&) const = default;
};

/// Hex SHA-256 of the canonical spec encoding.
std::string spec_hash(const BackboneSpec& spec);

struct DenseLayer {
  Tensor weight;  // out x in
  std::vector<double> bias;
  bool operator==(const DenseLayer&) const = default;
};

/// Frozen stand-in for a pretrained model. Immutable after construction.
class Backbone {
 public:
  /// Draws weights and biases from N(0, 1/fan_in) in layer order, weight
  /// row-major first, then bias, from an Rng seeded with spec.seed.
  explicit Backbone(BackboneSpec spec);
  /// Explicit weights, e.g. merged or hand-specified.
  Backbone(BackboneSpec spec, std::vector<DenseLayer> layers);

  const BackboneSpec& spec() const noexcept { return spec_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  /// Forward pass without adapters.
  Tensor forward(const Tensor& x) const;

  bool operator==(const Backbone&) const = default;

 private:
  BackboneSpec spec_;
  std::vector<DenseLayer> layers_;
};

inline Backbone init_backbone(const BackboneSpec& spec) { return Backbone(spec); }

/// Low-rank factors for one dense layer: delta W = scaling * b * a.
struct LoraFactors {
  Tensor a;  // rank x in
  Tensor b;  // out x rank
  bool operator==(const LoraFactors&) const = default;
};

/// One set of trainable adapter weights covering every backbone layer.
struct AdapterSet {
  std::size_t rank = 0;
  double scaling = 1.0;
  std::vector<LoraFactors> layers;

  std::size_t num_params() const;
  /// Layer order, a then b, row-major.
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> values);
  bool operator==(const AdapterSet&) const = default;
};

/// Gradient with the same shape tree as an AdapterSet.
struct AdapterGrad {
  std::vector<LoraFactors> layers;

  std::size_t num_params() const;
  std::vector<double> flatten() const;
  static AdapterGrad zeros_like(const AdapterSet& adapters);
  static AdapterGrad from_flat(const AdapterSet& shape, std::span<const double> values);

  AdapterGrad& operator+=(const AdapterGrad& other);
  AdapterGrad& operator*=(double scale);
  /// this += scale * other
  void axpy(double scale, const AdapterGrad& other);
  bool operator==(const AdapterGrad&) const = default;
};

double norm(const AdapterGrad& g);
double norm_diff(const AdapterGrad& a, const AdapterGrad& b);

/// A ~ N(0, 1/rank), B = 0, scaling = lora_alpha / rank (lora_alpha <= 0 means
/// lora_alpha = rank). Throws ConfigError if rank exceeds the narrowest layer.
AdapterSet init_adapters(const BackboneSpec& spec, std::size_t rank, std::uint64_t seed,
                         double lora_alpha = 0.0);

/// Checks that adapter shapes conform to the backbone; throws DimensionError.
void check_adapters(const Backbone& backbone, const AdapterSet& adapters);

/// Per-layer layer inputs and pre-activations recorded by forward().
struct ActivationTape {
  std::vector<Tensor> inputs;
  std::vector<Tensor> pre_activations;
};

struct ForwardResult {
  Tensor h;
  ActivationTape tape;
};

ForwardResult forward(const Backbone& backbone, const Tensor& x, const AdapterSet& adapters);

/// Gradient of <g_h, h(x, adapters)> with respect to every adapter factor.
AdapterGrad backprop(const Backbone& backbone, const Tensor& x, const AdapterSet& adapters,
                     const Tensor& g_h);
AdapterGrad backprop(const Backbone& backbone, const ActivationTape& tape,
                     const AdapterSet& adapters, const Tensor& g_h);

/// Backbone whose weights are W + scaling * B * A.
Backbone merge_adapters(const Backbone& backbone, const AdapterSet& adapters);

}  // namespace splitveil
