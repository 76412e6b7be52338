// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "splitveil/backbone.hpp"
#include "splitveil/error.hpp"
#include "splitveil/mixing.hpp"
#include "splitveil/rng.hpp"

namespace splitveil {
namespace {

TEST(MixingWeights, ColumnsSumToOne) {
  Rng rng(1);
  for (std::size_t n = 1; n <= 5; ++n) {
    for (double sigma : {0.0, 0.5, 1.0, 10.0}) {
      const MixingWeights m = generate_mixing_weights(n, 16, sigma, rng);
      ASSERT_EQ(m.num_adapters(), n);
      ASSERT_EQ(m.xi.size(), n * (n - 1) / 2);
      for (std::size_t k = 0; k < 16; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += m.weights(i, k);
        EXPECT_NEAR(s, 1.0, 1e-12) << "n=" << n << " sigma=" << sigma;
      }
    }
  }
}

TEST(MixingWeights, SingleAdapterIsOnes) {
  Rng rng(2);
  const MixingWeights m = generate_mixing_weights(1, 5, 3.0, rng);
  EXPECT_EQ(m.weights, Tensor(1, 5, 1.0));
  EXPECT_TRUE(m.xi.empty());
}

TEST(MixingWeights, MatchesRederivationFromXi) {
  Rng rng(3);
  const std::size_t n = 3, d = 2;
  const MixingWeights m = generate_mixing_weights(n, d, 1.0, rng);
  // Pairs are stored in the order (0,1), (0,2), (1,2).
  EXPECT_EQ(MixingWeights::xi_index(n, 0, 1), 0u);
  EXPECT_EQ(MixingWeights::xi_index(n, 0, 2), 1u);
  EXPECT_EQ(MixingWeights::xi_index(n, 1, 2), 2u);
  EXPECT_THROW(MixingWeights::xi_index(n, 2, 1), InputError);
  const Tensor& x01 = m.xi[0];
  const Tensor& x02 = m.xi[1];
  const Tensor& x12 = m.xi[2];
  for (std::size_t k = 0; k < d; ++k) {
    const double third = 1.0 / 3.0;
    EXPECT_NEAR(m.weights(0, k), third + x01(0, k) + x02(0, k), 1e-12);
    EXPECT_NEAR(m.weights(1, k), third + x12(0, k) - x01(0, k), 1e-12);
    EXPECT_NEAR(m.weights(2, k), third - x02(0, k) - x12(0, k), 1e-12);
  }
  // Same seed, same weights.
  Rng again(3);
  EXPECT_EQ(generate_mixing_weights(n, d, 1.0, again).weights, m.weights);
}

TEST(MixingWeights, XiScaleMatchesSigma) {
  Rng rng(4);
  const MixingWeights m = generate_mixing_weights(2, 20000, 0.5, rng);
  double s2 = 0.0;
  for (double v : m.xi[0].data()) s2 += v * v;
  EXPECT_NEAR(std::sqrt(s2 / 20000.0), 0.5, 0.01);
}

TEST(MixingWeights, ParameterErrors) {
  Rng rng(5);
  EXPECT_THROW(generate_mixing_weights(0, 3, 1.0, rng), ParameterError);
  EXPECT_THROW(generate_mixing_weights(2, 0, 1.0, rng), ParameterError);
  EXPECT_THROW(generate_mixing_weights(2, 3, -1.0, rng), ParameterError);
}

TEST(MixedForward, IdenticalOutputsComeBackExactly) {
  Rng rng(6);
  for (std::size_t n = 1; n <= 5; ++n) {
    const MixingWeights m = generate_mixing_weights(n, 7, 2.0, rng);
    const Tensor h = rng.normal_tensor(4, 7);
    const std::vector<Tensor> outs(n, h);
    EXPECT_EQ(mixed_forward(outs, m), h) << "n=" << n;
  }
}

TEST(MixedForward, ZeroNoiseAverages) {
  Rng rng(7);
  const MixingWeights m = generate_mixing_weights(2, 5, 0.0, rng);
  const std::vector<Tensor> outs = {rng.normal_tensor(3, 5), rng.normal_tensor(3, 5)};
  EXPECT_LE(max_abs_diff(mixed_forward(outs, m), 0.5 * (outs[0] + outs[1])), 1e-15);
  const Tensor g = rng.normal_tensor(3, 5);
  for (const Tensor& gi : mixed_backward(g, m)) EXPECT_LE(max_abs_diff(gi, 0.5 * g), 1e-15);
}

TEST(MixedForward, MatchesWeightedSum) {
  Rng rng(8);
  const MixingWeights m = generate_mixing_weights(3, 4, 1.0, rng);
  const std::vector<Tensor> outs = {rng.normal_tensor(2, 4), rng.normal_tensor(2, 4), rng.normal_tensor(2, 4)};
  const Tensor got = mixed_forward(outs, m);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t k = 0; k < 4; ++k) {
      double want = 0.0;
      for (std::size_t i = 0; i < 3; ++i) want += m.weights(i, k) * outs[i](b, k);
      EXPECT_NEAR(got(b, k), want, 1e-12);
    }
  }
}

TEST(MixedForward, ShapeErrors) {
  Rng rng(9);
  const MixingWeights m = generate_mixing_weights(2, 4, 1.0, rng);
  EXPECT_THROW(mixed_forward(std::vector<Tensor>{Tensor(2, 4)}, m), DimensionError);
  EXPECT_THROW(mixed_forward(std::vector<Tensor>{Tensor(2, 4), Tensor(2, 3)}, m), DimensionError);
  EXPECT_THROW(mixed_forward(std::vector<Tensor>{Tensor(2, 4), Tensor(3, 4)}, m), DimensionError);
  EXPECT_THROW(mixed_backward(Tensor(2, 5), m), DimensionError);
}

TEST(MixedBackward, MatchesFiniteDifferences) {
  Rng rng(10);
  const std::size_t n = 3, b = 2, d = 4;
  const MixingWeights m = generate_mixing_weights(n, d, 1.0, rng);
  std::vector<Tensor> outs;
  for (std::size_t i = 0; i < n; ++i) outs.push_back(rng.normal_tensor(b, d));
  const Tensor g = rng.normal_tensor(b, d);
  const std::vector<Tensor> grads = mixed_backward(g, m);
  for (std::size_t i = 0; i < n; ++i) {
    const auto numeric = testing::numeric_gradient(
        [&](const std::vector<double>& v) {
          std::vector<Tensor> probe = outs;
          probe[i] = Tensor(b, d, v);
          return dot(g, mixed_forward(probe, m));
        },
        outs[i].values());
    EXPECT_LE(testing::rel_err(grads[i].values(), numeric), 1e-6) << "adapter " << i;
  }
}

TEST(MixedBackward, GradientsSumToIncoming) {
  Rng rng(11);
  for (std::size_t n = 1; n <= 5; ++n) {
    const MixingWeights m = generate_mixing_weights(n, 6, 1.0, rng);
    const Tensor g = rng.normal_tensor(3, 6);
    Tensor sum(3, 6);
    for (const Tensor& gi : mixed_backward(g, m)) sum += gi;
    EXPECT_LE(max_abs_diff(sum, g), 1e-12 * (1.0 + frobenius_norm(g)));
  }
}

TEST(MixedModel, EndToEndGradientMatchesFiniteDifferences) {
  // ⟨g, Σᵢ Wᵢ ⊙ h(x, θᵢ)⟩ differentiated through mixing and the backbone.
  Rng rng(12);
  const BackboneSpec spec{{3, 8, 5}, Activation::kTanh, 4};
  const Backbone net(spec);
  const std::size_t n = 2;
  const MixingWeights m = generate_mixing_weights(n, 5, 1.0, rng);
  std::vector<AdapterSet> adapters;
  for (std::size_t i = 0; i < n; ++i) {
    AdapterSet a = init_adapters(spec, 2, rng.next_u64());
    for (auto& l : a.layers) l.b = rng.normal_tensor(l.b.rows(), l.b.cols(), 0.3);
    adapters.push_back(a);
  }
  const Tensor x = rng.normal_tensor(4, 3), g = rng.normal_tensor(4, 5);
  const std::vector<Tensor> per_adapter = mixed_backward(g, m);
  for (std::size_t i = 0; i < n; ++i) {
    const AdapterGrad analytic = backprop(net, x, adapters[i], per_adapter[i]);
    const auto numeric = testing::numeric_gradient(
        [&](const std::vector<double>& v) {
          std::vector<AdapterSet> probe = adapters;
          probe[i].assign_flat(v);
          std::vector<Tensor> outs;
          for (const auto& a : probe) outs.push_back(forward(net, x, a).h);
          return dot(g, mixed_forward(outs, m));
        },
        adapters[i].flatten());
    EXPECT_LE(testing::rel_err(analytic.flatten(), numeric), 1e-5) << "adapter " << i;
  }
}

TEST(MixedModel, IdenticalFreshAdaptersMatchSingleAdapter) {
  Rng rng(13);
  const BackboneSpec spec{{4, 8, 8, 6}, Activation::kGelu, 5};
  const Backbone net(spec);
  const AdapterSet a = init_adapters(spec, 3, 99);
  const Tensor x = rng.normal_tensor(5, 4);
  const Tensor single = forward(net, x, a).h;
  for (std::size_t n = 2; n <= 4; ++n) {
    const MixingWeights m = generate_mixing_weights(n, 6, 1.0, rng);
    std::vector<Tensor> outs;
    for (std::size_t i = 0; i < n; ++i) outs.push_back(forward(net, x, a).h);
    EXPECT_EQ(mixed_forward(outs, m), single);
  }
}

}  // namespace
}  // namespace splitveil
