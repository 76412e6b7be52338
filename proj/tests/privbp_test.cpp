// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "oracles.hpp"
#include "splitveil/codec.hpp"
#include "splitveil/error.hpp"
#include "splitveil/optim.hpp"
#include "splitveil/privbp.hpp"
#include "splitveil/rng.hpp"

namespace splitveil {
namespace {

struct Cluster {
  BackboneSpec spec{{4, 8, 6}, Activation::kTanh, 3};
  Backbone net{spec};
  std::vector<LocalServer> servers;
  std::vector<ServerEndpoint*> endpoints;

  explicit Cluster(std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      servers.push_back(make_local_server(net, {.id = "s" + std::to_string(i)}));
      endpoints.push_back(servers.back().endpoint.get());
    }
  }
  std::span<ServerEndpoint* const> first(std::size_t m) const { return {endpoints.data(), m}; }

  AdapterSet adapters(Rng& rng) const {
    AdapterSet a = init_adapters(spec, 2, rng.next_u64());
    for (auto& l : a.layers) l.b = rng.normal_tensor(l.b.rows(), l.b.cols(), 0.3);
    return a;
  }
};

double rel(const AdapterGrad& got, const AdapterGrad& want) { return norm_diff(got, want) / norm(want); }

double cosine(const Tensor& a, const Tensor& b) { return dot(a, b) / (frobenius_norm(a) * frobenius_norm(b)); }

TEST(NoiseScheme, PairedShardsForTwo) {
  Rng rng(1);
  const Tensor g = rng.normal_tensor(3, 5, 0.1);
  const ObfuscationBundle b = obfuscate_noise(g, 2, 1000.0, rng);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b.coeffs, (std::vector<double>{0.5, 0.5}));
  EXPECT_LE(max_abs_diff(b.shards[0] + b.shards[1], 2.0 * g), 1e-12);
  EXPECT_LE(max_abs_diff(b.combine(), g), 1e-12);
}

TEST(NoiseScheme, ZeroGradientRecoversExactZero) {
  Rng rng(2);
  const ObfuscationBundle b = obfuscate_noise(Tensor(2, 4), 2, 1000.0, rng);
  EXPECT_EQ(b.shards[0], -1.0 * b.shards[1]);
  EXPECT_EQ(b.combine(), Tensor(2, 4));
}

TEST(NoiseScheme, DirectSummationForThreeShards) {
  Rng rng(3);
  const Tensor g = rng.normal_tensor(1, 8, 0.5);
  const ObfuscationBundle b = obfuscate_noise(g, 3, 1000.0, rng);
  Tensor sum(1, 8);
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t k = 0; k < 8; ++k) sum(0, k) += b.coeffs[j] * b.shards[j](0, k);
  EXPECT_LE(max_abs_diff(sum, g), 1e-12);
  EXPECT_GE(b.coeffs[2], 0.5);
  EXPECT_LT(b.coeffs[2], 1.0);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_NE(b.coeffs[j], 0.0);
    EXPECT_LT(std::abs(b.coeffs[j]), 1.0);
  }
}

TEST(NoiseScheme, RecombinationProperty) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 2 + rng.index(5);
    const Tensor g = rng.normal_tensor(1 + rng.index(6), 1 + rng.index(10));
    const double floor = noise_floor(g);
    const ObfuscationBundle b = obfuscate_noise(g, m, floor * (1.0 + rng.uniform()), rng);
    ASSERT_EQ(b.size(), m);
    EXPECT_LE(frobenius_norm(b.combine() - g) / frobenius_norm(g), 1e-9);
  }
}

TEST(NoiseScheme, ShardVarianceMonteCarlo) {
  Rng rng(5);
  Tensor g(1, 64);
  for (std::size_t k = 0; k < 64; ++k) g(0, k) = 1.0 / 8.0;  // ‖g‖² = 1
  double sum_sq = 0.0;
  std::size_t count = 0;
  for (int draw = 0; draw < 10000; ++draw) {
    const ObfuscationBundle b = obfuscate_noise(g, 2, 1000.0, rng);
    for (const Tensor& s : b.shards)
      for (double v : s.data()) sum_sq += v * v, ++count;
  }
  EXPECT_NEAR(sum_sq / static_cast<double>(count), 1000.0, 100.0);
}

TEST(NoiseScheme, ParameterErrors) {
  Rng rng(6);
  const Tensor g = Tensor::from_rows({{3.0, 4.0}});  // row norm² 25, floor 2500
  EXPECT_THROW(obfuscate_noise(g, 1, 1e6, rng), ParameterError);
  EXPECT_THROW(obfuscate_noise(g, 2, 2499.0, rng), ParameterError);
  EXPECT_NO_THROW(obfuscate_noise(g, 2, 2500.0, rng));
  EXPECT_NO_THROW(obfuscate_noise(g, 2, 30.0, rng, 1.0));
  EXPECT_DOUBLE_EQ(noise_floor(g), 2500.0);
}

TEST(NoiseScheme, ShardsDoNotCorrelateWithGradient) {
  Rng rng(7);
  double mean_abs_cos = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Tensor g = rng.normal_tensor(1, 64);
    g *= 1.0 / frobenius_norm(g);
    const ObfuscationBundle b = obfuscate_noise(g, 2, 1000.0, rng);
    for (const Tensor& s : b.shards) mean_abs_cos += std::abs(cosine(s, g)) / 200.0;
  }
  EXPECT_LT(mean_abs_cos, 0.2);
}

TEST(PrivateBackprop, MatchesPlainBackprop) {
  Cluster c(4);
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 2 + trial % 3;
    const AdapterSet a = c.adapters(rng);
    const Tensor x = rng.normal_tensor(5, 4), g = rng.normal_tensor(5, 6);
    const AdapterGrad want = backprop(c.net, x, a, g);
    const NoiseScheme scheme{m, noise_floor(g) * 10.0};
    const AdapterGrad got = private_backprop(x, a, g, scheme, rng, c.first(m));
    EXPECT_LE(rel(got, want), 1e-9) << "m=" << m;
  }
}

TEST(PrivateBackprop, ShardsReachTheirServers) {
  Cluster c(3);
  Rng rng(9);
  const AdapterSet a = c.adapters(rng);
  const Tensor x = rng.normal_tensor(2, 4), g = rng.normal_tensor(2, 6, 0.1);
  const ObfuscationBundle b = obfuscate_noise(g, 3, 1000.0, rng);
  private_backprop(b, x, a, c.first(3), {4, 1, -1});
  for (std::size_t j = 0; j < 3; ++j) {
    const auto obs = c.servers[j].server->observations();
    ASSERT_EQ(obs.size(), 1u);
    EXPECT_EQ(obs[0].value, b.shards[j]);
    EXPECT_EQ(obs[0].meta.shard, static_cast<std::int64_t>(j));
    EXPECT_EQ(obs[0].meta.step, 4);
  }
}

class BrokenTransport final : public Transport {
 public:
  std::string roundtrip(const std::string&) override { throw TransportError("down"); }
};

TEST(PrivateBackprop, AnyFailedShardFailsTheCall) {
  Cluster c(2);
  ServerEndpoint broken("dead", std::make_shared<BrokenTransport>(), 1);
  std::vector<ServerEndpoint*> eps = {c.endpoints[0], &broken};
  Rng rng(10);
  const AdapterSet a = c.adapters(rng);
  const Tensor x = rng.normal_tensor(2, 4), g = rng.normal_tensor(2, 6, 0.1);
  EXPECT_THROW(private_backprop(x, a, g, NoiseScheme{}, rng, eps), TransportError);
  EXPECT_THROW(private_backprop(x, a, g, NoiseScheme{}, rng, c.first(1)), InputError);
}

// Looks for the 8 bytes of `value` both in the frame and in every tensor
// payload it carries (which travels base64-encoded).
bool frame_contains(std::string_view frame, double value) {
  char pattern[sizeof(double)];
  std::memcpy(pattern, &value, sizeof value);
  const std::string_view needle(pattern, sizeof pattern);
  if (frame.find(needle) != std::string_view::npos) return true;
  const ApiRequest req = decode_request(frame);
  auto scan = [&](const Tensor& t) {
    for (double v : t.data())
      if (v == value) return true;
    return false;
  };
  if (scan(req.x) || (req.g_h && scan(*req.g_h))) return true;
  for (const auto& l : req.adapters.layers)
    if (scan(l.a) || scan(l.b)) return true;
  const std::string text(frame.substr(kFrameHeaderSize));
  char dec[64];
  std::snprintf(dec, sizeof dec, "%.17g", value);
  return text.find(dec) != std::string::npos;
}

TEST(PrivateBackprop, CoefficientsNeverLeaveTheClient) {
  Cluster c(3);
  std::vector<std::string> frames;
  for (auto* ep : c.endpoints) ep->set_tap([&](std::string_view f) { frames.emplace_back(f); });
  Rng rng(11);
  const AdapterSet a = c.adapters(rng);
  const Tensor x = rng.normal_tensor(3, 4), g = rng.normal_tensor(3, 6);
  // Sentinel coefficients with a hand-built bundle that still recombines to g.
  const double s0 = 0.123456789012345678, s1 = -0.876543210987654321, s2 = 0.7071067811865476;
  ObfuscationBundle b;
  b.coeffs = {s0, s1, s2};
  b.shards = {rng.normal_tensor(3, 6, 30.0), rng.normal_tensor(3, 6, 30.0)};
  Tensor rest = g;
  axpy(-s0, b.shards[0], rest);
  axpy(-s1, b.shards[1], rest);
  b.shards.push_back((1.0 / s2) * rest);
  const AdapterGrad got = private_backprop(b, x, a, c.first(3));
  EXPECT_LE(rel(got, backprop(c.net, x, a, g)), 1e-9);
  ASSERT_EQ(frames.size(), 3u);
  for (const auto& f : frames) {
    for (double s : {s0, s1, s2}) EXPECT_FALSE(frame_contains(f, s));
    const ApiRequest req = decode_request(f);
    EXPECT_GT(max_abs_diff(*req.g_h, g), 1.0);
  }
  // The scanner itself finds a planted value.
  EXPECT_TRUE(frame_contains(frames[0], decode_request(frames[0]).x(1, 2)));
}

// ---------------------------------------------------------------------------
// Subspace scheme

LinearHead binary_head(Rng& rng, std::size_t d) { return {rng.normal_tensor(2, d), {0.1, -0.1}}; }

TEST(SubspaceScheme, BothLabelsAreCollinearWithDirection) {
  Rng rng(12);
  const std::size_t d = 6;
  const LinearHead head = binary_head(rng, d);
  const Tensor h = rng.normal_tensor(4, d);
  for (int label = 0; label < 2; ++label) {
    const LabelVector y(std::vector<int>(4, label), 2);
    const Tensor g = cross_entropy_grad(head, h, y).d_h;
    const HeadSubspace sub = binary_head_subspace(head, h, g);
    for (std::size_t b = 0; b < 4; ++b) {
      Tensor row_g(1, d), row_dir(1, d);
      std::ranges::copy(g.row(b), row_g.data().begin());
      std::ranges::copy(sub.directions.row(b), row_dir.data().begin());
      EXPECT_GE(std::abs(cosine(row_g, row_dir)), 1.0 - 1e-9);
    }
  }
}

TEST(SubspaceScheme, RecoveryMatchesPlainBackprop) {
  Rng rng(13);
  Cluster c(4);
  const std::size_t batch = 4;
  const AdapterSet a = c.adapters(rng);
  const Tensor x = rng.normal_tensor(batch, 4);
  const Tensor h = forward(c.net, x, a).h;
  const LinearHead head = binary_head(rng, 6);
  const LabelVector y({0, 1, 1, 0}, 2);
  const Tensor g = cross_entropy_grad(head, h, y).d_h;
  const HeadSubspace sub = binary_head_subspace(head, h, g);
  const ObfuscationBundle b = obfuscate_subspace(sub.directions, sub.scales, 2, batch);
  ASSERT_EQ(b.size(), batch);
  for (std::size_t j = 0; j < batch; ++j)
    for (std::size_t r = 0; r < batch; ++r)
      if (r != j)
        for (double v : b.shards[j].row(r)) EXPECT_EQ(v, 0.0);
  EXPECT_LE(max_abs_diff(b.combine(), g), 1e-12);
  const AdapterGrad got = private_backprop(b, x, a, c.first(batch));
  EXPECT_LE(rel(got, backprop(c.net, x, a, g)), 1e-10);
}

TEST(SubspaceScheme, Preconditions) {
  Rng rng(14);
  const Tensor dirs = rng.normal_tensor(3, 4);
  const std::vector<double> scales = {1.0, 2.0, 3.0};
  EXPECT_THROW(obfuscate_subspace(dirs, scales, 2, 2), UnsupportedSchemeError);
  EXPECT_THROW(obfuscate_subspace(dirs, scales, 3), UnsupportedSchemeError);
  const LinearHead three{rng.normal_tensor(3, 4), {0, 0, 0}};
  EXPECT_THROW(binary_head_subspace(three, dirs, dirs), UnsupportedSchemeError);
  // A row of g_h off the head direction cannot be expressed.
  const LinearHead head = binary_head(rng, 4);
  EXPECT_THROW(binary_head_subspace(head, dirs, rng.normal_tensor(3, 4)), UnsupportedSchemeError);
}

// ---------------------------------------------------------------------------
// Optimizer inversion

TEST(InvertSgd, RecoversPlantedGradient) {
  Rng rng(15);
  Cluster c(1);
  const AdapterSet before = c.adapters(rng);
  const std::vector<double> g = AdapterGrad::from_flat(before, rng.normal_tensor(1, before.num_params()).values()).flatten();
  std::vector<double> p = before.flatten();
  const OptimizerConfig sgd{.kind = OptimizerConfig::Kind::kSgd, .lr = 0.25};
  OptimizerState state = OptimizerState::zeros(p.size());
  opt_step(p, g, state, sgd, 0);
  AdapterSet after = before;
  after.assign_flat(p);
  EXPECT_LE(testing::rel_err(invert_sgd(before, after, 0.25).flatten(), g), 1e-14);
  EXPECT_EQ(norm(invert_sgd(before, before, 0.25)), 0.0);
  EXPECT_THROW(invert_sgd(before, after, 0.0), ParameterError);
}

TEST(InvertSgd, AdamStepDoesNotRevealGradient) {
  Rng rng(16);
  Cluster c(1);
  const AdapterSet before = c.adapters(rng);
  const std::vector<double> g = rng.normal_tensor(1, before.num_params()).values();
  std::vector<double> p = before.flatten();
  OptimizerState state = OptimizerState::zeros(p.size());
  const OptimizerConfig adam{.lr = 1e-3};
  opt_step(p, g, state, adam, 0);
  AdapterSet after = before;
  after.assign_flat(p);
  const std::vector<double> inv = invert_sgd(before, after, adam.lr).flatten();
  double num = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) num += inv[i] * g[i], na += inv[i] * inv[i], nb += g[i] * g[i];
  EXPECT_LT(num / std::sqrt(na * nb), 0.999);
}

TEST(OptimizerNoise, ZeroSigmaIsIdentity) {
  Rng rng(17);
  OptimizerState s = OptimizerState::zeros(5);
  s.v = {1, 2, 3, 4, 5};
  const OptimizerState out = noise_optimizer_state(s, 0.0, rng);
  EXPECT_EQ(out.v, s.v);
  EXPECT_EQ(out.m, s.m);
  EXPECT_THROW(noise_optimizer_state(s, -1.0, rng), ParameterError);
}

TEST(OptimizerNoise, NoisedTrajectoryNoLongerInverts) {
  // Paired Adam trajectories from the same point: the noiseless one moves by
  // a predictable amount, the noised one does not.
  Rng rng(18);
  const std::size_t n = 50;
  const std::vector<double> g = rng.normal_tensor(1, n).values();
  const std::vector<double> start = rng.normal_tensor(1, n).values();
  const OptimizerConfig adam{.lr = 1e-2};
  auto step = [&](OptimizerState state) {
    std::vector<double> p = start;
    opt_step(p, g, state, adam, 0);
    for (std::size_t i = 0; i < n; ++i) p[i] = (start[i] - p[i]) / adam.lr;
    return p;
  };
  const std::vector<double> plain = step(OptimizerState::zeros(n));
  const std::vector<double> noised = step(noise_optimizer_state(OptimizerState::zeros(n), 0.1, rng));
  EXPECT_GT(testing::rel_err(noised, plain), 10.0 * std::numeric_limits<double>::epsilon());
  EXPECT_GT(testing::rel_err(noised, g), 10.0 * std::numeric_limits<double>::epsilon());
  // Adding to v only ever shrinks the step.
  for (std::size_t i = 0; i < n; ++i) EXPECT_LE(std::abs(noised[i]), std::abs(plain[i]) + 1e-12);
}

}  // namespace
}  // namespace splitveil
