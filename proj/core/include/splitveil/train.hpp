// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

// Training procedures: the mixed-adapter private fine-tuning loop and the
// baselines it is compared against, plus run records and hyperparameter
// sweeps.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "splitveil/attacks.hpp"
#include "splitveil/backbone.hpp"
#include "splitveil/data.hpp"
#include "splitveil/defense.hpp"
#include "splitveil/ftapi.hpp"
#include "splitveil/mixing.hpp"
#include "splitveil/optim.hpp"
#include "splitveil/privbp.hpp"

namespace splitveil {

enum class Method { kP3eft, kRegularFt, kWithoutAdapters, kDc, kRandomizedResponse };

std::string_view to_string(Method method);
Method parse_method(std::string_view name);

struct TrainConfig {
  Method method = Method::kP3eft;

  // Data. A non-empty csv_path replaces the synthetic task.
  std::string task = "teacher";
  std::string csv_path;
  std::size_t num_examples = 4000;
  std::size_t input_dim = 16;

  // Backbone: layer_dims = [input_dim, hidden_dims...]; d = hidden_dims.back().
  std::vector<std::size_t> hidden_dims = {64, 64, 64};
  Activation activation = Activation::kTanh;
  std::size_t rank = 8;
  double lora_alpha = 0.0;

  // Privacy mechanisms.
  std::size_t adapters = 2;
  std::size_t shards = 2;
  /// Regularizer weight: adversarial heads for p3eft, dCor for dc.
  double alpha = 1.0;
  double sigma_xi = 1.0;
  double noise_var = 1000.0;
  double noise_floor_factor = kNoiseFloorFactor;
  HeadPolicy head_policy;
  double epsilon = 1.0;
  /// Label alphabet for randomized response; 0 means the dataset's.
  int rr_classes = 0;
  /// σ of the noise added to each adapter's initial second moments.
  double optimizer_noise = 0.0;

  // Optimization.
  OptimizerConfig optimizer;
  /// 0 means optimizer.lr.
  double head_lr = 0.0;
  std::size_t steps = 2000;
  std::size_t batch_size = 64;
  std::size_t eval_every = 50;
  /// Training examples whose activations are attacked at each evaluation.
  std::size_t eval_examples = 512;
  bool probe = false;
  bool gradient_attacks = true;

  std::uint64_t model_seed = 0;
  std::uint64_t data_seed = 0;
  std::uint64_t protocol_seed = 0;

  RotationMode rotation = RotationMode::kStrict;
  std::size_t num_servers = 4;
  /// host:port of running servers; empty means in-process servers.
  std::vector<std::string> server_addresses;
  bool record_observations = false;

  /// Throws ConfigError describing the first invalid field.
  void validate() const;
  std::size_t num_adapters() const noexcept { return method == Method::kP3eft ? adapters : 1; }
  bool uses_private_backprop() const noexcept { return method == Method::kP3eft; }
};

/// JSON object with every TrainConfig field; unknown keys are rejected.
TrainConfig parse_train_config(std::string_view json_text);
std::string train_config_to_json(const TrainConfig& config);

Dataset make_dataset(const TrainConfig& config);
BackboneSpec make_backbone_spec(const TrainConfig& config, std::size_t input_dim);

struct StepRecord {
  std::size_t step = 0;
  /// Main cross-entropy of the head on the (mixed) activations.
  double loss = 0.0;
  /// Loss plus regularizer terms.
  double objective = 0.0;
  std::optional<double> test_accuracy;
};

struct RunRecord {
  TrainConfig config;
  std::vector<StepRecord> steps;
  /// (step, test accuracy) at every evaluation, the last one after step T−1.
  std::vector<std::pair<std::size_t, double>> evaluations;
  AttackReport attacks;
  std::optional<LeakageSummary> leakage;
  double final_accuracy = 0.0;
  bool complete = false;
  std::string error;
  double wall_seconds = 0.0;

  /// Worst-case leakage of an observable ("activations" or "gradients").
  double leak(std::string_view observable = "activations") const;
  double peak_accuracy() const;
  std::vector<double> losses() const;
};

/// Servers a run talks to. In-process servers are kept in `local` so tests
/// can read their logs and observations.
struct ServerPool {
  std::vector<std::shared_ptr<ApiServer>> local;
  std::vector<std::shared_ptr<ServerEndpoint>> endpoints;
};

ServerPool make_server_pool(const TrainConfig& config, const Backbone& backbone);

/// Client-side secrets surfaced for audits and tests.
struct RunObserver {
  std::function<void(const MixingWeights&)> on_mixing;
  std::function<void(std::size_t step, std::size_t adapter, const ObfuscationBundle&)> on_bundle;
};

/// Mixed-adapter training with adversarial heads and private backprop.
/// Errors after setup abort the run and return it flagged incomplete.
RunRecord train_p3eft(const TrainConfig& config, const Dataset& data, ServerPool& servers,
                      const RunObserver* observer = nullptr);

/// regular_ft, without_adapters, dc or randomized_response.
RunRecord train_baseline(const TrainConfig& config, const Dataset& data, ServerPool& servers);

/// Dispatches on config.method; builds a server pool when none is given.
RunRecord run_training(const TrainConfig& config, const Dataset& data, ServerPool* servers = nullptr,
                       const RunObserver* observer = nullptr);

/// Lines tagged "config", "step", "eval", "attack" and "summary".
std::string run_record_to_jsonl(const RunRecord& record);
/// The "attack" lines of a run record, or a bare AttackReport JSONL.
AttackReport attacks_from_run_jsonl(std::string_view text);
/// step,loss,objective,test_accuracy,<observable>_worst...
std::string run_record_to_csv(const RunRecord& record);
std::string run_summary_json(const RunRecord& record);

// ---------------------------------------------------------------------------
// Sweeps

struct SweepGrid {
  /// α = 10^(e/2) for each exponent e.
  std::vector<double> alpha_exponents;
  /// Explicit α values, used when no exponents are given.
  std::vector<double> alphas;
  /// Each grid point is run once per seed (model, data and protocol seed).
  std::vector<std::uint64_t> seeds = {0};
  std::string observable = "activations";
  std::size_t workers = 1;
};

SweepGrid parse_sweep_grid(std::string_view json_text);

struct SweepRun {
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double peak_accuracy = 0.0;
  double leak = 0.0;
  bool complete = true;
};

struct SweepRow {
  double alpha = 0.0;
  std::optional<double> exponent;
  std::vector<SweepRun> runs;
  double accuracy = 0.0;  // mean over seeds
  double leak = 0.0;      // mean over seeds
  bool kept = false;
  std::string reason;
};

struct SweepResult {
  /// Mean accuracy of the head-only baseline over the same seeds.
  double baseline_accuracy = 0.0;
  std::vector<SweepRow> rows;
  std::optional<std::size_t> selected;
  std::string status;
};

/// A run is unstable if it rose above the baseline and then fell back by
/// more than half of its gain.
bool is_unstable(double peak, double final_accuracy, double baseline);

/// Discards rows that do not beat the baseline or have an unstable run, then
/// picks the lowest leak (ties: higher accuracy, then earlier row).
/// Fills kept/reason and returns the selected index.
std::optional<std::size_t> apply_sweep_rules(std::vector<SweepRow>& rows, double baseline);

/// Every run trains on `data`; the seeds vary model and protocol randomness
/// and batch order.
SweepResult sweep(const TrainConfig& base, const SweepGrid& grid, const Dataset& data);

/// Builds each seed's dataset from the config, so a seed also picks the
/// synthetic task instance (or the CSV split).
SweepResult sweep(const TrainConfig& base, const SweepGrid& grid);

std::string sweep_result_json(const SweepResult& result);

}  // namespace splitveil
