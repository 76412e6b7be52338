// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#include "splitveil/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "splitveil/error.hpp"
#include "splitveil/rng.hpp"
#include "splitveil/tcp.hpp"

namespace splitveil {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string_view to_string(Method method) {
  switch (method) {
    case Method::kP3eft: return "p3eft";
    case Method::kRegularFt: return "regular_ft";
    case Method::kWithoutAdapters: return "without_adapters";
    case Method::kDc: return "dc";
    case Method::kRandomizedResponse: return "randomized_response";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::kP3eft, Method::kRegularFt, Method::kWithoutAdapters, Method::kDc,
                   Method::kRandomizedResponse})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (csv_path.empty() && num_examples < 10) throw ConfigError("num_examples must be at least 10");
  if (hidden_dims.empty()) throw ConfigError("hidden_dims must name at least one layer");
  if (rank == 0) throw ConfigError("rank must be at least 1");
  if (method == Method::kP3eft) {
    if (adapters < 1) throw ConfigError("p3eft requires adapters >= 1");
    if (shards < 2) throw ConfigError("p3eft requires shards >= 2");
  }
  if (alpha < 0.0) throw ConfigError("alpha must be non-negative");
  if (sigma_xi < 0.0) throw ConfigError("sigma_xi must be non-negative");
  if (!(noise_var > 0.0)) throw ConfigError("noise_var must be positive");
  if (epsilon < 0.0) throw ConfigError("epsilon must be non-negative");
  if (rr_classes == 1 || rr_classes < 0) throw ConfigError("rr_classes must be 0 or at least 2");
  if (optimizer_noise < 0.0) throw ConfigError("optimizer_noise must be non-negative");
  if (!(optimizer.lr > 0.0)) throw ConfigError("optimizer.lr must be positive");
  if (head_lr < 0.0) throw ConfigError("head_lr must be non-negative");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (eval_every == 0) throw ConfigError("eval_every must be positive");
  if (eval_examples < 4) throw ConfigError("eval_examples must be at least 4");
  if (head_policy.iters == 0 || !(head_policy.lr > 0.0) || head_policy.l2 < 0.0)
    throw ConfigError("head_policy needs iters > 0, lr > 0 and l2 >= 0");
  const std::size_t n_servers = server_addresses.empty() ? num_servers : server_addresses.size();
  if (n_servers == 0) throw ConfigError("at least one server is required");
}

// ---------------------------------------------------------------------------
// Config JSON

namespace {

void reject_unknown(const json& j, std::initializer_list<std::string_view> known, std::string_view where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown " + std::string(where) + " key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

OptimizerConfig optimizer_from_json(const json& j) {
  reject_unknown(j, {"kind", "lr", "beta1", "beta2", "eps", "weight_decay"}, "optimizer");
  OptimizerConfig o;
  if (j.contains("kind")) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "adam") o.kind = OptimizerConfig::Kind::kAdam;
    else if (kind == "sgd") o.kind = OptimizerConfig::Kind::kSgd;
    else throw ConfigError("unknown optimizer kind '" + kind + "'");
  }
  read(j, "lr", o.lr);
  read(j, "beta1", o.beta1);
  read(j, "beta2", o.beta2);
  read(j, "eps", o.eps);
  read(j, "weight_decay", o.weight_decay);
  return o;
}

}  // namespace

TrainConfig parse_train_config(std::string_view json_text) {
  TrainConfig c;
  try {
    const json j = json::parse(json_text);
    reject_unknown(j,
                   {"method", "task", "csv_path", "num_examples", "input_dim", "hidden_dims", "activation", "rank",
                    "lora_alpha", "adapters", "shards", "alpha", "sigma_xi", "noise_var", "noise_floor_factor",
                    "head_policy", "epsilon", "rr_classes", "optimizer_noise", "optimizer", "head_lr", "steps",
                    "batch_size", "eval_every", "eval_examples", "probe", "gradient_attacks", "model_seed",
                    "data_seed", "protocol_seed", "rotation", "num_servers", "server_addresses",
                    "record_observations"},
                   "config");
    if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
    read(j, "task", c.task);
    read(j, "csv_path", c.csv_path);
    read(j, "num_examples", c.num_examples);
    read(j, "input_dim", c.input_dim);
    read(j, "hidden_dims", c.hidden_dims);
    if (j.contains("activation")) c.activation = parse_activation(j.at("activation").get<std::string>());
    read(j, "rank", c.rank);
    read(j, "lora_alpha", c.lora_alpha);
    read(j, "adapters", c.adapters);
    read(j, "shards", c.shards);
    read(j, "alpha", c.alpha);
    read(j, "sigma_xi", c.sigma_xi);
    read(j, "noise_var", c.noise_var);
    read(j, "noise_floor_factor", c.noise_floor_factor);
    if (j.contains("head_policy")) {
      const json& hp = j.at("head_policy");
      reject_unknown(hp, {"iters", "lr", "l2"}, "head_policy");
      read(hp, "iters", c.head_policy.iters);
      read(hp, "lr", c.head_policy.lr);
      read(hp, "l2", c.head_policy.l2);
    }
    read(j, "epsilon", c.epsilon);
    read(j, "rr_classes", c.rr_classes);
    read(j, "optimizer_noise", c.optimizer_noise);
    if (j.contains("optimizer")) c.optimizer = optimizer_from_json(j.at("optimizer"));
    read(j, "head_lr", c.head_lr);
    read(j, "steps", c.steps);
    read(j, "batch_size", c.batch_size);
    read(j, "eval_every", c.eval_every);
    read(j, "eval_examples", c.eval_examples);
    read(j, "probe", c.probe);
    read(j, "gradient_attacks", c.gradient_attacks);
    read(j, "model_seed", c.model_seed);
    read(j, "data_seed", c.data_seed);
    read(j, "protocol_seed", c.protocol_seed);
    if (j.contains("rotation")) c.rotation = parse_rotation_mode(j.at("rotation").get<std::string>());
    read(j, "num_servers", c.num_servers);
    read(j, "server_addresses", c.server_addresses);
    read(j, "record_observations", c.record_observations);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

ojson config_json(const TrainConfig& c) {
  ojson j;
  j["method"] = to_string(c.method);
  j["task"] = c.task;
  j["csv_path"] = c.csv_path;
  j["num_examples"] = c.num_examples;
  j["input_dim"] = c.input_dim;
  j["hidden_dims"] = c.hidden_dims;
  j["activation"] = to_string(c.activation);
  j["rank"] = c.rank;
  j["lora_alpha"] = c.lora_alpha;
  j["adapters"] = c.adapters;
  j["shards"] = c.shards;
  j["alpha"] = c.alpha;
  j["sigma_xi"] = c.sigma_xi;
  j["noise_var"] = c.noise_var;
  j["noise_floor_factor"] = c.noise_floor_factor;
  j["head_policy"] = {{"iters", c.head_policy.iters}, {"lr", c.head_policy.lr}, {"l2", c.head_policy.l2}};
  j["epsilon"] = c.epsilon;
  j["rr_classes"] = c.rr_classes;
  j["optimizer_noise"] = c.optimizer_noise;
  j["optimizer"] = {{"kind", to_string(c.optimizer.kind)}, {"lr", c.optimizer.lr},
                    {"beta1", c.optimizer.beta1},          {"beta2", c.optimizer.beta2},
                    {"eps", c.optimizer.eps},              {"weight_decay", c.optimizer.weight_decay}};
  j["head_lr"] = c.head_lr;
  j["steps"] = c.steps;
  j["batch_size"] = c.batch_size;
  j["eval_every"] = c.eval_every;
  j["eval_examples"] = c.eval_examples;
  j["probe"] = c.probe;
  j["gradient_attacks"] = c.gradient_attacks;
  j["model_seed"] = c.model_seed;
  j["data_seed"] = c.data_seed;
  j["protocol_seed"] = c.protocol_seed;
  j["rotation"] = to_string(c.rotation);
  j["num_servers"] = c.num_servers;
  j["server_addresses"] = c.server_addresses;
  j["record_observations"] = c.record_observations;
  return j;
}

}  // namespace

std::string train_config_to_json(const TrainConfig& config) { return config_json(config).dump(2); }

Dataset make_dataset(const TrainConfig& config) {
  if (!config.csv_path.empty()) return load_csv(config.csv_path, config.data_seed);
  return make_synthetic(config.task, config.num_examples, config.input_dim, config.data_seed);
}

BackboneSpec make_backbone_spec(const TrainConfig& config, std::size_t input_dim) {
  BackboneSpec spec;
  spec.layer_dims.push_back(input_dim);
  spec.layer_dims.insert(spec.layer_dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  spec.activation = config.activation;
  spec.seed = config.model_seed;
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// RunRecord

double RunRecord::leak(std::string_view observable) const {
  if (!leakage) throw InputError("run has no leakage summary");
  const auto it = leakage->worst.find(std::string(observable));
  if (it == leakage->worst.end()) throw InputError("run has no '" + std::string(observable) + "' observable");
  return it->second;
}

double RunRecord::peak_accuracy() const {
  double best = 0.0;
  for (const auto& [step, acc] : evaluations) best = std::max(best, acc);
  return best;
}

std::vector<double> RunRecord::losses() const {
  std::vector<double> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.loss);
  return out;
}

ServerPool make_server_pool(const TrainConfig& config, const Backbone& backbone) {
  ServerPool pool;
  if (!config.server_addresses.empty()) {
    for (const auto& address : config.server_addresses) {
      const auto [host, port] = parse_address(address);
      pool.endpoints.push_back(std::make_shared<ServerEndpoint>(address, std::make_shared<TcpTransport>(host, port)));
    }
    return pool;
  }
  for (std::size_t s = 0; s < config.num_servers; ++s) {
    ApiServer::Options options;
    options.id = "server" + std::to_string(s);
    options.record_observations = config.record_observations;
    LocalServer local = make_local_server(backbone, options);
    pool.local.push_back(local.server);
    pool.endpoints.push_back(local.endpoint);
  }
  return pool;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

std::vector<double> head_params(const LinearHead& head) {
  std::vector<double> out(head.weights.values());
  out.insert(out.end(), head.bias.begin(), head.bias.end());
  return out;
}

void assign_head(LinearHead& head, std::span<const double> params) {
  const std::size_t nw = head.weights.size();
  std::copy_n(params.begin(), nw, head.weights.data().begin());
  std::copy(params.begin() + static_cast<std::ptrdiff_t>(nw), params.end(), head.bias.begin());
}

std::vector<double> flatten_head_grad(const HeadGradient& g) {
  std::vector<double> out(g.d_weights.values());
  out.insert(out.end(), g.d_bias.begin(), g.d_bias.end());
  return out;
}

class Trainer {
 public:
  Trainer(const TrainConfig& config, const Dataset& data, ServerPool& servers, const RunObserver* observer)
      : cfg_(config),
        data_(data),
        servers_(servers),
        observer_(observer),
        spec_(make_backbone_spec(config, data.num_features())),
        backbone_(spec_),
        noise_rng_(mix_seed(config.protocol_seed, 2)),
        batch_rng_(mix_seed(config.data_seed, 1)) {}

  RunRecord run() {
    RunRecord record;
    record.config = cfg_;
    const auto started = std::chrono::steady_clock::now();
    try {
      setup();
      for (std::size_t t = 0; t < cfg_.steps; ++t) record.steps.push_back(step(t, record));
      evaluate(cfg_.steps, record);
      record.complete = true;
    } catch (const std::exception& e) {
      record.error = e.what();
    }
    if (!record.evaluations.empty()) record.final_accuracy = record.evaluations.back().second;
    if (!record.attacks.empty()) record.leakage = leakage_summary(record.attacks);
    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return record;
  }

 private:
  void setup() {
    cfg_.validate();
    if (data_.train.empty() || data_.test.empty()) throw ConfigError("dataset needs non-empty train and test splits");
    if (servers_.endpoints.empty()) throw ConfigError("server pool is empty");
    const std::size_t n = cfg_.num_adapters();
    const AdapterSet init = init_adapters(spec_, cfg_.rank, mix_seed(cfg_.model_seed, 1), cfg_.lora_alpha);
    adapters_.assign(n, init);
    opt_states_.assign(n, OptimizerState::zeros(init.num_params()));
    if (cfg_.optimizer_noise > 0.0) {
      Rng opt_rng(mix_seed(cfg_.protocol_seed, 5));
      for (auto& s : opt_states_) s = noise_optimizer_state(std::move(s), cfg_.optimizer_noise, opt_rng);
    }
    const auto classes = static_cast<std::size_t>(data_.num_classes());
    const std::size_t d = spec_.output_dim();
    head_.weights = Tensor(classes, d);
    head_.bias.assign(classes, 0.0);
    head_state_ = OptimizerState::zeros(classes * d + classes);
    head_opt_ = cfg_.optimizer;
    if (cfg_.head_lr > 0.0) head_opt_.lr = cfg_.head_lr;

    Rng mix_rng(mix_seed(cfg_.protocol_seed, 1));
    mixing_ = generate_mixing_weights(n, d, cfg_.method == Method::kP3eft ? cfg_.sigma_xi : 0.0, mix_rng);
    if (observer_ && observer_->on_mixing) observer_->on_mixing(mixing_);

    const std::size_t schedule_shards = cfg_.uses_private_backprop() ? cfg_.shards : 1;
    schedule_.emplace(make_rotation(n, servers_.endpoints.size(), schedule_shards, cfg_.steps, cfg_.rotation,
                                    mix_seed(cfg_.protocol_seed, 4)));

    train_labels_ = data_.y;
    if (cfg_.method == Method::kRandomizedResponse) {
      const int k = cfg_.rr_classes > 0 ? cfg_.rr_classes : data_.num_classes();
      if (k < data_.num_classes()) throw ConfigError("rr_classes is smaller than the dataset's label count");
      Rng rr_rng(mix_seed(cfg_.protocol_seed, 3));
      const LabelVector noisy = randomized_response(data_.y.gather(data_.train), cfg_.epsilon, k, rr_rng);
      for (std::size_t i = 0; i < data_.train.size(); ++i) {
        if (noisy[i] >= data_.num_classes())
          throw ConfigError("rr_classes exceeds the head's classes");
        train_labels_.labels[data_.train[i]] = noisy[i];
      }
    }

    test_x_ = gather_rows(data_.x, data_.test);
    test_y_ = data_.y.gather(data_.test);
    std::vector<std::size_t> pool = data_.train;
    Rng eval_rng(mix_seed(cfg_.data_seed, 2));
    for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[eval_rng.index(i)]);
    pool.resize(std::min(pool.size(), cfg_.eval_examples));
    std::ranges::sort(pool);
    eval_x_ = gather_rows(data_.x, pool);
    eval_y_ = data_.y.gather(pool);
    order_ = data_.train;
    cursor_ = order_.size();
  }

  std::vector<std::size_t> next_batch() {
    std::vector<std::size_t> batch;
    batch.reserve(cfg_.batch_size);
    while (batch.size() < cfg_.batch_size) {
      if (cursor_ == order_.size()) {
        for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[batch_rng_.index(i)]);
        cursor_ = 0;
      }
      batch.push_back(order_[cursor_++]);
    }
    return batch;
  }

  AttackOptions attack_options() const {
    AttackOptions o;
    o.probe = cfg_.probe;
    o.seed = mix_seed(cfg_.protocol_seed, 6);
    return o;
  }

  // Measurement only: evaluates the same deterministic function the servers
  // compute, on the client's copy of the backbone, without touching server logs.
  double evaluate(std::size_t t, RunRecord& record) {
    std::vector<Tensor> test_h, eval_h;
    for (const auto& a : adapters_) {
      test_h.push_back(forward(backbone_, test_x_, a).h);
      eval_h.push_back(forward(backbone_, eval_x_, a).h);
    }
    const Tensor mixed = mixed_forward(test_h, mixing_);
    const double acc = accuracy(head_.predict(mixed), test_y_.labels);
    record.evaluations.emplace_back(t, acc);

    AttackMetrics worst;
    for (const Tensor& h : eval_h) worst.merge_max(evaluate_observable(h, eval_y_, attack_options()));
    record.attacks.add(static_cast<std::int64_t>(t), "activations", worst);
    return acc;
  }

  void attack_gradient(const Tensor& observed, const LabelVector& y, AttackMetrics& worst, bool& any) {
    if (y.classes_present() < 2) return;
    worst.merge_max(evaluate_observable(observed, y, attack_options()));
    any = true;
  }

  StepRecord step(std::size_t t, RunRecord& record) {
    const bool eval_step = t % cfg_.eval_every == 0;
    const std::vector<std::size_t> batch = next_batch();
    const Tensor xb = gather_rows(data_.x, batch);
    const LabelVector yb = train_labels_.gather(batch);
    const LabelVector yb_true = data_.y.gather(batch);
    const std::size_t n = adapters_.size();
    const std::uint64_t call_seed = mix_seed(cfg_.protocol_seed, 1000 + t);

    std::vector<Tensor> h(n);
    for (std::size_t i = 0; i < n; ++i) {
      ServerEndpoint& server = *servers_.endpoints[schedule_->server_for(t, i, 0)];
      const RequestMeta meta{static_cast<std::int64_t>(t), static_cast<std::int64_t>(i), 0};
      h[i] = call_forward(server, xb, adapters_[i], meta, call_seed);
    }
    std::optional<double> eval_acc;
    if (eval_step) eval_acc = evaluate(t, record);

    const Tensor mixed = mixed_forward(h, mixing_);
    const HeadGradient main = cross_entropy_grad(head_, mixed, yb);
    StepRecord out{t, main.loss, main.loss, eval_acc};

    if (cfg_.method != Method::kWithoutAdapters) {
      std::vector<Tensor> g = mixed_backward(main.d_h, mixing_);
      if (cfg_.method == Method::kP3eft && cfg_.alpha > 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
          const AdversarialLoss adv = adversarial_reg_loss(h[i], yb, cfg_.head_policy);
          axpy(cfg_.alpha, adv.grad, g[i]);
          out.objective += cfg_.alpha * adv.loss;
        }
      }
      if (cfg_.method == Method::kDc && cfg_.alpha > 0.0) {
        const DistanceCorrelation dc = distance_correlation_grad(h[0], yb.one_hot());
        axpy(cfg_.alpha, dc.grad, g[0]);
        out.objective += cfg_.alpha * dc.value;
      }

      AttackMetrics grad_worst;
      bool grad_seen = false;
      for (std::size_t i = 0; i < n; ++i) {
        const RequestMeta meta{static_cast<std::int64_t>(t), static_cast<std::int64_t>(i), 0};
        AdapterGrad g_theta;
        if (cfg_.uses_private_backprop()) {
          const ObfuscationBundle bundle =
              obfuscate_noise(g[i], cfg_.shards, cfg_.noise_var, noise_rng_, cfg_.noise_floor_factor);
          if (observer_ && observer_->on_bundle) observer_->on_bundle(t, i, bundle);
          std::vector<ServerEndpoint*> targets;
          for (std::size_t j = 0; j < cfg_.shards; ++j)
            targets.push_back(servers_.endpoints[schedule_->server_for(t, i, j)].get());
          g_theta = private_backprop(bundle, xb, adapters_[i], targets, meta, call_seed);
          if (eval_step && cfg_.gradient_attacks)
            for (const Tensor& shard : bundle.shards) attack_gradient(shard, yb_true, grad_worst, grad_seen);
        } else {
          ServerEndpoint& server = *servers_.endpoints[schedule_->server_for(t, i, 0)];
          g_theta = call_backprop(server, xb, adapters_[i], g[i], meta, call_seed);
          if (eval_step && cfg_.gradient_attacks) attack_gradient(g[i], yb_true, grad_worst, grad_seen);
        }
        std::vector<double> params = adapters_[i].flatten();
        opt_step(params, g_theta.flatten(), opt_states_[i], cfg_.optimizer, t);
        adapters_[i].assign_flat(params);
      }
      if (grad_seen) record.attacks.add(static_cast<std::int64_t>(t), "gradients", grad_worst);
    }

    std::vector<double> hp = head_params(head_);
    opt_step(hp, flatten_head_grad(main), head_state_, head_opt_, t);
    assign_head(head_, hp);
    return out;
  }

  TrainConfig cfg_;
  const Dataset& data_;
  ServerPool& servers_;
  const RunObserver* observer_;
  BackboneSpec spec_;
  Backbone backbone_;
  Rng noise_rng_;
  Rng batch_rng_;

  std::vector<AdapterSet> adapters_;
  std::vector<OptimizerState> opt_states_;
  LinearHead head_;
  OptimizerState head_state_;
  OptimizerConfig head_opt_;
  MixingWeights mixing_;
  std::optional<RotationSchedule> schedule_;
  LabelVector train_labels_;
  Tensor test_x_;
  LabelVector test_y_;
  Tensor eval_x_;
  LabelVector eval_y_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace

RunRecord train_p3eft(const TrainConfig& config, const Dataset& data, ServerPool& servers,
                      const RunObserver* observer) {
  if (config.method != Method::kP3eft) throw ConfigError("train_p3eft needs method p3eft");
  return Trainer(config, data, servers, observer).run();
}

RunRecord train_baseline(const TrainConfig& config, const Dataset& data, ServerPool& servers) {
  if (config.method == Method::kP3eft) throw ConfigError("train_baseline does not run p3eft");
  return Trainer(config, data, servers, nullptr).run();
}

RunRecord run_training(const TrainConfig& config, const Dataset& data, ServerPool* servers,
                       const RunObserver* observer) {
  std::optional<ServerPool> own;
  if (!servers) {
    own = make_server_pool(config, Backbone(make_backbone_spec(config, data.num_features())));
    servers = &*own;
  }
  if (config.method == Method::kP3eft) return train_p3eft(config, data, *servers, observer);
  return train_baseline(config, data, *servers);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

ojson metrics_json(const AttackMetrics& m) {
  ojson j = ojson::object();
  if (m.spectral_auc) j["spectral_auc"] = *m.spectral_auc;
  if (m.norm_auc) j["norm_auc"] = *m.norm_auc;
  if (m.kmeans_acc) j["kmeans_acc"] = *m.kmeans_acc;
  if (m.probe_acc) j["probe_acc"] = *m.probe_acc;
  return j;
}

}  // namespace

std::string run_summary_json(const RunRecord& record) {
  ojson j;
  j["method"] = to_string(record.config.method);
  j["complete"] = record.complete;
  if (!record.error.empty()) j["error"] = record.error;
  j["final_accuracy"] = record.final_accuracy;
  j["peak_accuracy"] = record.peak_accuracy();
  j["steps"] = record.steps.size();
  j["wall_seconds"] = record.wall_seconds;
  ojson leak = ojson::object();
  if (record.leakage) {
    for (const auto& [name, metrics] : record.leakage->per_metric) {
      leak[name] = metrics_json(metrics);
      leak[name]["worst"] = record.leakage->worst.at(name);
    }
  }
  j["leakage"] = leak;
  return j.dump(2);
}

std::string run_record_to_jsonl(const RunRecord& record) {
  std::string out;
  auto line = [&](ojson j) {
    out += j.dump();
    out += '\n';
  };
  line(ojson{{"type", "config"}, {"config", config_json(record.config)}});
  for (const auto& s : record.steps) {
    ojson j{{"type", "step"}, {"step", s.step}, {"loss", s.loss}, {"objective", s.objective}};
    line(std::move(j));
  }
  for (const auto& [step, acc] : record.evaluations) line(ojson{{"type", "eval"}, {"step", step}, {"test_accuracy", acc}});
  for (const auto& r : record.attacks.records) {
    line(ojson{{"type", "attack"}, {"step", r.step}, {"observable", r.observable}, {"metrics", metrics_json(r.metrics)}});
  }
  ojson summary = ojson::parse(run_summary_json(record));
  summary["type"] = "summary";
  line(std::move(summary));
  return out;
}

AttackReport attacks_from_run_jsonl(std::string_view text) {
  std::string filtered;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("run record: ") + e.what(), line_no);
    }
    if (j.contains("type") && j.at("type") != "attack") continue;
    j.erase("type");
    filtered += j.dump();
    filtered += '\n';
  }
  return report_from_jsonl(filtered);
}

std::string run_record_to_csv(const RunRecord& record) {
  std::vector<std::string> observables;
  for (const auto& r : record.attacks.records)
    if (std::ranges::find(observables, r.observable) == observables.end()) observables.push_back(r.observable);
  std::ostringstream out;
  out.precision(17);
  out << "step,loss,objective,test_accuracy";
  for (const auto& o : observables) out << ',' << o << "_worst";
  out << '\n';
  const std::size_t rows = record.steps.size() + (record.complete ? 1 : 0);
  for (std::size_t t = 0; t < rows; ++t) {
    out << t << ',';
    if (t < record.steps.size()) out << record.steps[t].loss << ',' << record.steps[t].objective;
    else out << ',';
    out << ',';
    for (const auto& [step, acc] : record.evaluations)
      if (step == t) out << acc;
    for (const auto& o : observables) {
      out << ',';
      for (const auto& r : record.attacks.records)
        if (r.step == static_cast<std::int64_t>(t) && r.observable == o) out << r.metrics.worst();
    }
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Sweeps

SweepGrid parse_sweep_grid(std::string_view json_text) {
  SweepGrid g;
  try {
    const json j = json::parse(json_text);
    reject_unknown(j, {"alpha_exponents", "alphas", "seeds", "observable", "workers"}, "grid");
    read(j, "alpha_exponents", g.alpha_exponents);
    read(j, "alphas", g.alphas);
    read(j, "seeds", g.seeds);
    read(j, "observable", g.observable);
    read(j, "workers", g.workers);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
  if (g.alpha_exponents.empty() && g.alphas.empty()) throw ConfigError("grid must list alpha_exponents or alphas");
  if (g.seeds.empty()) throw ConfigError("grid must list at least one seed");
  if (g.workers == 0) g.workers = 1;
  return g;
}

bool is_unstable(double peak, double final_accuracy, double baseline) {
  if (peak <= baseline) return false;
  return final_accuracy - baseline < 0.5 * (peak - baseline);
}

std::optional<std::size_t> apply_sweep_rules(std::vector<SweepRow>& rows, double baseline) {
  std::optional<std::size_t> best;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    SweepRow& row = rows[r];
    row.kept = false;
    if (std::ranges::any_of(row.runs, [](const SweepRun& run) { return !run.complete; })) {
      row.reason = "incomplete run";
    } else if (!(row.accuracy > baseline)) {
      row.reason = "accuracy does not exceed the head-only baseline";
    } else if (std::ranges::any_of(row.runs, [&](const SweepRun& run) {
                 return is_unstable(run.peak_accuracy, run.accuracy, baseline);
               })) {
      row.reason = "unstable: accuracy fell back towards the baseline";
    } else {
      row.kept = true;
      row.reason = "kept";
      if (!best || row.leak < rows[*best].leak ||
          (row.leak == rows[*best].leak && row.accuracy > rows[*best].accuracy))
        best = r;
    }
  }
  return best;
}

namespace {

TrainConfig seeded(TrainConfig c, std::uint64_t seed) {
  c.model_seed = seed;
  c.data_seed = seed;
  c.protocol_seed = seed;
  return c;
}

// Runs every config on its dataset, at most `workers` at a time, preserving order.
std::vector<RunRecord> run_all(const std::vector<TrainConfig>& configs, const std::vector<const Dataset*>& data,
                               std::size_t workers) {
  std::vector<RunRecord> out(configs.size());
  for (std::size_t start = 0; start < configs.size(); start += workers) {
    const std::size_t end = std::min(configs.size(), start + workers);
    if (end - start == 1) {
      out[start] = run_training(configs[start], *data[start]);
      continue;
    }
    std::vector<std::future<RunRecord>> pending;
    for (std::size_t k = start; k < end; ++k)
      pending.push_back(std::async(std::launch::async, [&, k] { return run_training(configs[k], *data[k]); }));
    for (std::size_t k = start; k < end; ++k) out[k] = pending[k - start].get();
  }
  return out;
}

// per_seed[s] is the dataset every run with grid.seeds[s] trains on.
SweepResult sweep_on(const TrainConfig& base, const SweepGrid& grid, const std::vector<const Dataset*>& per_seed) {
  std::vector<double> alphas;
  std::vector<std::optional<double>> exponents;
  if (!grid.alpha_exponents.empty()) {
    for (double e : grid.alpha_exponents) {
      alphas.push_back(std::pow(10.0, e / 2.0));
      exponents.emplace_back(e);
    }
  } else {
    alphas = grid.alphas;
    exponents.assign(alphas.size(), std::nullopt);
  }
  if (alphas.empty() || grid.seeds.empty()) throw ConfigError("sweep grid is empty");

  std::vector<TrainConfig> configs;
  std::vector<const Dataset*> data;
  for (std::size_t s = 0; s < grid.seeds.size(); ++s) {
    TrainConfig c = seeded(base, grid.seeds[s]);
    c.method = Method::kWithoutAdapters;
    configs.push_back(c);
    data.push_back(per_seed[s]);
  }
  for (double a : alphas) {
    for (std::size_t s = 0; s < grid.seeds.size(); ++s) {
      TrainConfig c = seeded(base, grid.seeds[s]);
      c.alpha = a;
      configs.push_back(c);
      data.push_back(per_seed[s]);
    }
  }
  const std::vector<RunRecord> runs = run_all(configs, data, std::max<std::size_t>(grid.workers, 1));

  SweepResult result;
  const std::size_t n_seeds = grid.seeds.size();
  for (std::size_t s = 0; s < n_seeds; ++s) result.baseline_accuracy += runs[s].final_accuracy;
  result.baseline_accuracy /= static_cast<double>(n_seeds);

  for (std::size_t a = 0; a < alphas.size(); ++a) {
    SweepRow row;
    row.alpha = alphas[a];
    row.exponent = exponents[a];
    for (std::size_t s = 0; s < n_seeds; ++s) {
      const RunRecord& r = runs[n_seeds + a * n_seeds + s];
      SweepRun run;
      run.seed = grid.seeds[s];
      run.accuracy = r.final_accuracy;
      run.peak_accuracy = r.peak_accuracy();
      run.complete = r.complete && r.leakage && r.leakage->worst.contains(grid.observable);
      run.leak = run.complete ? r.leak(grid.observable) : 1.0;
      row.accuracy += run.accuracy / static_cast<double>(n_seeds);
      row.leak += run.leak / static_cast<double>(n_seeds);
      row.runs.push_back(run);
    }
    result.rows.push_back(std::move(row));
  }
  result.selected = apply_sweep_rules(result.rows, result.baseline_accuracy);
  result.status = result.selected ? "ok" : "no stable configuration";
  return result;
}

}  // namespace

SweepResult sweep(const TrainConfig& base, const SweepGrid& grid, const Dataset& data) {
  return sweep_on(base, grid, std::vector<const Dataset*>(grid.seeds.size(), &data));
}

SweepResult sweep(const TrainConfig& base, const SweepGrid& grid) {
  std::vector<Dataset> owned;
  owned.reserve(grid.seeds.size());
  for (std::uint64_t seed : grid.seeds) owned.push_back(make_dataset(seeded(base, seed)));
  std::vector<const Dataset*> per_seed;
  for (const Dataset& d : owned) per_seed.push_back(&d);
  return sweep_on(base, grid, per_seed);
}

std::string sweep_result_json(const SweepResult& result) {
  ojson j;
  j["status"] = result.status;
  j["baseline_accuracy"] = result.baseline_accuracy;
  if (result.selected) {
    const SweepRow& row = result.rows[*result.selected];
    j["selected"] = {{"alpha", row.alpha}, {"accuracy", row.accuracy}, {"leak", row.leak}};
    if (row.exponent) j["selected"]["exponent"] = *row.exponent;
  } else {
    j["selected"] = nullptr;
  }
  ojson table = ojson::array();
  for (const auto& row : result.rows) {
    ojson r{{"alpha", row.alpha}, {"accuracy", row.accuracy}, {"leak", row.leak},
            {"kept", row.kept},   {"reason", row.reason}};
    if (row.exponent) r["exponent"] = *row.exponent;
    ojson runs = ojson::array();
    for (const auto& run : row.runs)
      runs.push_back({{"seed", run.seed}, {"accuracy", run.accuracy}, {"peak_accuracy", run.peak_accuracy},
                      {"leak", run.leak}, {"complete", run.complete}});
    r["runs"] = runs;
    table.push_back(r);
  }
  j["table"] = table;
  return j.dump(2);
}

}  // namespace splitveil
