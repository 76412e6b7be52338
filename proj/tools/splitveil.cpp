// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

// splitveil serve | run | sweep | attack

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "splitveil/attacks.hpp"
#include "splitveil/codec.hpp"
#include "splitveil/error.hpp"
#include "splitveil/ftapi.hpp"
#include "splitveil/tcp.hpp"
#include "splitveil/train.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw splitveil::ConfigError("cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw splitveil::ConfigError("cannot write '" + path + "'");
  out << text;
}

int serve(const std::string& spec_path, std::uint16_t port, const std::string& log_path, const std::string& id,
          const std::string& host) {
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  const splitveil::BackboneSpec spec = splitveil::parse_backbone_spec(read_file(spec_path));
  splitveil::ApiServer::Options options;
  options.id = id;
  if (!log_path.empty()) options.log_path = log_path;
  options.record_observations = false;
  auto api = std::make_shared<splitveil::ApiServer>(splitveil::Backbone(spec), options);
  splitveil::TcpServer server(api, port, host);
  std::cout << "listening on " << host << ':' << server.port() << " spec " << splitveil::spec_hash(spec)
            << std::endl;

  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  std::cerr << "stopped after " << api->log().size() << " requests\n";
  return 0;
}

int run(const std::string& config_path, const std::string& out, const std::string& summary, const std::string& csv) {
  const splitveil::TrainConfig config = splitveil::parse_train_config(read_file(config_path));
  const splitveil::Dataset data = splitveil::make_dataset(config);
  const splitveil::RunRecord record = splitveil::run_training(config, data);
  if (!out.empty()) write_file(out, splitveil::run_record_to_jsonl(record));
  if (!csv.empty()) write_file(csv, splitveil::run_record_to_csv(record));
  const std::string text = splitveil::run_summary_json(record);
  if (!summary.empty()) write_file(summary, text + "\n");
  std::cout << text << '\n';
  return record.complete ? 0 : 3;
}

int sweep(const std::string& config_path, const std::string& grid_path, const std::string& out) {
  const splitveil::TrainConfig config = splitveil::parse_train_config(read_file(config_path));
  const splitveil::SweepGrid grid = splitveil::parse_sweep_grid(read_file(grid_path));
  const splitveil::SweepResult result = splitveil::sweep(config, grid);
  const std::string text = splitveil::sweep_result_json(result);
  if (!out.empty()) write_file(out, text + "\n");
  std::cout << text << '\n';
  return result.selected ? 0 : 4;
}

int attack(const std::string& record_path) {
  const splitveil::AttackReport report = splitveil::attacks_from_run_jsonl(read_file(record_path));
  std::cout << splitveil::summary_to_json(splitveil::leakage_summary(report)) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"splitveil: private split fine-tuning over a forward/backprop API"};
  app.require_subcommand(1);

  std::string spec_path, log_path, server_id = "server", host = "127.0.0.1";
  std::uint16_t port = 0;
  auto* serve_cmd = app.add_subcommand("serve", "host a frozen backbone over TCP");
  serve_cmd->add_option("--spec", spec_path, "backbone spec JSON")->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--port", port, "TCP port (0 picks one)")->required();
  serve_cmd->add_option("--log", log_path, "append request log here (JSON lines)");
  serve_cmd->add_option("--id", server_id, "server id written to the log");
  serve_cmd->add_option("--host", host, "bind address");

  std::string config_path, out, summary, csv, grid_path, record_path;
  auto* run_cmd = app.add_subcommand("run", "train once and report accuracy and leakage");
  run_cmd->add_option("--config", config_path, "training config JSON")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--out", out, "run record (JSON lines)");
  run_cmd->add_option("--summary", summary, "summary JSON");
  run_cmd->add_option("--csv", csv, "per-step CSV");

  auto* sweep_cmd = app.add_subcommand("sweep", "grid-search the regularizer weight");
  sweep_cmd->add_option("--config", config_path, "template config JSON")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--grid", grid_path, "grid JSON")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--out", out, "sweep table JSON");

  auto* attack_cmd = app.add_subcommand("attack", "recompute the leakage summary of a run record");
  attack_cmd->add_option("--record", record_path, "run record JSON lines")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*serve_cmd) return serve(spec_path, port, log_path, server_id, host);
    if (*run_cmd) return run(config_path, out, summary, csv);
    if (*sweep_cmd) return sweep(config_path, grid_path, out);
    if (*attack_cmd) return attack(record_path);
  } catch (const splitveil::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
