// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#include "splitveil/ftapi.hpp"

#include <algorithm>
#include <cstring>
#include <map>
#include <numeric>
#include <set>

#include "json_codec.hpp"
#include "splitveil/codec.hpp"
#include "splitveil/error.hpp"
#include "splitveil/rng.hpp"

namespace splitveil {

using detail::json;

std::string_view to_string(ApiOp op) { return op == ApiOp::kForward ? "forward" : "backprop"; }

// ---------------------------------------------------------------------------
// Framing

std::string encode_frame(std::string_view body, std::uint8_t version) {
  if (body.size() > kMaxFrameBody) throw ProtocolError("frame body too large");
  const auto len = static_cast<std::uint32_t>(body.size());
  std::string out(kFrameHeaderSize + body.size(), '\0');
  for (int i = 0; i < 4; ++i) out[static_cast<std::size_t>(i)] = static_cast<char>((len >> (8 * i)) & 0xFF);
  out[4] = static_cast<char>(version);
  std::memcpy(out.data() + kFrameHeaderSize, body.data(), body.size());
  return out;
}

std::string_view decode_frame(std::string_view frame) {
  if (frame.size() < kFrameHeaderSize) throw ProtocolError("frame shorter than header");
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i)
    len |= static_cast<std::uint32_t>(static_cast<unsigned char>(frame[static_cast<std::size_t>(i)])) << (8 * i);
  const auto version = static_cast<std::uint8_t>(frame[4]);
  if (version != kWireVersion) throw ProtocolError("unsupported wire version " + std::to_string(version));
  if (frame.size() != kFrameHeaderSize + len) {
    throw ProtocolError("frame length " + std::to_string(frame.size() - kFrameHeaderSize) +
                        " does not match header " + std::to_string(len));
  }
  return frame.substr(kFrameHeaderSize);
}

namespace {

json meta_to_json(const RequestMeta& m) {
  return json{{"step", m.step}, {"adapter", m.adapter_id}, {"shard", m.shard}};
}

RequestMeta meta_from_json(const json& j) {
  RequestMeta m;
  m.step = j.value("step", std::int64_t{-1});
  m.adapter_id = j.value("adapter", std::int64_t{-1});
  m.shard = j.value("shard", std::int64_t{-1});
  return m;
}

json parse_body(std::string_view frame) {
  const std::string_view body = decode_frame(frame);
  try {
    json j = json::parse(body);
    if (!j.is_object()) throw ProtocolError("frame body is not a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed JSON body: ") + e.what());
  }
}

}  // namespace

std::string encode_request(const ApiRequest& req) {
  json j{{"op", to_string(req.op)},
         {"x", detail::tensor_to_json(req.x)},
         {"adapters", detail::adapters_to_json(req.adapters)},
         {"seed", req.seed},
         {"meta", meta_to_json(req.meta)}};
  if (req.g_h) j["g_h"] = detail::tensor_to_json(*req.g_h);
  return encode_frame(j.dump());
}

ApiRequest decode_request(std::string_view frame) {
  const json j = parse_body(frame);
  ApiRequest req;
  try {
    const auto& op = detail::require_key<ProtocolError>(j, "op").get_ref<const std::string&>();
    if (op == "forward") {
      req.op = ApiOp::kForward;
    } else if (op == "backprop") {
      req.op = ApiOp::kBackprop;
    } else {
      throw ApplicationError("unknown op '" + op + "'");
    }
    req.x = detail::tensor_from_json(detail::require_key<ProtocolError>(j, "x"));
    req.adapters = detail::adapters_from_json(detail::require_key<ProtocolError>(j, "adapters"));
    req.seed = detail::require_key<ProtocolError>(j, "seed").get<std::uint64_t>();
    if (j.contains("meta")) req.meta = meta_from_json(j["meta"]);
    if (j.contains("g_h")) req.g_h = detail::tensor_from_json(j["g_h"]);
  } catch (const ParseError& e) {
    throw ProtocolError(e.what());
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed request: ") + e.what());
  }
  if (req.op == ApiOp::kBackprop && !req.g_h) throw ApplicationError("backprop request without g_h");
  return req;
}

std::string encode_response(const ApiResponse& resp) {
  json j;
  switch (resp.status) {
    case ApiResponse::Status::kOk: j["status"] = "ok"; break;
    case ApiResponse::Status::kProtocolError: j["status"] = "protocol_error"; break;
    case ApiResponse::Status::kApplicationError: j["status"] = "application_error"; break;
  }
  if (!resp.message.empty()) j["message"] = resp.message;
  if (resp.h) j["h"] = detail::tensor_to_json(*resp.h);
  if (resp.g_theta) j["g_theta"] = detail::grad_to_json(*resp.g_theta);
  return encode_frame(j.dump());
}

ApiResponse decode_response(std::string_view frame) {
  const json j = parse_body(frame);
  ApiResponse resp;
  try {
    const auto& status = detail::require_key<ProtocolError>(j, "status").get_ref<const std::string&>();
    if (status == "ok") {
      resp.status = ApiResponse::Status::kOk;
    } else if (status == "protocol_error") {
      resp.status = ApiResponse::Status::kProtocolError;
    } else if (status == "application_error") {
      resp.status = ApiResponse::Status::kApplicationError;
    } else {
      throw ProtocolError("unknown response status '" + status + "'");
    }
    resp.message = j.value("message", "");
    if (j.contains("h")) resp.h = detail::tensor_from_json(j["h"]);
    if (j.contains("g_theta")) resp.g_theta = detail::grad_from_json(j["g_theta"]);
  } catch (const ParseError& e) {
    throw ProtocolError(e.what());
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed response: ") + e.what());
  }
  return resp;
}

// ---------------------------------------------------------------------------
// Server

ApiServer::ApiServer(Backbone backbone, Options options)
    : backbone_(std::move(backbone)), options_(std::move(options)) {
  if (options_.log_path) {
    log_file_.open(*options_.log_path, std::ios::app);
    if (!log_file_) throw Error("cannot open request log " + options_.log_path->string());
  }
}

ApiResponse ApiServer::handle(const ApiRequest& req) const {
  ApiResponse resp;
  try {
    if (req.x.rows() == 0) throw ApplicationError("empty batch");
    check_adapters(backbone_, req.adapters);
    if (req.op == ApiOp::kForward) {
      resp.h = forward(backbone_, req.x, req.adapters).h;
    } else {
      if (!req.g_h) throw ApplicationError("backprop request without g_h");
      resp.g_theta = backprop(backbone_, req.x, req.adapters, *req.g_h);
    }
  } catch (const ApplicationError& e) {
    return {ApiResponse::Status::kApplicationError, e.what(), std::nullopt, std::nullopt};
  } catch (const DimensionError& e) {
    return {ApiResponse::Status::kApplicationError, e.what(), std::nullopt, std::nullopt};
  }
  return resp;
}

std::string ApiServer::handle_frame(std::string_view frame) {
  std::optional<ApiRequest> req;
  ApiResponse resp;
  try {
    req = decode_request(frame);
    resp = handle(*req);
  } catch (const ProtocolError& e) {
    resp = {ApiResponse::Status::kProtocolError, e.what(), std::nullopt, std::nullopt};
  } catch (const std::exception& e) {
    resp = {ApiResponse::Status::kApplicationError, e.what(), std::nullopt, std::nullopt};
  }
  std::string out = encode_response(resp);

  LogEntry entry;
  entry.server_id = options_.id;
  if (req) {
    entry.step = req->meta.step;
    entry.adapter_id = req->meta.adapter_id;
    entry.shard = req->meta.shard;
    entry.op = req->op;
    entry.theta_hash = adapter_hash(req->adapters);
  }
  entry.request_digest = sha256_hex(frame);
  entry.response_digest = sha256_hex(out);

  std::lock_guard lock(mu_);
  if (log_file_.is_open()) log_file_ << log_entry_to_jsonl(entry) << '\n' << std::flush;
  log_.push_back(std::move(entry));
  if (options_.keep_payloads) payloads_.emplace_back(std::string(frame), out);
  if (options_.record_observations && req && resp.status == ApiResponse::Status::kOk) {
    if (req->op == ApiOp::kForward) {
      observations_.push_back({req->meta, req->op, *resp.h});
    } else {
      observations_.push_back({req->meta, req->op, *req->g_h});
    }
  }
  return out;
}

std::vector<LogEntry> ApiServer::log() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::vector<Observation> ApiServer::observations() const {
  std::lock_guard lock(mu_);
  return observations_;
}

void ApiServer::clear_observations() {
  std::lock_guard lock(mu_);
  observations_.clear();
}

std::vector<std::pair<std::string, std::string>> ApiServer::payloads() const {
  std::lock_guard lock(mu_);
  return payloads_;
}

std::string log_entry_to_jsonl(const LogEntry& e) {
  const json j{{"server", e.server_id},       {"step", e.step},
               {"adapter", e.adapter_id},     {"shard", e.shard},
               {"op", to_string(e.op)},       {"theta_hash", e.theta_hash},
               {"request", e.request_digest}, {"response", e.response_digest}};
  return j.dump();
}

LogEntry log_entry_from_jsonl(std::string_view line) {
  try {
    const json j = json::parse(line);
    LogEntry e;
    e.server_id = j.at("server").get<std::string>();
    e.step = j.at("step").get<std::int64_t>();
    e.adapter_id = j.at("adapter").get<std::int64_t>();
    e.shard = j.value("shard", std::int64_t{-1});
    e.op = j.at("op").get<std::string>() == "backprop" ? ApiOp::kBackprop : ApiOp::kForward;
    e.theta_hash = j.value("theta_hash", "");
    e.request_digest = j.value("request", "");
    e.response_digest = j.value("response", "");
    return e;
  } catch (const json::exception& e) {
    throw ParseError(std::string("log entry: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Client

ServerEndpoint::ServerEndpoint(std::string server_id, std::shared_ptr<Transport> transport,
                               std::size_t max_attempts)
    : id_(std::move(server_id)), transport_(std::move(transport)),
      max_attempts_(std::max<std::size_t>(1, max_attempts)) {}

ApiResponse ServerEndpoint::call(const ApiRequest& req) {
  const std::string frame = encode_request(req);
  if (tap_) tap_(frame);
  std::string reply;
  for (std::size_t attempt = 1;; ++attempt) {
    try {
      reply = transport_->roundtrip(frame);
      break;
    } catch (const TransportError&) {
      if (attempt >= max_attempts_) throw;
    }
  }
  ApiResponse resp = decode_response(reply);
  switch (resp.status) {
    case ApiResponse::Status::kOk: return resp;
    case ApiResponse::Status::kProtocolError: throw ProtocolError(id_ + ": " + resp.message);
    case ApiResponse::Status::kApplicationError: throw ApplicationError(id_ + ": " + resp.message);
  }
  return resp;
}

Tensor call_forward(ServerEndpoint& server, const Tensor& x, const AdapterSet& adapters,
                    const RequestMeta& meta, std::uint64_t seed) {
  ApiRequest req{ApiOp::kForward, x, adapters, std::nullopt, seed, meta};
  ApiResponse resp = server.call(req);
  if (!resp.h) throw ProtocolError(server.id() + ": forward response without h");
  return std::move(*resp.h);
}

AdapterGrad call_backprop(ServerEndpoint& server, const Tensor& x, const AdapterSet& adapters,
                          const Tensor& g_h, const RequestMeta& meta, std::uint64_t seed) {
  ApiRequest req{ApiOp::kBackprop, x, adapters, g_h, seed, meta};
  ApiResponse resp = server.call(req);
  if (!resp.g_theta) throw ProtocolError(server.id() + ": backprop response without g_theta");
  return std::move(*resp.g_theta);
}

LocalServer make_local_server(const Backbone& backbone, ApiServer::Options options) {
  auto server = std::make_shared<ApiServer>(backbone, options);
  auto endpoint = std::make_shared<ServerEndpoint>(options.id, std::make_shared<InProcessTransport>(server));
  return {std::move(server), std::move(endpoint)};
}

// ---------------------------------------------------------------------------
// Rotation

std::string_view to_string(RotationMode mode) {
  switch (mode) {
    case RotationMode::kNone: return "none";
    case RotationMode::kStrict: return "strict";
    case RotationMode::kParanoid: return "paranoid";
  }
  return "unknown";
}

RotationMode parse_rotation_mode(std::string_view name) {
  if (name == "none") return RotationMode::kNone;
  if (name == "strict") return RotationMode::kStrict;
  if (name == "paranoid") return RotationMode::kParanoid;
  throw ConfigError("unknown rotation mode '" + std::string(name) + "'");
}

RotationSchedule::RotationSchedule(std::size_t n_adapters, std::size_t n_servers, std::size_t shards,
                                   std::size_t steps, RotationMode mode, std::vector<std::size_t> table)
    : n_adapters_(n_adapters), n_servers_(n_servers), shards_(shards), steps_(steps), mode_(mode),
      table_(std::move(table)) {
  if (table_.size() != steps * n_adapters * shards) throw DimensionError("rotation table size mismatch");
}

std::size_t RotationSchedule::server_for(std::size_t step, std::size_t adapter, std::size_t shard) const {
  if (step >= steps_ || adapter >= n_adapters_ || shard >= shards_)
    throw InputError("rotation lookup out of range");
  return table_[(step * n_adapters_ + adapter) * shards_ + shard];
}

std::vector<std::size_t> RotationSchedule::servers_for(std::size_t step, std::size_t adapter) const {
  std::vector<std::size_t> out(shards_);
  for (std::size_t j = 0; j < shards_; ++j) out[j] = server_for(step, adapter, j);
  return out;
}

RotationSchedule make_rotation(std::size_t n_adapters, std::size_t n_servers, std::size_t shards,
                               std::size_t steps, RotationMode mode, std::optional<std::uint64_t> seed) {
  if (n_adapters == 0 || shards == 0) throw ConfigError("rotation needs at least one adapter and one shard");
  if (n_servers == 0) throw ConfigError("rotation needs at least one server");
  std::vector<std::size_t> table(steps * n_adapters * shards, 0);
  if (mode == RotationMode::kNone) return {n_adapters, n_servers, shards, steps, mode, std::move(table)};

  if (n_servers < 2) {
    throw ConfigError("strict rotation requires n_servers >= 2 (got " + std::to_string(n_servers) + ")");
  }
  std::size_t group = std::min(shards, n_servers / 2);
  if (mode == RotationMode::kParanoid) {
    if (n_servers < 2 * shards) {
      throw ConfigError("paranoid rotation requires n_servers >= 2*m (got n_servers=" +
                        std::to_string(n_servers) + ", m=" + std::to_string(shards) + ")");
    }
    group = shards;
  }

  // Each (adapter, step) uses a contiguous window of `group` servers (mod n).
  // Consecutive windows are offset by delta in [group, n - group], which keeps
  // them disjoint.
  std::vector<std::size_t> perm(n_servers);
  std::iota(perm.begin(), perm.end(), 0);
  std::optional<Rng> rng;
  if (seed) {
    rng.emplace(*seed);
    for (std::size_t i = n_servers; i > 1; --i) std::swap(perm[i - 1], perm[rng->index(i)]);
  }
  for (std::size_t a = 0; a < n_adapters; ++a) {
    std::size_t start = rng ? rng->index(n_servers) : (a * group) % n_servers;
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t j = 0; j < shards; ++j)
        table[(t * n_adapters + a) * shards + j] = perm[(start + j % group) % n_servers];
      const std::size_t delta = group + (rng ? rng->index(n_servers - 2 * group + 1) : 0);
      start = (start + delta) % n_servers;
    }
  }
  return {n_adapters, n_servers, shards, steps, mode, std::move(table)};
}

std::vector<RotationViolation> audit_log(std::span<const LogEntry> entries) {
  // (server, adapter) -> steps observed
  std::map<std::pair<std::string, std::int64_t>, std::set<std::int64_t>> seen;
  for (const auto& e : entries) {
    if (e.step < 0 || e.adapter_id < 0) continue;
    seen[{e.server_id, e.adapter_id}].insert(e.step);
  }
  std::vector<RotationViolation> out;
  for (const auto& [key, steps] : seen) {
    for (std::int64_t t : steps)
      if (steps.contains(t + 1)) out.push_back({key.first, key.second, t});
  }
  std::ranges::sort(out);
  return out;
}

std::vector<LogEntry> simulate_schedule_log(const RotationSchedule& schedule,
                                            std::span<const std::string> server_ids) {
  if (server_ids.size() != schedule.n_servers()) throw InputError("server id count mismatch");
  std::vector<LogEntry> log;
  for (std::size_t t = 0; t < schedule.steps(); ++t) {
    for (std::size_t a = 0; a < schedule.n_adapters(); ++a) {
      const std::string theta = "adapter" + std::to_string(a) + "@" + std::to_string(t);
      LogEntry fwd;
      fwd.server_id = server_ids[schedule.server_for(t, a, 0)];
      fwd.step = static_cast<std::int64_t>(t);
      fwd.adapter_id = static_cast<std::int64_t>(a);
      fwd.op = ApiOp::kForward;
      fwd.theta_hash = theta;
      log.push_back(fwd);
      for (std::size_t j = 0; j < schedule.shards(); ++j) {
        LogEntry bp = fwd;
        bp.server_id = server_ids[schedule.server_for(t, a, j)];
        bp.shard = static_cast<std::int64_t>(j);
        bp.op = ApiOp::kBackprop;
        log.push_back(bp);
      }
    }
  }
  return log;
}

}  // namespace splitveil
