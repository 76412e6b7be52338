// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

// Two-party fine-tuning API. A server hosts a frozen Backbone and answers
// stateless `forward` / `backprop` requests; the client owns labels, the head
// and every privacy secret.
//
// Wire format: each frame is a 5-byte header {u32 little-endian body length,
// u8 version} followed by a canonical JSON body. Tensors are encoded as
// {"rows", "cols", "data": base64 of little-endian f64}.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "splitveil/backbone.hpp"
#include "splitveil/tensor.hpp"

namespace splitveil {

inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kFrameHeaderSize = 5;
inline constexpr std::size_t kMaxFrameBody = std::size_t{1} << 30;

enum class ApiOp { kForward, kBackprop };
std::string_view to_string(ApiOp op);

/// Non-secret bookkeeping carried with a request so that servers can log
/// which adapter version they saw. -1 means unset.
struct RequestMeta {
  std::int64_t step = -1;
  std::int64_t adapter_id = -1;
  std::int64_t shard = -1;
  bool operator==(const RequestMeta&) const = default;
};

struct ApiRequest {
  ApiOp op = ApiOp::kForward;
  Tensor x;
  AdapterSet adapters;
  std::optional<Tensor> g_h;
  /// Always present, even though the backbone is deterministic.
  std::uint64_t seed = 0;
  RequestMeta meta;
};

struct ApiResponse {
  enum class Status { kOk, kProtocolError, kApplicationError };
  Status status = Status::kOk;
  std::string message;
  std::optional<Tensor> h;
  std::optional<AdapterGrad> g_theta;
};

std::string encode_frame(std::string_view body, std::uint8_t version = kWireVersion);
/// Returns the body of a complete frame; throws ProtocolError.
std::string_view decode_frame(std::string_view frame);

std::string encode_request(const ApiRequest& req);
/// Throws ProtocolError for framing/JSON problems, ApplicationError for
/// semantic ones (unknown op, missing g_h).
ApiRequest decode_request(std::string_view frame);
std::string encode_response(const ApiResponse& resp);
ApiResponse decode_response(std::string_view frame);

/// One line of a server's append-only request log.
struct LogEntry {
  std::string server_id;
  std::int64_t step = -1;
  std::int64_t adapter_id = -1;
  std::int64_t shard = -1;
  ApiOp op = ApiOp::kForward;
  std::string theta_hash;
  std::string request_digest;
  std::string response_digest;
};

/// What an honest-but-curious server keeps for offline label inference:
/// returned activations for forward, received cotangents for backprop.
struct Observation {
  RequestMeta meta;
  ApiOp op = ApiOp::kForward;
  Tensor value;
};

class ApiServer {
 public:
  struct Options {
    std::string id = "server";
    /// JSON-lines request log; appended to, one object per request.
    std::optional<std::filesystem::path> log_path;
    /// Keep raw request/response frames in memory for replay audits.
    bool keep_payloads = false;
    bool record_observations = true;
  };

  ApiServer(Backbone backbone, Options options);

  const std::string& id() const noexcept { return options_.id; }
  const Backbone& backbone() const noexcept { return backbone_; }

  /// Evaluates a request. Pure: the result depends only on the request.
  ApiResponse handle(const ApiRequest& req) const;
  /// Decodes, evaluates, logs, and encodes. Never throws for bad input;
  /// errors become error responses. Thread-safe.
  std::string handle_frame(std::string_view frame);

  std::vector<LogEntry> log() const;
  std::vector<Observation> observations() const;
  void clear_observations();
  /// (request frame, response frame) pairs, if keep_payloads is set.
  std::vector<std::pair<std::string, std::string>> payloads() const;

 private:
  Backbone backbone_;
  Options options_;
  mutable std::mutex mu_;
  std::vector<LogEntry> log_;
  std::vector<Observation> observations_;
  std::vector<std::pair<std::string, std::string>> payloads_;
  std::ofstream log_file_;
};

std::string log_entry_to_jsonl(const LogEntry& e);
LogEntry log_entry_from_jsonl(std::string_view line);

/// Byte-level request/response channel to one server.
class Transport {
 public:
  virtual ~Transport() = default;
  /// Sends one request frame and returns the response frame. Throws
  /// TransportError on connection failure.
  virtual std::string roundtrip(const std::string& frame) = 0;
};

/// Calls an ApiServer in the same process, still through encoded frames.
class InProcessTransport final : public Transport {
 public:
  explicit InProcessTransport(std::shared_ptr<ApiServer> server) : server_(std::move(server)) {}
  std::string roundtrip(const std::string& frame) override { return server_->handle_frame(frame); }

 private:
  std::shared_ptr<ApiServer> server_;
};

/// Client-side handle for one server.
class ServerEndpoint {
 public:
  using FrameTap = std::function<void(std::string_view request_frame)>;

  ServerEndpoint(std::string server_id, std::shared_ptr<Transport> transport,
                 std::size_t max_attempts = 3);

  const std::string& id() const noexcept { return id_; }
  /// Observer invoked with every outgoing request frame.
  void set_tap(FrameTap tap) { tap_ = std::move(tap); }

  /// Sends the request, retrying transport failures. Server-side errors are
  /// thrown as ProtocolError / ApplicationError.
  ApiResponse call(const ApiRequest& req);

 private:
  std::string id_;
  std::shared_ptr<Transport> transport_;
  std::size_t max_attempts_;
  FrameTap tap_;
};

Tensor call_forward(ServerEndpoint& server, const Tensor& x, const AdapterSet& adapters,
                    const RequestMeta& meta = {}, std::uint64_t seed = 0);
AdapterGrad call_backprop(ServerEndpoint& server, const Tensor& x, const AdapterSet& adapters,
                          const Tensor& g_h, const RequestMeta& meta = {}, std::uint64_t seed = 0);

/// Creates an in-process server and an endpoint wired to it.
struct LocalServer {
  std::shared_ptr<ApiServer> server;
  std::shared_ptr<ServerEndpoint> endpoint;
};
LocalServer make_local_server(const Backbone& backbone, ApiServer::Options options);

// ---------------------------------------------------------------------------
// Rotation

enum class RotationMode {
  kNone,      // everything goes to server 0
  kStrict,    // no server sees one adapter on two consecutive steps
  kParanoid,  // strict, plus the m shards of one step go to m distinct servers
};
std::string_view to_string(RotationMode mode);
RotationMode parse_rotation_mode(std::string_view name);

class RotationSchedule {
 public:
  RotationSchedule(std::size_t n_adapters, std::size_t n_servers, std::size_t shards,
                   std::size_t steps, RotationMode mode, std::vector<std::size_t> table);

  std::size_t server_for(std::size_t step, std::size_t adapter, std::size_t shard) const;
  /// Servers for all shards of (step, adapter); the forward call uses shard 0's.
  std::vector<std::size_t> servers_for(std::size_t step, std::size_t adapter) const;

  std::size_t n_adapters() const noexcept { return n_adapters_; }
  std::size_t n_servers() const noexcept { return n_servers_; }
  std::size_t shards() const noexcept { return shards_; }
  std::size_t steps() const noexcept { return steps_; }
  RotationMode mode() const noexcept { return mode_; }

 private:
  std::size_t n_adapters_, n_servers_, shards_, steps_;
  RotationMode mode_;
  std::vector<std::size_t> table_;  // [step][adapter][shard]
};

/// Builds a schedule; with a seed the window offsets are randomized.
/// Throws ConfigError naming the violated constraint when infeasible.
RotationSchedule make_rotation(std::size_t n_adapters, std::size_t n_servers, std::size_t shards,
                               std::size_t steps, RotationMode mode,
                               std::optional<std::uint64_t> seed = std::nullopt);

struct RotationViolation {
  std::string server_id;
  std::int64_t adapter_id = -1;
  std::int64_t step = -1;  // the server saw both step and step + 1
  auto operator<=>(const RotationViolation&) const = default;
};

/// Every (server, adapter, t) where one server received the adapter at both
/// t and t + 1. Sorted, without duplicates.
std::vector<RotationViolation> audit_log(std::span<const LogEntry> entries);

/// Log entries a schedule would produce (one per shard call plus a forward),
/// used for audits of generated schedules.
std::vector<LogEntry> simulate_schedule_log(const RotationSchedule& schedule,
                                            std::span<const std::string> server_ids);

}  // namespace splitveil
