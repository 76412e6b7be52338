// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "splitveil/ftapi.hpp"

namespace splitveil {

/// Serves an ApiServer over TCP, one thread per connection. Connections stay
/// open across error responses.
class TcpServer {
 public:
  /// Binds to host:port (port 0 picks an ephemeral port) and starts accepting.
  TcpServer(std::shared_ptr<ApiServer> server, std::uint16_t port, std::string host = "127.0.0.1");
  ~TcpServer();

  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  void stop();
  /// Blocks until stop() is called from another thread.
  void wait();

 private:
  void accept_loop();
  void serve_connection(int fd);

  std::shared_ptr<ApiServer> server_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{true};
  std::thread acceptor_;
  std::mutex mu_;
  std::list<std::thread> workers_;
  std::list<int> client_fds_;
};

/// Persistent client connection, re-established after failures.
class TcpTransport final : public Transport {
 public:
  TcpTransport(std::string host, std::uint16_t port);
  ~TcpTransport() override;

  std::string roundtrip(const std::string& frame) override;

 private:
  void connect_locked();
  void close_locked();

  std::string host_;
  std::uint16_t port_;
  std::mutex mu_;
  int fd_ = -1;
};

/// Parses "host:port".
std::pair<std::string, std::uint16_t> parse_address(const std::string& address);

}  // namespace splitveil
