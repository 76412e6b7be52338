// Copyright 2026 The SplitVeil Authors
// SPDX-License-Identifier: Apache-2.0

#include "splitveil/tcp.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "splitveil/error.hpp"

namespace splitveil {

namespace {

// Returns false on orderly EOF before any byte was read.
bool read_exact(int fd, char* buf, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, buf + got, n - got, 0);
    if (r == 0) {
      if (got == 0) return false;
      throw TransportError("connection closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("recv: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

void write_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t w = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("send: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(w);
  }
}

// Reads one frame (header + body). Returns empty on clean EOF.
std::string read_frame(int fd) {
  std::string frame(kFrameHeaderSize, '\0');
  if (!read_exact(fd, frame.data(), kFrameHeaderSize)) return {};
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i)
    len |= static_cast<std::uint32_t>(static_cast<unsigned char>(frame[static_cast<std::size_t>(i)])) << (8 * i);
  if (len > kMaxFrameBody) throw TransportError("frame too large");
  frame.resize(kFrameHeaderSize + len);
  if (len > 0 && !read_exact(fd, frame.data() + kFrameHeaderSize, len))
    throw TransportError("connection closed mid-frame");
  return frame;
}

}  // namespace

std::pair<std::string, std::uint16_t> parse_address(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos) throw ConfigError("address '" + address + "' is not host:port");
  const std::string host = address.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(address.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("address '" + address + "' has a non-numeric port");
  }
  if (port <= 0 || port > 65535) throw ConfigError("address '" + address + "' has an invalid port");
  return {host.empty() ? "127.0.0.1" : host, static_cast<std::uint16_t>(port)};
}

// ---------------------------------------------------------------------------
// TcpServer

TcpServer::TcpServer(std::shared_ptr<ApiServer> server, std::uint16_t port, std::string host)
    : server_(std::move(server)) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw TransportError(std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw ConfigError("invalid bind address '" + host + "'");
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 ||
      ::listen(listen_fd_, 64) < 0) {
    const std::string err = std::strerror(errno);
    ::close(listen_fd_);
    throw TransportError("bind/listen on port " + std::to_string(port) + ": " + err);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

TcpServer::~TcpServer() { stop(); }

void TcpServer::stop() {
  if (running_.exchange(false)) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    {
      std::lock_guard lock(mu_);
      for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
    }
  }
  if (acceptor_.joinable()) acceptor_.join();
  std::list<std::thread> workers;
  {
    std::lock_guard lock(mu_);
    workers.swap(workers_);
  }
  for (auto& w : workers)
    if (w.joinable()) w.join();
}

void TcpServer::wait() {
  if (acceptor_.joinable()) acceptor_.join();
}

void TcpServer::accept_loop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      break;
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard lock(mu_);
    client_fds_.push_back(fd);
    workers_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void TcpServer::serve_connection(int fd) {
  try {
    while (running_) {
      const std::string frame = read_frame(fd);
      if (frame.empty()) break;
      write_all(fd, server_->handle_frame(frame));
    }
  } catch (const TransportError&) {
    // peer went away
  }
  std::lock_guard lock(mu_);
  client_fds_.remove(fd);
  ::close(fd);
}

// ---------------------------------------------------------------------------
// TcpTransport

TcpTransport::TcpTransport(std::string host, std::uint16_t port) : host_(std::move(host)), port_(port) {}

TcpTransport::~TcpTransport() {
  std::lock_guard lock(mu_);
  close_locked();
}

void TcpTransport::close_locked() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void TcpTransport::connect_locked() {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host_.c_str(), std::to_string(port_).c_str(), &hints, &res) != 0 || !res) {
    throw TransportError("cannot resolve " + host_);
  }
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    ::freeaddrinfo(res);
    throw TransportError(std::string("socket: ") + std::strerror(errno));
  }
  if (::connect(fd, res->ai_addr, res->ai_addrlen) < 0) {
    const std::string err = std::strerror(errno);
    ::freeaddrinfo(res);
    ::close(fd);
    throw TransportError("connect " + host_ + ":" + std::to_string(port_) + ": " + err);
  }
  ::freeaddrinfo(res);
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  fd_ = fd;
}

std::string TcpTransport::roundtrip(const std::string& frame) {
  std::lock_guard lock(mu_);
  try {
    if (fd_ < 0) connect_locked();
    write_all(fd_, frame);
    std::string reply = read_frame(fd_);
    if (reply.empty()) throw TransportError("server closed the connection");
    return reply;
  } catch (const TransportError&) {
    close_locked();
    throw;
  }
}

}  // namespace splitveil
