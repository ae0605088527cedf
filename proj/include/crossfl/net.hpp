/*
 * Copyright 2026 The crossfl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "crossfl/fl_protocol.hpp"

namespace crossfl::net {

// Owning TCP stream socket.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket();
  Socket(Socket&& other) noexcept;
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }

  // Throws kTransportError on failure.
  void send_all(std::span<const std::uint8_t> bytes);
  // False on orderly EOF before the first byte; throws kTransportError on
  // EOF part way through or on a socket error.
  bool recv_exact(std::span<std::uint8_t> out);

  // Unblocks any thread sitting in recv on this socket.
  void shutdown();
  void close();

 private:
  int fd_ = -1;
};

class Listener {
 public:
  // Binds and listens; throws kPortUnavailable. Port 0 picks an ephemeral port.
  Listener(const std::string& host, std::uint16_t port);

  std::uint16_t port() const { return port_; }
  // Invalid socket once shutdown() has been called.
  Socket accept();
  void shutdown();
  // Releases the port. No thread may be inside accept().
  void close() { socket_.close(); }

 private:
  Socket socket_;
  std::uint16_t port_ = 0;
};

// Throws kTransportError.
Socket connect_tcp(const std::string& host, std::uint16_t port);

void write_message(Socket& socket, const protocol::Message& message);

// nullopt on orderly EOF between frames. Throws kTransportError on a broken
// stream and the codec's errors on a malformed frame.
std::optional<protocol::Message> read_message(Socket& socket);

}  // namespace crossfl::net
