// Copyright 2026 The urep Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "json_util.hpp"
#include "urep/serving.hpp"

namespace urep::serving {

using detail::json;

namespace {

constexpr std::uint32_t kMaxFrame = 16u << 20;

void write_all(int fd, const char* data, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw IoError(std::string("socket write failed: ") + std::strerror(errno));
    }
    data += w;
    n -= std::size_t(w);
  }
}

// Returns false on end of stream before any byte was read.
bool read_all(int fd, char* data, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, data + got, n - got, 0);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw IoError(std::string("socket read failed: ") + std::strerror(errno));
    }
    if (r == 0) {
      if (got == 0) return false;
      throw IoError("connection closed mid-frame");
    }
    got += std::size_t(r);
  }
  return true;
}

sockaddr_un socket_address(const std::filesystem::path& path) {
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  const auto s = path.string();
  if (s.size() >= sizeof(addr.sun_path)) throw IoError("socket path too long: " + s);
  std::memcpy(addr.sun_path, s.c_str(), s.size() + 1);
  return addr;
}

json error_response(const std::string& code, const std::string& message) {
  return json{{"ok", false}, {"error", code}, {"message", message}};
}

}  // namespace

std::string frame(std::string_view payload) {
  if (payload.size() > kMaxFrame) throw IoError("frame too large");
  const auto n = std::uint32_t(payload.size());
  std::string out;
  out.reserve(4 + payload.size());
  out.push_back(char((n >> 24) & 0xff));
  out.push_back(char((n >> 16) & 0xff));
  out.push_back(char((n >> 8) & 0xff));
  out.push_back(char(n & 0xff));
  out.append(payload);
  return out;
}

std::optional<std::string> read_frame(int fd) {
  unsigned char header[4];
  if (!read_all(fd, reinterpret_cast<char*>(header), 4)) return std::nullopt;
  const std::uint32_t n = (std::uint32_t(header[0]) << 24) | (std::uint32_t(header[1]) << 16) |
                          (std::uint32_t(header[2]) << 8) | std::uint32_t(header[3]);
  if (n > kMaxFrame) throw IoError("frame too large");
  std::string payload(n, '\0');
  if (n > 0 && !read_all(fd, payload.data(), n)) throw IoError("connection closed mid-frame");
  return payload;
}

void write_frame(int fd, std::string_view payload) {
  const auto f = frame(payload);
  write_all(fd, f.data(), f.size());
}

std::string handle_request(const EmbeddingStore& store, const std::string& model,
                           const lineage::LineageGraph* graph, const std::string& request) {
  try {
    const auto j = json::parse(request);
    const auto user = j.at("user").get<UserId>();
    const auto policy = BatchPolicy::parse(j.value("policy", std::string("current")));
    const auto rep = get_representation(store, user, model, policy, graph);
    return json{{"ok", true},
                {"user", rep.user_id},
                {"z", detail::to_json(rep.z)},
                {"batch", detail::to_json(rep.model_batch)},
                {"as_of", rep.as_of},
                {"source", userrep::source_name(rep.source)}}
        .dump();
  } catch (const json::exception& e) {
    return error_response("bad_request", e.what()).dump();
  } catch (const ConfigError& e) {
    return error_response("bad_request", e.what()).dump();
  } catch (const NotFoundError& e) {
    return error_response("not_found", e.what()).dump();
  } catch (const LineageError& e) {
    return error_response("unavailable", e.what()).dump();
  } catch (const Error& e) {
    return error_response("internal", e.what()).dump();
  }
}

RepServer::RepServer(std::filesystem::path socket_path, Handler handler)
    : path_(std::move(socket_path)), handler_(std::move(handler)) {}

RepServer::~RepServer() { stop(); }

void RepServer::start() {
  if (running_) return;
  const auto addr = socket_address(path_);
  std::error_code ec;
  std::filesystem::remove(path_, ec);
  listen_fd_ = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw IoError(std::string("socket: ") + std::strerror(errno));
  if (::bind(listen_fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) < 0 ||
      ::listen(listen_fd_, 16) < 0) {
    const std::string msg = std::strerror(errno);
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw IoError("cannot listen on " + path_.string() + ": " + msg);
  }
  running_ = true;
  thread_ = std::thread([this] { loop(); });
}

void RepServer::stop() {
  if (!running_.exchange(false)) return;
  if (thread_.joinable()) thread_.join();
  ::close(listen_fd_);
  listen_fd_ = -1;
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

void RepServer::loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, 100);
    if (r <= 0 || !(p.revents & POLLIN)) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    try {
      serve_client(fd);
    } catch (const IoError&) {
      // A broken client connection does not stop the server.
    }
    ::close(fd);
  }
}

void RepServer::serve_client(int fd) {
  while (running_) {
    pollfd p{fd, POLLIN, 0};
    const int r = ::poll(&p, 1, 100);
    if (r == 0) continue;
    if (r < 0) return;
    auto req = read_frame(fd);
    if (!req) return;
    write_frame(fd, handler_(*req));
    ++served_;
  }
}

std::string request(const std::filesystem::path& socket_path, const std::string& payload) {
  const auto addr = socket_address(socket_path);
  const int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (fd < 0) throw IoError(std::string("socket: ") + std::strerror(errno));
  if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) < 0) {
    const std::string msg = std::strerror(errno);
    ::close(fd);
    throw IoError("cannot connect to " + socket_path.string() + ": " + msg);
  }
  std::optional<std::string> resp;
  try {
    write_frame(fd, payload);
    resp = read_frame(fd);
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
  if (!resp) throw IoError("server closed the connection");
  return *resp;
}

}  // namespace urep::serving
