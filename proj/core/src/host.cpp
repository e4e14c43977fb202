#include "pcp/host.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "pcp/error.hpp"

namespace pcp::host {

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void handle_signal(int) { g_interrupted.store(true); }

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

void set_nonblocking(int fd) {
  int flags = ::fcntl(fd, F_GETFL, 0);
  if (flags < 0 || ::fcntl(fd, F_SETFL, flags | O_NONBLOCK) < 0) {
    fail(Errc::io_error, errno_text("fcntl"));
  }
}

sockaddr_storage resolve(const std::string& endpoint, socklen_t& len) {
  auto colon = endpoint.rfind(':');
  if (colon == std::string::npos) fail(Errc::dial_error, "endpoint \"" + endpoint + "\" has no port");
  std::string host = endpoint.substr(0, colon);
  std::string port = endpoint.substr(colon + 1);
  if (host.size() >= 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || !res) {
    fail(Errc::dial_error, "cannot resolve " + endpoint);
  }
  sockaddr_storage out{};
  std::memcpy(&out, res->ai_addr, res->ai_addrlen);
  len = res->ai_addrlen;
  ::freeaddrinfo(res);
  return out;
}

std::string render_endpoint(const sockaddr_storage& addr) {
  char host[INET6_ADDRSTRLEN] = {};
  std::uint16_t port = 0;
  if (addr.ss_family == AF_INET) {
    const auto* in = reinterpret_cast<const sockaddr_in*>(&addr);
    ::inet_ntop(AF_INET, &in->sin_addr, host, sizeof host);
    port = ntohs(in->sin_port);
    return std::string(host) + ":" + std::to_string(port);
  }
  const auto* in6 = reinterpret_cast<const sockaddr_in6*>(&addr);
  ::inet_ntop(AF_INET6, &in6->sin6_addr, host, sizeof host);
  port = ntohs(in6->sin6_port);
  return "[" + std::string(host) + "]:" + std::to_string(port);
}

class TcpConnection final : public Connection, public std::enable_shared_from_this<TcpConnection> {
 public:
  TcpConnection(HostExecutor& ex, int fd) : Connection(ex), ex_(ex), fd_(fd), drained_(ex) {}

  ~TcpConnection() override { shutdown_fd(); }

  void start() {
    std::weak_ptr<TcpConnection> weak = shared_from_this();
    ex_.watch(fd_, POLLIN, [weak](short revents) {
      if (auto self = weak.lock()) self->on_io(revents);
    });
  }

  Task<void> wait_drained(std::size_t max_pending, TimePoint deadline) override {
    while (fd_ >= 0 && out_.size() > max_pending) {
      bool woke = co_await drained_.wait_until(deadline);
      if (!woke && out_.size() > max_pending) fail(Errc::timeout, "peer is not reading");
    }
    if (was_reset()) fail(Errc::connection_reset, "connection dropped: " + reset_reason());
  }

 protected:
  void transmit(ByteView data) override {
    out_.insert(out_.end(), data.begin(), data.end());
    flush();
  }

  void transmit_close() override {
    close_pending_ = true;
    flush();
  }

  void transmit_reset(const std::string&) override {
    if (fd_ < 0) return;
    linger lg{1, 0};
    ::setsockopt(fd_, SOL_SOCKET, SO_LINGER, &lg, sizeof lg);
    shutdown_fd();
  }

 private:
  void shutdown_fd() {
    if (fd_ < 0) return;
    ex_.unwatch(fd_);
    ::close(fd_);
    fd_ = -1;
    out_.clear();
    drained_.notify();
  }

  void update_interest() {
    if (fd_ < 0) return;
    std::weak_ptr<TcpConnection> weak = shared_from_this();
    short events = static_cast<short>(read_open_ ? POLLIN : 0);
    if (!out_.empty()) events |= POLLOUT;
    ex_.watch(fd_, events, [weak](short revents) {
      if (auto self = weak.lock()) self->on_io(revents);
    });
  }

  void flush() {
    while (fd_ >= 0 && !out_.empty()) {
      ssize_t n = ::send(fd_, out_.data(), out_.size(), MSG_NOSIGNAL);
      if (n > 0) {
        out_.erase(out_.begin(), out_.begin() + n);
        continue;
      }
      if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) break;
      if (n < 0 && errno == EINTR) continue;
      fail_io(errno_text("send"));
      return;
    }
    if (fd_ < 0) return;
    if (out_.empty()) {
      drained_.notify();
      if (close_pending_ && !shut_wr_) {
        ::shutdown(fd_, SHUT_WR);
        shut_wr_ = true;
      }
      if (shut_wr_ && !read_open_) {
        shutdown_fd();
        return;
      }
    }
    update_interest();
  }

  void on_io(short revents) {
    auto keep = shared_from_this();
    if (revents & POLLOUT) flush();
    if (fd_ >= 0 && (revents & (POLLIN | POLLHUP | POLLERR))) read_available();
  }

  void read_available() {
    std::uint8_t buf[64 * 1024];
    for (;;) {
      if (fd_ < 0) return;
      ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
      if (n > 0) {
        deliver(ByteView(buf, static_cast<std::size_t>(n)));
        continue;
      }
      if (n == 0) {
        read_open_ = false;
        deliver_eof();
        if (shut_wr_) {
          shutdown_fd();
        } else {
          update_interest();
        }
        return;
      }
      if (errno == EAGAIN || errno == EWOULDBLOCK) return;
      if (errno == EINTR) continue;
      fail_io(errno_text("recv"));
      return;
    }
  }

  void fail_io(const std::string& why) {
    shutdown_fd();
    deliver_reset(why);
  }

  HostExecutor& ex_;
  int fd_;
  Bytes out_;
  bool close_pending_ = false;
  bool shut_wr_ = false;
  bool read_open_ = true;
  Signal drained_;
};

}  // namespace

TimePoint HostExecutor::now() const {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

Executor::TimerId HostExecutor::schedule_at(TimePoint when, std::function<void()> fn) {
  TimerId id = next_id_++;
  timers_.emplace(std::make_pair(when, id), std::move(fn));
  index_.emplace(id, when);
  return id;
}

void HostExecutor::cancel(TimerId id) {
  auto it = index_.find(id);
  if (it == index_.end()) return;
  timers_.erase({it->second, id});
  index_.erase(it);
}

void HostExecutor::at_tick_end(std::function<void()> fn) { tick_end_.push_back(std::move(fn)); }

void HostExecutor::watch(int fd, short events, IoCallback cb) { watches_[fd] = Watch{events, std::move(cb)}; }

void HostExecutor::unwatch(int fd) { watches_.erase(fd); }

void HostExecutor::install_signal_handlers() {
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
}

void HostExecutor::run_due() {
  for (;;) {
    TimePoint t = now();
    bool ran = false;
    while (!timers_.empty() && timers_.begin()->first.first <= t) {
      auto node = timers_.extract(timers_.begin());
      index_.erase(node.key().second);
      node.mapped()();
      ran = true;
    }
    if (!tick_end_.empty()) {
      auto batch = std::move(tick_end_);
      tick_end_.clear();
      for (auto& fn : batch) fn();
      ran = true;
    }
    if (!ran) return;
  }
}

void HostExecutor::run_until(const std::function<bool()>& done) {
  for (;;) {
    run_due();
    if (done()) return;
    if (g_interrupted.exchange(false) && on_interrupt_) {
      on_interrupt_();
      continue;
    }
    if (timers_.empty() && watches_.empty()) return;

    Millis timeout = 100;
    if (!timers_.empty()) {
      timeout = std::clamp<Millis>(timers_.begin()->first.first - now(), 0, 100);
    }
    std::vector<pollfd> fds;
    fds.reserve(watches_.size());
    for (const auto& [fd, w] : watches_) fds.push_back(pollfd{fd, w.events, 0});
    int rc = ::poll(fds.data(), fds.size(), static_cast<int>(timeout));
    if (rc < 0) {
      if (errno == EINTR) continue;
      fail(Errc::io_error, errno_text("poll"));
    }
    for (const auto& p : fds) {
      if (p.revents == 0) continue;
      auto it = watches_.find(p.fd);
      if (it == watches_.end()) continue;
      auto cb = it->second.cb;
      cb(p.revents);
    }
  }
}

TcpTransport::TcpTransport(HostExecutor& ex, RandomSource& rng, TcpOptions options)
    : ex_(ex), options_(std::move(options)) {
  self_.peer_id = PeerId::random(rng);
  socklen_t len = 0;
  auto addr = resolve(options_.bind_host + ":" + std::to_string(options_.bind_port), len);
  listen_fd_ = ::socket(addr.ss_family, SOCK_STREAM, 0);
  if (listen_fd_ < 0) fail(Errc::io_error, errno_text("socket"));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), len) < 0) {
    ::close(listen_fd_);
    fail(Errc::io_error, errno_text("bind"));
  }
  if (::listen(listen_fd_, 16) < 0) {
    ::close(listen_fd_);
    fail(Errc::io_error, errno_text("listen"));
  }
  set_nonblocking(listen_fd_);
  sockaddr_storage bound{};
  socklen_t blen = sizeof bound;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &blen);
  self_.endpoint = render_endpoint(bound);
}

TcpTransport::~TcpTransport() {
  if (listen_fd_ >= 0) {
    ex_.unwatch(listen_fd_);
    ::close(listen_fd_);
  }
}

void TcpTransport::listen(AcceptHandler on_accept) {
  on_accept_ = std::move(on_accept);
  ex_.watch(listen_fd_, POLLIN, [this](short) { accept_ready(); });
}

void TcpTransport::stop_listening() {
  on_accept_ = nullptr;
  ex_.unwatch(listen_fd_);
}

void TcpTransport::accept_ready() {
  for (;;) {
    sockaddr_storage peer{};
    socklen_t len = sizeof peer;
    int fd = ::accept(listen_fd_, reinterpret_cast<sockaddr*>(&peer), &len);
    if (fd < 0) return;
    set_nonblocking(fd);
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    auto conn = std::make_shared<TcpConnection>(ex_, fd);
    conn->set_remote(PeerAddress{PeerId{}, render_endpoint(peer)});
    conn->start();
    if (on_accept_) {
      on_accept_(conn);
    } else {
      conn->abort("not accepting");
    }
  }
}

Task<std::shared_ptr<Connection>> TcpTransport::dial(PeerAddress to, DialOptions) {
  socklen_t len = 0;
  auto addr = resolve(to.endpoint, len);
  int fd = ::socket(addr.ss_family, SOCK_STREAM, 0);
  if (fd < 0) fail(Errc::dial_error, errno_text("socket"));
  set_nonblocking(fd);
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  int rc = ::connect(fd, reinterpret_cast<sockaddr*>(&addr), len);
  if (rc < 0 && errno != EINPROGRESS) {
    std::string why = errno_text("connect");
    ::close(fd);
    fail(Errc::dial_error, why);
  }
  if (rc < 0) {
    auto ready = std::make_shared<Signal>(ex_);
    ex_.watch(fd, POLLOUT, [ready](short) { ready->notify(); });
    bool woke = co_await ready->wait_until(deadline_after(ex_.now(), options_.connect_timeout));
    ex_.unwatch(fd);
    int err = 0;
    socklen_t elen = sizeof err;
    ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &elen);
    if (!woke || err != 0) {
      ::close(fd);
      fail(Errc::dial_error, "connect to " + to.endpoint + ": " + (woke ? std::strerror(err) : "timed out"));
    }
  }
  auto conn = std::make_shared<TcpConnection>(ex_, fd);
  conn->set_remote(to);
  conn->start();
  co_return std::shared_ptr<Connection>(conn);
}

DirectoryBackend::DirectoryBackend(Executor& ex, std::filesystem::path root, DiscoveryScope scope,
                                   PollingOptions polling)
    : DiscoveryBackend(ex, scope, scope == DiscoveryScope::global ? "dir-global" : "dir-local", polling),
      root_(std::move(root)) {
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (ec) fail(Errc::unavailable, "cannot create rendezvous directory " + root_.string() + ": " + ec.message());
}

void DirectoryBackend::store(const ProviderRecord& record) {
  auto dir = root_ / to_hex(record.content_key);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(Errc::unavailable, "cannot write rendezvous record: " + ec.message());
  nlohmann::json j;
  j["peer"] = record.provider.peer_id.hex();
  j["endpoint"] = record.provider.endpoint;
  j["published_at"] = record.published_at;
  j["ttl"] = record.ttl;
  auto final_path = dir / (record.provider.peer_id.hex() + ".json");
  auto tmp = dir / ("." + record.provider.peer_id.hex() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << j.dump();
    if (!out) fail(Errc::unavailable, "cannot write rendezvous record " + tmp.string());
  }
  std::filesystem::rename(tmp, final_path, ec);
  if (ec) fail(Errc::unavailable, "cannot publish rendezvous record: " + ec.message());
}

std::vector<PeerAddress> DirectoryBackend::load(const ContentKey& key, std::int64_t now_seconds) {
  std::map<PeerId, PeerAddress> found;
  auto dir = root_ / to_hex(key);
  std::error_code ec;
  for (std::filesystem::directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec)) {
    const auto& path = it->path();
    if (path.extension() != ".json") continue;
    try {
      std::ifstream in(path);
      auto j = nlohmann::json::parse(in);
      ProviderRecord r;
      r.content_key = key;
      r.provider.peer_id = PeerId::from_hex(j.at("peer").get<std::string>());
      r.provider.endpoint = j.at("endpoint").get<std::string>();
      r.published_at = j.at("published_at").get<std::int64_t>();
      r.ttl = j.at("ttl").get<std::int64_t>();
      if (!r.live_at(now_seconds)) {
        std::filesystem::remove(path, ec);
        continue;
      }
      found.emplace(r.provider.peer_id, r.provider);
    } catch (const std::exception&) {
      // Half-written or foreign file; ignore it.
    }
  }
  std::vector<PeerAddress> out;
  for (auto& [_, addr] : found) out.push_back(addr);
  return out;
}

}  // namespace pcp::host
