#pragma once

// Real-clock, real-socket counterparts of the simulator: a poll(2) event
// loop, TCP connections, and a provider-record store kept in a shared
// directory (rendezvous between processes on one host or a shared mount).

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>

#include "pcp/async.hpp"
#include "pcp/connection.hpp"
#include "pcp/discovery.hpp"
#include "pcp/random.hpp"

namespace pcp::host {

class HostExecutor final : public Executor {
 public:
  using IoCallback = std::function<void(short revents)>;

  HostExecutor() = default;

  TimePoint now() const override;
  TimerId schedule_at(TimePoint when, std::function<void()> fn) override;
  void cancel(TimerId id) override;
  void at_tick_end(std::function<void()> fn) override;
  void run_until(const std::function<bool()>& done) override;

  /// Registers (or replaces) interest in fd. events is a poll(2) mask.
  void watch(int fd, short events, IoCallback cb);
  void unwatch(int fd);

  /// Called from the loop after SIGINT/SIGTERM (see install_signal_handlers).
  void on_interrupt(std::function<void()> fn) { on_interrupt_ = std::move(fn); }
  static void install_signal_handlers();

 private:
  void run_due();

  TimerId next_id_ = 1;
  std::map<std::pair<TimePoint, TimerId>, std::function<void()>> timers_;
  std::map<TimerId, TimePoint> index_;
  std::vector<std::function<void()>> tick_end_;
  struct Watch {
    short events;
    IoCallback cb;
  };
  std::map<int, Watch> watches_;
  std::function<void()> on_interrupt_;
};

struct TcpOptions {
  std::string bind_host = "127.0.0.1";
  std::uint16_t bind_port = 0;
  Millis connect_timeout = 5'000;
};

class TcpTransport final : public Transport {
 public:
  TcpTransport(HostExecutor& ex, RandomSource& rng, TcpOptions options = {});
  ~TcpTransport() override;

  Executor& executor() override { return ex_; }
  const PeerAddress& self() const override { return self_; }
  void listen(AcceptHandler on_accept) override;
  void stop_listening() override;
  Task<std::shared_ptr<Connection>> dial(PeerAddress to, DialOptions options = {}) override;

 private:
  void accept_ready();

  HostExecutor& ex_;
  TcpOptions options_;
  int listen_fd_ = -1;
  PeerAddress self_;
  AcceptHandler on_accept_;
};

/// Provider records as small JSON files under <root>/<content key hex>/.
class DirectoryBackend final : public DiscoveryBackend {
 public:
  DirectoryBackend(Executor& ex, std::filesystem::path root, DiscoveryScope scope = DiscoveryScope::global,
                   PollingOptions polling = {});

  const std::filesystem::path& root() const { return root_; }

 protected:
  Millis sample_latency() override { return 0; }
  void store(const ProviderRecord& record) override;
  std::vector<PeerAddress> load(const ContentKey& key, std::int64_t now_seconds) override;

 private:
  std::filesystem::path root_;
};

}  // namespace pcp::host
