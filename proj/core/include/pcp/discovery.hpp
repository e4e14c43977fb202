#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pcp/async.hpp"
#include "pcp/peer.hpp"
#include "pcp/rendezvous.hpp"

namespace pcp {

inline constexpr std::int64_t kDefaultRecordTtlSeconds = 86'400;

enum class DiscoveryScope { global, local_network };

std::string_view to_string(DiscoveryScope scope);

struct ProviderRecord {
  ContentKey content_key{};
  PeerAddress provider;
  std::int64_t published_at = 0;  // unix seconds
  std::int64_t ttl = kDefaultRecordTtlSeconds;

  bool live_at(std::int64_t now_seconds) const { return published_at + ttl > now_seconds; }
};

/// Incremental, single-consumer stream of providers. Each peer id is
/// yielded at most once. Ends at its deadline, on cancel(), or when the
/// backend stops.
class ProviderStream {
 public:
  explicit ProviderStream(Executor& ex) : results_(ex), wake_(ex) {}

  /// Next provider, or nullopt once the stream has ended.
  Task<std::optional<PeerAddress>> next() { return results_.pop(); }
  void cancel();
  bool cancelled() const { return cancelled_; }
  bool finished() const { return results_.closed(); }

  /// Producer side. offer() returns false for an already-seen peer.
  bool offer(const PeerAddress& addr);
  void finish() { results_.close(); }
  Signal& wake() { return wake_; }

 private:
  AsyncQueue<PeerAddress> results_;
  Signal wake_;
  std::set<PeerId> seen_;
  bool cancelled_ = false;
};

struct PollingOptions {
  Millis query_interval = 500;
};

/// A discovery backend: global (DHT-style provider records) or
/// local-network (mDNS-style advertisements). The operations of the other
/// family throw Error(invalid_argument).
class DiscoveryBackend : public std::enable_shared_from_this<DiscoveryBackend> {
 public:
  DiscoveryBackend(Executor& ex, DiscoveryScope scope, std::string name, PollingOptions polling);
  virtual ~DiscoveryBackend() = default;

  DiscoveryScope scope() const { return scope_; }
  const std::string& name() const { return name_; }
  Executor& executor() const { return ex_; }
  bool running() const { return running_; }
  void stop() { running_ = false; }

  /// Publishes a provider record; re-providing refreshes published_at.
  Task<void> provide(ContentKey key, PeerAddress self, std::int64_t ttl_seconds = kDefaultRecordTtlSeconds);
  /// Polls the record store every query interval until the deadline.
  std::shared_ptr<ProviderStream> find_providers(const ContentKey& key, TimePoint deadline);

  Task<void> local_advertise(ContentKey key, PeerAddress self);
  std::shared_ptr<ProviderStream> local_query(const ContentKey& key, TimePoint deadline);

 protected:
  /// Delay of one request/response exchange with the backing store.
  virtual Millis sample_latency() = 0;
  /// False when this operation is lost (loss injection, partitioned node).
  virtual bool reachable() { return true; }
  virtual void store(const ProviderRecord& record) = 0;
  virtual std::vector<PeerAddress> load(const ContentKey& key, std::int64_t now_seconds) = 0;

 private:
  void require(DiscoveryScope wanted, const char* op) const;
  Task<void> publish(ContentKey key, PeerAddress self, std::int64_t ttl);
  std::shared_ptr<ProviderStream> query(const ContentKey& key, TimePoint deadline);
  static Task<void> poll_loop(std::shared_ptr<DiscoveryBackend> self, std::shared_ptr<ProviderStream> stream,
                              ContentKey key, TimePoint deadline);

  Executor& ex_;
  DiscoveryScope scope_;
  std::string name_;
  PollingOptions polling_;
  bool running_ = true;
};

/// Announces through whichever operation the backend's scope supports.
Task<void> announce(std::shared_ptr<DiscoveryBackend> backend, ContentKey key, PeerAddress self,
                    std::int64_t ttl_seconds);
/// Queries through whichever operation the backend's scope supports.
std::shared_ptr<ProviderStream> lookup(DiscoveryBackend& backend, const ContentKey& key, TimePoint deadline);

}  // namespace pcp
