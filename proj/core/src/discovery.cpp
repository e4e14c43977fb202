#include "pcp/discovery.hpp"

#include "pcp/error.hpp"

namespace pcp {

std::string_view to_string(DiscoveryScope scope) {
  return scope == DiscoveryScope::global ? "global" : "local";
}

void ProviderStream::cancel() {
  if (cancelled_) return;
  cancelled_ = true;
  wake_.notify();
  results_.close();
}

bool ProviderStream::offer(const PeerAddress& addr) {
  if (cancelled_ || results_.closed()) return false;
  if (!seen_.insert(addr.peer_id).second) return false;
  results_.push(addr);
  return true;
}

DiscoveryBackend::DiscoveryBackend(Executor& ex, DiscoveryScope scope, std::string name, PollingOptions polling)
    : ex_(ex), scope_(scope), name_(std::move(name)), polling_(polling) {
  if (polling_.query_interval <= 0) fail(Errc::invalid_argument, "query interval must be positive");
}

void DiscoveryBackend::require(DiscoveryScope wanted, const char* op) const {
  if (scope_ != wanted) {
    fail(Errc::invalid_argument, std::string(op) + " is not supported by " + std::string(to_string(scope_)) +
                                     " backend " + name_);
  }
  if (!running_) fail(Errc::unavailable, "discovery backend " + name_ + " is stopped");
}

Task<void> DiscoveryBackend::provide(ContentKey key, PeerAddress self, std::int64_t ttl_seconds) {
  require(DiscoveryScope::global, "provide");
  co_await publish(key, std::move(self), ttl_seconds);
}

Task<void> DiscoveryBackend::local_advertise(ContentKey key, PeerAddress self) {
  require(DiscoveryScope::local_network, "local_advertise");
  co_await publish(key, std::move(self), kDefaultRecordTtlSeconds);
}

std::shared_ptr<ProviderStream> DiscoveryBackend::find_providers(const ContentKey& key, TimePoint deadline) {
  require(DiscoveryScope::global, "find_providers");
  return query(key, deadline);
}

std::shared_ptr<ProviderStream> DiscoveryBackend::local_query(const ContentKey& key, TimePoint deadline) {
  require(DiscoveryScope::local_network, "local_query");
  return query(key, deadline);
}

Task<void> DiscoveryBackend::publish(ContentKey key, PeerAddress self, std::int64_t ttl) {
  if (ttl <= 0) fail(Errc::invalid_argument, "record ttl must be positive");
  auto keep_alive = shared_from_this();
  co_await sleep_for(ex_, sample_latency());
  if (!running_) fail(Errc::unavailable, "discovery backend " + name_ + " stopped during provide");
  if (!reachable()) co_return;  // lost on the way; the caller cannot tell
  store(ProviderRecord{key, std::move(self), ex_.now_seconds(), ttl});
}

std::shared_ptr<ProviderStream> DiscoveryBackend::query(const ContentKey& key, TimePoint deadline) {
  auto stream = std::make_shared<ProviderStream>(ex_);
  spawn(poll_loop(shared_from_this(), stream, key, deadline));
  return stream;
}

Task<void> DiscoveryBackend::poll_loop(std::shared_ptr<DiscoveryBackend> self, std::shared_ptr<ProviderStream> stream,
                                       ContentKey key, TimePoint deadline) {
  auto& ex = self->ex_;
  while (!stream->cancelled() && self->running_ && ex.now() < deadline) {
    TimePoint answer_at = deadline_after(ex.now(), self->sample_latency());
    if (answer_at >= deadline) {
      co_await stream->wake().wait_until(deadline);
      break;
    }
    co_await stream->wake().wait_until(answer_at);
    if (stream->cancelled() || !self->running_) break;
    if (self->reachable()) {
      for (const auto& addr : self->load(key, ex.now_seconds())) stream->offer(addr);
    }
    TimePoint next = deadline_after(ex.now(), self->polling_.query_interval);
    if (next >= deadline) {
      // Sleep out the remainder so the stream ends exactly at the deadline.
      co_await stream->wake().wait_until(deadline);
      break;
    }
    co_await stream->wake().wait_until(next);
  }
  stream->finish();
}

Task<void> announce(std::shared_ptr<DiscoveryBackend> backend, ContentKey key, PeerAddress self,
                    std::int64_t ttl_seconds) {
  if (backend->scope() == DiscoveryScope::global) {
    co_await backend->provide(key, std::move(self), ttl_seconds);
  } else {
    co_await backend->local_advertise(key, std::move(self));
  }
}

std::shared_ptr<ProviderStream> lookup(DiscoveryBackend& backend, const ContentKey& key, TimePoint deadline) {
  if (backend.scope() == DiscoveryScope::global) return backend.find_providers(key, deadline);
  return backend.local_query(key, deadline);
}

}  // namespace pcp
