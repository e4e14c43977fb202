#pragma once

// Full send and receive lifecycles.
//
// sender:   publish under the current slot -> accept dials -> PAKE + key
//           confirmation per connection -> first confirmed peer gets the
//           manifest -> stream
// receiver: derive keys for the current and previous slot -> query every
//           backend -> dial providers as they appear -> first confirmed
//           connection wins, the rest are dropped -> prompt -> receive
//
// Confirmations that land in the same executor tick are ranked by peer id.

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pcp/async.hpp"
#include "pcp/connection.hpp"
#include "pcp/discovery.hpp"
#include "pcp/passphrase.hpp"
#include "pcp/random.hpp"
#include "pcp/rendezvous.hpp"
#include "pcp/trace.hpp"
#include "pcp/transfer.hpp"

namespace pcp {

struct SessionConfig {
  std::size_t word_count = Passphrase::kDefaultWords;
  std::int64_t slot_width = kSlotWidthSeconds;
  Millis discovery_deadline = 120'000;
  Millis handshake_timeout = kDefaultHandshakeTimeout;
  Millis decision_timeout = kDefaultDecisionTimeout;
  Millis transfer_idle_timeout = kDefaultIdleTimeout;
  std::int64_t record_ttl = kDefaultRecordTtlSeconds;
  /// Sender publishes again at every slot boundary until a peer confirms.
  /// Off gives publish-once behaviour.
  bool republish_on_rollover = true;
  std::uint32_t chunk_size = kDefaultChunkSize;
  DialOptions dial;
};

enum class Phase { discovering, authenticating, awaiting_confirmation, transferring, done, failed };

std::string_view to_string(Phase phase);

/// Phase only moves forward; failed is reachable from anywhere.
class SessionState {
 public:
  Phase phase() const { return phase_; }
  bool finished() const { return phase_ == Phase::done || phase_ == Phase::failed; }
  /// No-op when already at `to`; throws std::logic_error on a backward move.
  void advance(Phase to);

 private:
  Phase phase_ = Phase::discovering;
};

enum class SessionStatus { completed, rejected, aborted, timeout, not_found, auth_exhausted, io_error, interrupted };

std::string_view to_string(SessionStatus status);

struct SessionOutcome {
  SessionStatus status = SessionStatus::aborted;
  Phase final_phase = Phase::failed;
  TransferOutcome transfer;
  std::optional<TransferManifest> manifest;
  /// Winning peer, if any connection confirmed.
  std::optional<PeerId> peer;
  /// Receiver: name of the backend that first reported the winner.
  std::string via;
  std::size_t providers_found = 0;
  std::size_t auth_failures = 0;
  std::string detail;
};

/// Cooperative cancellation for a running session (SIGINT in the CLI).
class StopSource {
 public:
  void request_stop();
  bool stop_requested() const { return stopped_; }
  std::uint64_t subscribe(std::function<void()> fn);
  void unsubscribe(std::uint64_t id);

 private:
  bool stopped_ = false;
  std::uint64_t next_ = 1;
  std::map<std::uint64_t, std::function<void()>> callbacks_;
};

/// Everything a session runs on. Backends must all share the executor.
struct SessionEnv {
  Executor& ex;
  Transport& transport;
  std::vector<std::shared_ptr<DiscoveryBackend>> backends;
  RandomSource& rng;
  Trace* trace = nullptr;
  /// Node label in trace records.
  std::string node = "local";
  StopSource* stop = nullptr;
};

struct SenderOptions {
  /// Use this passphrase instead of generating one.
  std::optional<Passphrase> passphrase;
  /// Called once with the passphrase before anything is published.
  std::function<void(const Passphrase&)> on_passphrase;
  ProgressFn progress;
};

struct ReceiverOptions {
  std::filesystem::path dest_dir = ".";
  ProgressFn progress;
};

/// Throws Error(invalid_argument) when env has no backends.
Task<SessionOutcome> run_sender(SessionConfig config, SessionEnv env, std::filesystem::path file,
                                SenderOptions options);

/// Throws Error(parse_error) for a malformed passphrase and
/// Error(invalid_argument) when env has no backends.
Task<SessionOutcome> run_receiver(SessionConfig config, SessionEnv env, std::string passphrase,
                                  DecisionSource& decisions, ReceiverOptions options);

// Plain forwarding overloads rather than default arguments: g++ 11 destroys
// a defaulted class-type argument twice when the call sits in a co_await.
inline Task<SessionOutcome> run_sender(SessionConfig config, SessionEnv env, std::filesystem::path file) {
  return run_sender(std::move(config), std::move(env), std::move(file), SenderOptions{});
}
inline Task<SessionOutcome> run_receiver(SessionConfig config, SessionEnv env, std::string passphrase,
                                         DecisionSource& decisions) {
  return run_receiver(std::move(config), std::move(env), std::move(passphrase), decisions, ReceiverOptions{});
}

}  // namespace pcp
