#include "pcp/session.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "pcp/auth.hpp"
#include "pcp/error.hpp"

namespace pcp {

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::discovering:
      return "discovering";
    case Phase::authenticating:
      return "authenticating";
    case Phase::awaiting_confirmation:
      return "awaiting-confirmation";
    case Phase::transferring:
      return "transferring";
    case Phase::done:
      return "done";
    case Phase::failed:
      return "failed";
  }
  return "?";
}

void SessionState::advance(Phase to) {
  if (to == phase_) return;
  if (finished()) throw std::logic_error("session already finished");
  if (to != Phase::failed && static_cast<int>(to) < static_cast<int>(phase_)) {
    throw std::logic_error("phase cannot move from " + std::string(to_string(phase_)) + " back to " +
                           std::string(to_string(to)));
  }
  phase_ = to;
}

std::string_view to_string(SessionStatus status) {
  switch (status) {
    case SessionStatus::completed:
      return "completed";
    case SessionStatus::rejected:
      return "rejected";
    case SessionStatus::aborted:
      return "aborted";
    case SessionStatus::timeout:
      return "timeout";
    case SessionStatus::not_found:
      return "not-found";
    case SessionStatus::auth_exhausted:
      return "auth-exhausted";
    case SessionStatus::io_error:
      return "io-error";
    case SessionStatus::interrupted:
      return "interrupted";
  }
  return "?";
}

void StopSource::request_stop() {
  if (stopped_) return;
  stopped_ = true;
  auto callbacks = std::move(callbacks_);
  callbacks_.clear();
  for (auto& [id, fn] : callbacks) fn();
}

std::uint64_t StopSource::subscribe(std::function<void()> fn) {
  auto id = next_++;
  if (stopped_) {
    fn();
    return id;
  }
  callbacks_.emplace(id, std::move(fn));
  return id;
}

void StopSource::unsubscribe(std::uint64_t id) { callbacks_.erase(id); }

namespace {

struct Candidate {
  PeerId peer;
  std::shared_ptr<SecureChannel> chan;
  std::string via;
};

/// State shared by both roles: candidate connections, single-winner
/// arbitration and cancellation.
class SessionCore : public std::enable_shared_from_this<SessionCore> {
 public:
  SessionCore(SessionConfig c, SessionEnv e) : config(c), env(std::move(e)), wake(env.ex) {
    if (env.backends.empty()) fail(Errc::invalid_argument, "a session needs at least one discovery backend");
  }
  virtual ~SessionCore() = default;

  SessionConfig config;
  SessionEnv env;
  SessionState state;
  Signal wake;
  std::optional<Candidate> winner;
  std::vector<Candidate> confirmed;
  std::map<std::uint64_t, std::shared_ptr<Connection>> live;
  std::uint64_t next_live = 1;
  bool decision_pending = false;
  bool closing = false;
  bool interrupted = false;
  std::size_t auth_failures = 0;
  std::uint64_t stop_subscription = 0;

  void emit(std::string_view event, std::string detail = {}) {
    if (env.trace) env.trace->emit(env.node, event, std::move(detail));
  }

  void advance(Phase p) {
    if (state.phase() == p || state.finished()) return;
    if (p != Phase::failed && static_cast<int>(p) < static_cast<int>(state.phase())) return;
    state.advance(p);
    emit("session.phase", std::string(to_string(p)));
  }

  bool accepting() const { return !winner && !closing && !interrupted; }

  void watch_stop() {
    if (!env.stop) return;
    std::weak_ptr<SessionCore> weak = shared_from_this();
    stop_subscription = env.stop->subscribe([weak] {
      auto self = weak.lock();
      if (!self) return;
      self->interrupted = true;
      self->emit("session.interrupt");
      if (self->winner) self->winner->chan->abort("interrupted");
      self->cancel_losers();
      self->wake.notify();
    });
  }

  std::uint64_t track(std::shared_ptr<Connection> conn) {
    auto id = next_live++;
    live.emplace(id, std::move(conn));
    return id;
  }

  void untrack(std::uint64_t id) { live.erase(id); }

  void on_auth_error(const PeerId& peer, const Error& e) {
    if (e.code() == Errc::authentication_failure) ++auth_failures;
    emit("auth.failed", "peer=" + peer.short_hex() + " code=" + std::string(to_string(e.code())));
  }

  void on_confirmed(Candidate c) {
    if (!accepting()) {
      c.chan->abort("session already has a peer");
      return;
    }
    emit("auth.confirmed", "peer=" + c.peer.short_hex());
    confirmed.push_back(std::move(c));
    if (decision_pending) return;
    decision_pending = true;
    // Everything confirmed within this instant competes; the lowest peer id wins.
    auto self = shared_from_this();
    env.ex.at_tick_end([self] { self->decide(); });
  }

  void decide() {
    decision_pending = false;
    auto pool = std::move(confirmed);
    confirmed.clear();
    if (!accepting() || pool.empty()) {
      for (auto& c : pool) c.chan->abort("session already has a peer");
      return;
    }
    auto best = std::min_element(pool.begin(), pool.end(),
                                 [](const Candidate& a, const Candidate& b) { return a.peer < b.peer; });
    winner = *best;
    for (auto& c : pool) {
      if (c.chan == winner->chan) continue;
      emit("session.tiebreak", "loser=" + c.peer.short_hex());
      c.chan->abort("lost tie-break");
    }
    emit("session.winner", "peer=" + winner->peer.short_hex() + (winner->via.empty() ? "" : " via=" + winner->via));
    cancel_losers();
    wake.notify();
  }

  /// Drops every candidate except the winner and stops finding new ones.
  virtual void cancel_losers() {
    const Connection* keep = winner ? winner->chan->connection().get() : nullptr;
    auto doomed = std::move(live);
    live.clear();
    for (auto& [id, conn] : doomed) {
      if (conn.get() == keep) {
        live.emplace(id, conn);
        continue;
      }
      conn->abort("session settled on another peer");
    }
  }

  /// Waits for a winner, an interrupt or the discovery deadline.
  Task<void> await_winner() {
    TimePoint deadline = deadline_after(env.ex.now(), config.discovery_deadline);
    while (!winner && !interrupted && env.ex.now() < deadline) {
      co_await wake.wait_until(deadline);
    }
  }

  SessionOutcome finish(SessionOutcome out) {
    closing = true;
    cancel_losers();
    if (env.stop && stop_subscription) env.stop->unsubscribe(stop_subscription);
    if (interrupted && out.status != SessionStatus::completed) out.status = SessionStatus::interrupted;
    advance(out.status == SessionStatus::completed ? Phase::done : Phase::failed);
    out.final_phase = state.phase();
    out.auth_failures = auth_failures;
    if (winner) out.peer = winner->peer;
    emit("session.end", std::string(to_string(out.status)) + (out.detail.empty() ? "" : ": " + out.detail));
    return out;
  }
};

class SenderCore final : public SessionCore {
 public:
  SenderCore(SessionConfig c, SessionEnv e, Passphrase p)
      : SessionCore(c, std::move(e)), pass(std::move(p)), republish_wake(env.ex) {}

  Passphrase pass;
  std::vector<std::string> bindings;
  Signal republish_wake;

  void cancel_losers() override {
    SessionCore::cancel_losers();
    env.transport.stop_listening();
    republish_wake.notify();
  }

  void publish(const TimeSlot& slot) {
    auto key = discovery_key(channel_id(pass), slot);
    bindings.push_back(key.id_string);
    emit("session.publish", key.id_string);
    for (const auto& backend : env.backends) {
      auto self = shared_from_this();
      spawn(announce(backend, key.content_key, env.transport.self(), config.record_ttl),
            [self, name = backend->name()](std::exception_ptr ep) {
              try {
                std::rethrow_exception(ep);
              } catch (const std::exception& e) {
                self->emit("publish.failed", name + ": " + e.what());
              }
            });
    }
  }

  static Task<void> republish_loop(std::shared_ptr<SenderCore> self, TimeSlot slot) {
    auto& ex = self->env.ex;
    for (;;) {
      TimePoint boundary = slot.end() * 1000;
      while (self->accepting() && ex.now() < boundary) co_await self->republish_wake.wait_until(boundary);
      if (!self->accepting()) co_return;
      slot = truncate_to_slot(ex.now_seconds(), self->config.slot_width);
      self->publish(slot);
    }
  }

  static Task<void> handle_inbound(std::shared_ptr<SenderCore> self, std::shared_ptr<Connection> conn) {
    if (!self->accepting()) {
      conn->abort("session already has a peer");
      co_return;
    }
    auto id = self->track(conn);
    self->advance(Phase::authenticating);
    auto& ex = self->env.ex;
    TimePoint deadline = deadline_after(ex.now(), self->config.handshake_timeout);
    HandshakeOptions opts{Role::responder, self->env.transport.self().peer_id, self->bindings, deadline};
    PeerId claimed;
    try {
      // Named rather than temporary: GCC 11 destroys temporaries in a co_await operand twice.
      PakeSecret secret{self->pass.render(), self->bindings.back()};
      auto hs = co_await pake_handshake(*conn, secret, opts, self->env.rng);
      claimed = hs.initiator_peer;
      auto chan = co_await confirm_key(conn, std::move(hs), deadline);
      self->on_confirmed(Candidate{claimed, std::move(chan), "inbound"});
      co_return;
    } catch (const Error& e) {
      self->on_auth_error(claimed, e);
    }
    self->untrack(id);
  }
};

class ReceiverCore final : public SessionCore {
 public:
  ReceiverCore(SessionConfig c, SessionEnv e, Passphrase p) : SessionCore(c, std::move(e)), pass(std::move(p)) {}

  Passphrase pass;
  std::vector<std::shared_ptr<ProviderStream>> streams;
  std::set<PeerId> seen;
  std::size_t providers_found = 0;
  std::size_t dial_failures = 0;

  void cancel_losers() override {
    SessionCore::cancel_losers();
    for (auto& s : streams) s->cancel();
  }

  void on_provider(const PeerAddress& addr, const DiscoveryKey& key, const std::string& via) {
    if (!accepting() || !seen.insert(addr.peer_id).second) return;
    ++providers_found;
    emit("discovery.found", "peer=" + addr.peer_id.short_hex() + " via=" + via + " slot=" +
                                std::to_string(key.slot.start()));
    auto self = std::static_pointer_cast<ReceiverCore>(shared_from_this());
    spawn(dial_candidate(self, addr, key, via));
  }

  static Task<void> drain(std::shared_ptr<ReceiverCore> self, std::shared_ptr<ProviderStream> stream,
                          DiscoveryKey key, std::string via) {
    for (;;) {
      auto addr = co_await stream->next();
      if (!addr) break;
      self->on_provider(*addr, key, via);
    }
  }

  static Task<void> dial_candidate(std::shared_ptr<ReceiverCore> self, PeerAddress addr, DiscoveryKey key,
                                   std::string via) {
    self->advance(Phase::authenticating);
    std::shared_ptr<Connection> conn;
    std::string dial_error;
    try {
      conn = co_await self->env.transport.dial(addr, self->config.dial);
    } catch (const Error& e) {
      dial_error = e.what();
    }
    if (!conn) {
      ++self->dial_failures;
      self->emit("dial.failed", "peer=" + addr.peer_id.short_hex() + " " + dial_error);
      co_return;
    }
    if (!self->accepting()) {
      conn->abort("session already has a peer");
      co_return;
    }
    auto id = self->track(conn);
    TimePoint deadline = deadline_after(self->env.ex.now(), self->config.handshake_timeout);
    HandshakeOptions opts{Role::initiator, self->env.transport.self().peer_id, {}, deadline};
    try {
      PakeSecret secret{self->pass.render(), key.id_string};
      auto hs = co_await pake_handshake(*conn, secret, opts, self->env.rng);
      auto chan = co_await confirm_key(conn, std::move(hs), deadline);
      self->on_confirmed(Candidate{addr.peer_id, std::move(chan), via});
      co_return;
    } catch (const Error& e) {
      self->on_auth_error(addr.peer_id, e);
    }
    self->untrack(id);
  }
};

SessionOutcome status_only(SessionStatus status, std::string detail) {
  SessionOutcome out;
  out.status = status;
  out.detail = std::move(detail);
  return out;
}

SessionStatus from_transfer(TransferStatus s) {
  switch (s) {
    case TransferStatus::completed:
      return SessionStatus::completed;
    case TransferStatus::rejected:
      return SessionStatus::rejected;
    case TransferStatus::aborted:
      return SessionStatus::aborted;
  }
  return SessionStatus::aborted;
}

}  // namespace

Task<SessionOutcome> run_sender(SessionConfig config, SessionEnv env, std::filesystem::path file,
                                SenderOptions options) {
  if (env.backends.empty()) fail(Errc::invalid_argument, "a session needs at least one discovery backend");
  std::optional<TransferManifest> manifest;
  std::string io_failure;
  try {
    manifest = make_manifest(file, config.chunk_size);
  } catch (const Error& e) {
    io_failure = e.what();
  }
  if (!manifest) {
    if (env.trace) env.trace->emit(env.node, "session.end", "io-error: " + io_failure);
    co_return status_only(SessionStatus::io_error, io_failure);
  }

  Passphrase pass = options.passphrase ? *options.passphrase : generate_passphrase(config.word_count, env.rng);
  auto core = std::make_shared<SenderCore>(config, env, pass);
  core->watch_stop();
  if (options.on_passphrase) options.on_passphrase(pass);
  core->emit("session.start", "role=sender size=" + std::to_string(manifest->size()));

  std::weak_ptr<SenderCore> weak = core;
  env.transport.listen([weak](std::shared_ptr<Connection> conn) {
    auto self = weak.lock();
    if (!self) {
      conn->abort("no session");
      return;
    }
    spawn(SenderCore::handle_inbound(self, std::move(conn)));
  });
  auto slot = truncate_to_slot(env.ex.now_seconds(), config.slot_width);
  core->publish(slot);
  if (config.republish_on_rollover) spawn(SenderCore::republish_loop(core, slot));

  co_await core->await_winner();
  SessionOutcome out;
  out.manifest = manifest;
  if (!core->winner) {
    out.status = SessionStatus::timeout;
    out.detail = core->auth_failures ? "no peer confirmed the passphrase before the deadline"
                                     : "no peer connected before the deadline";
    co_return core->finish(std::move(out));
  }

  auto chan = core->winner->chan;
  core->advance(Phase::awaiting_confirmation);
  core->emit("manifest.sent", "peer=" + core->winner->peer.hex() + " name=" + manifest->filename());
  std::optional<Decision> decision;
  std::string failure;
  try {
    decision = co_await send_manifest(
        *chan, *manifest, deadline_after(env.ex.now(), config.decision_timeout + config.handshake_timeout));
  } catch (const Error& e) {
    failure = e.what();
  }
  if (!decision) {
    out.status = SessionStatus::aborted;
    out.detail = failure;
    co_return core->finish(std::move(out));
  }
  if (*decision == Decision::reject) {
    chan->close();
    out.status = SessionStatus::rejected;
    out.transfer.status = TransferStatus::rejected;
    out.detail = "receiver declined the file";
    co_return core->finish(std::move(out));
  }

  core->advance(Phase::transferring);
  StreamOptions stream{config.transfer_idle_timeout, options.progress};
  out.transfer = co_await stream_file(*chan, file, *manifest, stream);
  out.status = from_transfer(out.transfer.status);
  out.detail = out.transfer.detail;
  co_return core->finish(std::move(out));
}

Task<SessionOutcome> run_receiver(SessionConfig config, SessionEnv env, std::string passphrase,
                                  DecisionSource& decisions, ReceiverOptions options) {
  Passphrase pass = parse_passphrase(passphrase);
  auto core = std::make_shared<ReceiverCore>(config, env, pass);
  core->watch_stop();

  auto& ex = env.ex;
  auto channel = channel_id(pass);
  auto current = truncate_to_slot(ex.now_seconds(), config.slot_width);
  std::vector<DiscoveryKey> keys{discovery_key(channel, current)};
  if (current.start() >= current.width()) keys.push_back(discovery_key(channel, previous_slot(current)));
  core->emit("session.start", "role=receiver slots=" + std::to_string(keys.size()));

  TimePoint deadline = deadline_after(ex.now(), config.discovery_deadline);
  for (const auto& backend : env.backends) {
    for (const auto& key : keys) {
      auto stream = lookup(*backend, key.content_key, deadline);
      core->streams.push_back(stream);
      spawn(ReceiverCore::drain(core, stream, key, backend->name()));
    }
  }

  co_await core->await_winner();
  SessionOutcome out;
  if (!core->winner) {
    out.providers_found = core->providers_found;
    if (core->auth_failures > 0) {
      out.status = SessionStatus::auth_exhausted;
      out.detail = std::to_string(core->auth_failures) + " peer(s) failed key confirmation";
    } else {
      out.status = SessionStatus::not_found;
      out.detail = core->providers_found ? "found peers but none completed the handshake"
                                         : "no peer found for this passphrase";
    }
    co_return core->finish(std::move(out));
  }

  auto chan = core->winner->chan;
  out.via = core->winner->via;
  out.providers_found = core->providers_found;
  core->advance(Phase::awaiting_confirmation);
  std::optional<TransferManifest> manifest;
  std::string failure;
  try {
    manifest = co_await receive_manifest(
        *chan, deadline_after(ex.now(), config.handshake_timeout + config.transfer_idle_timeout));
  } catch (const Error& e) {
    failure = e.what();
  }
  if (!manifest) {
    out.status = SessionStatus::aborted;
    out.detail = failure;
    co_return core->finish(std::move(out));
  }
  out.manifest = manifest;
  core->emit("manifest.received", "peer=" + core->winner->peer.hex() + " name=" + manifest->filename());

  std::optional<Decision> decision;
  try {
    decision = co_await await_confirmation(*chan, *manifest, decisions,
                                           deadline_after(ex.now(), config.decision_timeout));
  } catch (const Error& e) {
    failure = e.what();
  }
  if (!decision) {
    out.status = SessionStatus::aborted;
    out.detail = failure;
    co_return core->finish(std::move(out));
  }
  if (*decision == Decision::reject) {
    chan->close();
    out.status = SessionStatus::rejected;
    out.transfer.status = TransferStatus::rejected;
    out.detail = "declined";
    co_return core->finish(std::move(out));
  }

  core->advance(Phase::transferring);
  StreamOptions stream{config.transfer_idle_timeout, options.progress};
  out.transfer = co_await receive_file(*chan, *manifest, options.dest_dir, stream);
  out.status = from_transfer(out.transfer.status);
  out.detail = out.transfer.detail;
  co_return core->finish(std::move(out));
}

}  // namespace pcp
