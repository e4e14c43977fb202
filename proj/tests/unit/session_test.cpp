#include <gtest/gtest.h>

#include "pcp/error.hpp"
#include "pcp/scenario.hpp"
#include "pcp/session.hpp"
#include "pcp/simnet.hpp"
#include "temp_dir.hpp"

namespace pcp {
namespace {

using scenario::Participant;
using scenario::ParticipantRole;
using testing::TempDir;

TEST(SessionState, ForwardOnly) {
  SessionState s;
  EXPECT_EQ(s.phase(), Phase::discovering);
  s.advance(Phase::authenticating);
  s.advance(Phase::authenticating);
  s.advance(Phase::transferring);
  EXPECT_THROW(s.advance(Phase::awaiting_confirmation), std::logic_error);
  s.advance(Phase::done);
  EXPECT_TRUE(s.finished());

  SessionState f;
  f.advance(Phase::failed);
  EXPECT_TRUE(f.finished());
  EXPECT_EQ(to_string(Phase::awaiting_confirmation), "awaiting-confirmation");
}

TEST(StopSource, CallbacksRunOnceAndUnsubscribe) {
  StopSource stop;
  int a = 0, b = 0;
  stop.subscribe([&] { ++a; });
  auto id = stop.subscribe([&] { ++b; });
  stop.unsubscribe(id);
  stop.request_stop();
  stop.request_stop();
  EXPECT_TRUE(stop.stop_requested());
  EXPECT_EQ(a, 1);
  EXPECT_EQ(b, 0);
}

Participant sender(std::string name, std::uint64_t size, Millis start = 0) {
  Participant p;
  p.name = std::move(name);
  p.role = ParticipantRole::sender;
  p.file_size = size;
  p.start_ms = start;
  return p;
}

Participant receiver(std::string name, std::string peer, Millis start = 0) {
  Participant p;
  p.name = std::move(name);
  p.role = ParticipantRole::receiver;
  p.peer = std::move(peer);
  p.start_ms = start;
  return p;
}

scenario::Scenario pair(std::uint64_t size = 4096, Millis receiver_start = 0) {
  scenario::Scenario s;
  s.participants = {sender("alice", size), receiver("bob", "alice", receiver_start)};
  return s;
}

TEST(Session, HappyPathOutcomeFields) {
  TempDir dir;
  auto r = scenario::run(pair(20'000), dir.path());
  const auto& a = r.at("alice");
  const auto& b = r.at("bob");
  EXPECT_EQ(a.outcome.status, SessionStatus::completed) << a.outcome.detail;
  EXPECT_EQ(b.outcome.status, SessionStatus::completed) << b.outcome.detail;
  EXPECT_EQ(a.outcome.final_phase, Phase::done);
  EXPECT_EQ(b.outcome.peer, a.peer_id);
  EXPECT_EQ(a.outcome.peer, b.peer_id);
  ASSERT_TRUE(b.outcome.manifest);
  EXPECT_EQ(b.outcome.manifest->content_digest(), a.source_digest);
  EXPECT_EQ(b.received_digest, a.source_digest);
  EXPECT_EQ(b.inbox_files, 1u);
  EXPECT_EQ(b.outcome.auth_failures, 0u);
  EXPECT_GE(b.outcome.providers_found, 1u);
}

TEST(Session, NoReceiverTimesOut) {
  TempDir dir;
  scenario::Scenario s;
  s.session.discovery_deadline = 10'000;
  s.participants = {sender("alice", 10)};
  auto r = scenario::run(s, dir.path());
  EXPECT_EQ(r.at("alice").outcome.status, SessionStatus::timeout);
  EXPECT_EQ(r.at("alice").outcome.final_phase, Phase::failed);
  EXPECT_EQ(r.finished_at - r.started_at, 10'000);
}

TEST(Session, NoSenderIsNotFound) {
  TempDir dir;
  scenario::Scenario s;
  s.session.discovery_deadline = 5'000;
  Participant r = receiver("bob", "");
  r.passphrase = "acid-zoo-abandon-able";
  s.participants = {r};
  auto res = scenario::run(s, dir.path());
  EXPECT_EQ(res.at("bob").outcome.status, SessionStatus::not_found);
  EXPECT_EQ(res.at("bob").inbox_files, 0u);
}

TEST(Session, WrongWordExhaustsAuth) {
  TempDir dir;
  auto s = pair();
  s.session.discovery_deadline = 8'000;
  s.participants[1].perturb_word = 2;
  auto r = scenario::run(s, dir.path());
  EXPECT_EQ(r.at("bob").outcome.status, SessionStatus::auth_exhausted);
  EXPECT_EQ(r.at("bob").outcome.auth_failures, 1u);
  EXPECT_EQ(r.at("alice").outcome.status, SessionStatus::timeout);
  EXPECT_EQ(r.app_bytes_to_receiver + r.app_bytes_to_sender, 0u);
  EXPECT_FALSE(r.at("bob").outcome.manifest);
}

TEST(Session, PerturbedChannelWordIsNotFound) {
  TempDir dir;
  auto s = pair();
  s.session.discovery_deadline = 5'000;
  s.participants[1].perturb_word = 0;
  auto r = scenario::run(s, dir.path());
  EXPECT_EQ(r.at("bob").outcome.status, SessionStatus::not_found);
}

TEST(Session, DeclineReachesBothSides) {
  TempDir dir;
  auto s = pair();
  s.participants[1].decision = ScriptedDecision::Mode::reject;
  auto r = scenario::run(s, dir.path());
  EXPECT_EQ(r.at("alice").outcome.status, SessionStatus::rejected);
  EXPECT_EQ(r.at("bob").outcome.status, SessionStatus::rejected);
  EXPECT_EQ(r.at("bob").inbox_files, 0u);
}

TEST(Session, SilentReceiverTimesOutDecision) {
  TempDir dir;
  auto s = pair();
  s.session.decision_timeout = 3'000;
  s.participants[1].decision = ScriptedDecision::Mode::silent;
  auto r = scenario::run(s, dir.path());
  EXPECT_EQ(r.at("alice").outcome.status, SessionStatus::rejected);
  EXPECT_EQ(r.at("bob").outcome.status, SessionStatus::rejected);
}

TEST(Session, ReceiverFindsPreviousSlotAfterBoundary) {
  TempDir dir;
  auto s = pair(1000, 40'000);
  s.net.start_time = 1617283480;  // 20 s before a slot boundary
  s.session.republish_on_rollover = false;
  s.participants[1].backends = {"dht"};
  auto r = scenario::run(s, dir.path());
  EXPECT_EQ(r.at("bob").outcome.status, SessionStatus::completed) << r.at("bob").outcome.detail;
}

TEST(Session, RepublishBridgesTwoSlots) {
  TempDir dir;
  auto base = pair(1000, 400'000);
  base.net.start_time = 1617283480;
  base.session.discovery_deadline = 900'000;
  base.participants[1].backends = {"dht"};
  base.participants[1].links = {"lan0"};

  auto off = base;
  off.session.republish_on_rollover = false;
  off.session.discovery_deadline = 420'000;
  auto r_off = scenario::run(off, dir / "off");
  EXPECT_EQ(r_off.at("bob").outcome.status, SessionStatus::not_found);

  auto r_on = scenario::run(base, dir / "on");
  EXPECT_EQ(r_on.at("bob").outcome.status, SessionStatus::completed) << r_on.at("bob").outcome.detail;
}

TEST(Session, TwoSendersSameSecretOnlyOneWins) {
  TempDir dir;
  scenario::Scenario s;
  auto s1 = sender("s1", 3000);
  auto s2 = sender("s2", 3000);
  s1.passphrase = s2.passphrase = "acid-zoo-abandon-able";
  s.session.discovery_deadline = 20'000;
  s.participants = {s1, s2, receiver("r", "s1", 1000)};
  auto r = scenario::run(s, dir.path());
  EXPECT_EQ(r.at("r").outcome.status, SessionStatus::completed);
  int completed = (r.at("s1").outcome.status == SessionStatus::completed) +
                  (r.at("s2").outcome.status == SessionStatus::completed);
  EXPECT_EQ(completed, 1);
  EXPECT_EQ(r.at("r").inbox_files, 1u);
}

Task<SessionOutcome> interrupted_sender(sim::SimNetwork& net, StopSource& stop, std::filesystem::path file) {
  auto node = net.spawn_node("alice", {"lan0"});
  SessionEnv env{net.executor(), *node, {net.dht_backend(node)}, net.rng(), &net.trace(), "alice", &stop};
  SessionConfig config;
  co_return co_await run_sender(config, env, file);
}

TEST(Session, StopRequestInterrupts) {
  TempDir dir;
  testing::write_file(dir / "f.bin", Bytes(10, 1));
  sim::SimNetwork net({});
  StopSource stop;
  net.executor().schedule_at(net.executor().now() + 1500, [&] { stop.request_stop(); });
  auto out = block_on(net.executor(), interrupted_sender(net, stop, dir / "f.bin"));
  EXPECT_EQ(out.status, SessionStatus::interrupted);
  EXPECT_EQ(out.final_phase, Phase::failed);
}

Task<SessionOutcome> sender_without_backends(sim::SimNetwork& net) {
  auto node = net.spawn_node("alice", {"lan0"});
  SessionEnv env{net.executor(), *node, {}, net.rng()};
  SessionConfig config;
  std::filesystem::path file = "/nonexistent";
  co_return co_await run_sender(config, env, file);
}

Task<SessionOutcome> receiver_with(sim::SimNetwork& net, std::string phrase) {
  auto node = net.spawn_node("bob", {"lan0"});
  SessionEnv env{net.executor(), *node, {net.dht_backend(node)}, net.rng()};
  ScriptedDecision d(net.executor(), ScriptedDecision::Mode::accept);
  SessionConfig config;
  co_return co_await run_receiver(config, env, phrase, d);
}

TEST(Session, ArgumentErrors) {
  auto code = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::io_error;
  };
  sim::SimNetwork n1({}), n2({});
  EXPECT_EQ(code([&] { block_on(n1.executor(), sender_without_backends(n1)); }), Errc::invalid_argument);
  EXPECT_EQ(code([&] { block_on(n2.executor(), receiver_with(n2, "acid-notaword")); }), Errc::parse_error);
}

TEST(Session, MissingSourceFileIsIoError) {
  TempDir dir;
  sim::SimNetwork net({});
  StopSource stop;
  auto out = block_on(net.executor(), interrupted_sender(net, stop, dir / "missing.bin"));
  EXPECT_EQ(out.status, SessionStatus::io_error);
}

}  // namespace
}  // namespace pcp
