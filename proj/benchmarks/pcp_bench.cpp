// Microbenchmarks for the hot paths: passphrase/key derivation, the PAKE,
// record sealing and a whole simulated session.

#include <benchmark/benchmark.h>

#include <cstdlib>
#include <filesystem>

#include "pcp/auth.hpp"
#include "pcp/passphrase.hpp"
#include "pcp/rendezvous.hpp"
#include "pcp/scenario.hpp"

namespace {

using namespace pcp;

void BM_DiscoveryKey(benchmark::State& state) {
  const auto p = parse_passphrase("acid-zoo-abandon-able");
  std::int64_t now = 1617283200;
  for (auto _ : state) {
    auto key = discovery_key(channel_id(p), truncate_to_slot(now++));
    benchmark::DoNotOptimize(key);
  }
}
BENCHMARK(BM_DiscoveryKey);

void BM_PakeGenerator(benchmark::State& state) {
  PakeSecret secret{"acid-zoo-abandon-able", "/pcp/1617283200/15"};
  for (auto _ : state) benchmark::DoNotOptimize(pake_generator(secret));
}
BENCHMARK(BM_PakeGenerator);

// Both roles of the exchange plus confirmation, on a two-node simnet.
Task<void> side(std::shared_ptr<Connection> conn, Role role, std::uint64_t seed, bool& done) {
  SeededRandom rng(seed);
  PakeSecret secret{"acid-zoo-abandon-able", "/pcp/1617283200/15"};
  HandshakeOptions opts{role, {}, {}, kNever};
  auto hs = co_await pake_handshake(*conn, secret, opts, rng);
  auto channel = co_await confirm_key(conn, std::move(hs), kNever);
  done = channel != nullptr;
}

void BM_Handshake(benchmark::State& state) {
  std::uint64_t seed = 1;
  for (auto _ : state) {
    sim::SimNetwork net{sim::SimConfig{}};
    auto a = net.spawn_node("a", {"lan0"});
    auto b = net.spawn_node("b", {"lan0"});
    std::shared_ptr<Connection> accepted;
    b->listen([&](std::shared_ptr<Connection> c) { accepted = std::move(c); });
    auto dialed = block_on(net.executor(), a->dial(b->self()));
    net.executor().run_until([&] { return accepted != nullptr; });
    bool da = false, db = false;
    spawn(side(dialed, Role::initiator, seed++, da));
    spawn(side(accepted, Role::responder, seed++, db));
    net.executor().run_until([&] { return da && db; });
    if (!(da && db)) state.SkipWithError("handshake did not complete");
  }
}
BENCHMARK(BM_Handshake)->Unit(benchmark::kMicrosecond);

void BM_SealOpen(benchmark::State& state) {
  SessionKeys keys;
  for (std::size_t i = 0; i < keys.send.size(); ++i) keys.send[i] = static_cast<std::uint8_t>(i);
  SessionKeys peer = keys;
  peer.role = Role::responder;
  std::swap(peer.send, peer.recv);
  SecureChannel tx(nullptr, keys);
  SecureChannel rx(nullptr, peer);
  const Bytes chunk(static_cast<std::size_t>(state.range(0)), 0x5a);
  for (auto _ : state) {
    auto plain = rx.open(tx.seal(chunk));
    benchmark::DoNotOptimize(plain);
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_SealOpen)->Arg(4096)->Arg(65536);

void BM_SimulatedSession(benchmark::State& state) {
  char tmpl[] = "/tmp/pcp-bench-XXXXXX";
  const std::filesystem::path root = mkdtemp(tmpl);
  scenario::Scenario sc;
  scenario::Participant alice;
  alice.name = "alice";
  alice.file_size = static_cast<std::uint64_t>(state.range(0));
  scenario::Participant bob;
  bob.name = "bob";
  bob.role = scenario::ParticipantRole::receiver;
  bob.peer = "alice";
  sc.participants = {alice, bob};
  int run = 0;
  for (auto _ : state) {
    sc.net.seed = static_cast<std::uint64_t>(run);
    auto result = scenario::run(sc, root / std::to_string(run++));
    if (!result.at("bob").received_digest) state.SkipWithError("transfer failed");
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
  std::filesystem::remove_all(root);
}
BENCHMARK(BM_SimulatedSession)->Arg(1 << 20)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
