#pragma once

// Declarative simnet runs: a set of senders and receivers with start times,
// links, scripted decisions and injected faults, executed on one virtual
// clock. Used by `pcp simulate` and the test suites.
//
// JSON form (every field optional unless noted):
//
//   {
//     "net":     {"seed": 1, "start_time": 1617283473,
//                 "links": [{"id": "lan0", "latency": [1, 5], "loss": 0, "bandwidth": 12500}],
//                 "wan_latency": [20, 80], "wan_bandwidth": 2500, "dht_latency": [200, 800],
//                 "dht_query_interval": 500, "dht_loss": 0,
//                 "local_latency": [5, 5], "local_query_interval": 500,
//                 "connect_timeout": 3000},
//     "session": {"word_count": 4, "slot_width": 300, "discovery_deadline": 120000,
//                 "handshake_timeout": 10000, "decision_timeout": 60000,
//                 "transfer_idle_timeout": 30000, "republish": true, "chunk_size": 65536},
//     "participants": [
//       {"name": "alice", "role": "sender", "links": ["lan0"], "file_size": 1048576,
//        "channel_word": "acid", "start_ms": 0},
//       {"name": "bob", "role": "receiver", "peer": "alice", "decision": "accept",
//        "perturb_word": 3, "backends": ["dht", "local"], "relay": false}
//     ],
//     "events":  [{"at": 2000, "partition": "lan0", "on": true}],
//     "tamper":  {"direction": "to_receiver", "offset": 17}
//   }
//
// A config file groups scenarios as {"net": .., "session": .., "scenarios": {name: scenario}};
// a scenario's own "net" and "session" are merged over the file-level ones.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pcp/session.hpp"
#include "pcp/simnet.hpp"

namespace pcp::scenario {

enum class ParticipantRole { sender, receiver };

struct Participant {
  std::string name;
  ParticipantRole role = ParticipantRole::sender;
  std::vector<std::string> links{"lan0"};
  bool behind_relay = false;
  /// Receivers dial through a relay hop.
  bool relay = false;
  Millis start_ms = 0;
  /// Sender: size of the generated payload file.
  std::uint64_t file_size = 0;
  std::string file_name = "payload.bin";
  /// Sender: fixed passphrase. Receiver: passphrase to type (else the peer's).
  std::optional<std::string> passphrase;
  /// Sender: force the first word, so several senders share a channel.
  std::optional<std::string> channel_word;
  /// Receiver: sender whose passphrase it was given.
  std::string peer;
  /// Receiver: replace this word with a different one.
  std::optional<std::size_t> perturb_word;
  ScriptedDecision::Mode decision = ScriptedDecision::Mode::accept;
  Millis think_time = 0;
  std::vector<std::string> backends{"dht", "local"};
};

struct PartitionEvent {
  Millis at = 0;
  std::string link;
  bool on = true;
};

enum class TapDirection { to_receiver, to_sender };

/// Flip one bit of the n-th byte of application-data frames (headers
/// included) flowing in one direction.
struct TamperSpec {
  TapDirection direction = TapDirection::to_receiver;
  std::uint64_t offset = 0;
  std::uint8_t mask = 0x01;
};

struct Scenario {
  sim::SimConfig net;
  SessionConfig session;
  std::vector<Participant> participants;
  std::vector<PartitionEvent> events;
  std::optional<TamperSpec> tamper;
};

struct ParticipantResult {
  std::string name;
  ParticipantRole role;
  PeerId peer_id;
  std::string passphrase;
  SessionOutcome outcome;
  /// Sender: the generated file and its digest.
  std::filesystem::path file;
  crypto::Digest source_digest{};
  /// Receiver: digest of the saved file, when there is one.
  std::optional<crypto::Digest> received_digest;
  /// Receiver: regular files left in its destination directory.
  std::size_t inbox_files = 0;
};

struct ScenarioResult {
  std::vector<ParticipantResult> participants;
  std::vector<TraceEvent> events;
  std::string trace_jsonl;
  crypto::Digest trace_hash{};
  TimePoint started_at = 0;
  TimePoint finished_at = 0;
  /// Clock after leftover activity (cancelled polls, closing pipes) ran out.
  TimePoint settled_at = 0;
  bool tamper_applied = false;
  /// Application-data wire bytes observed per direction (sender to receiver, back).
  std::uint64_t app_bytes_to_receiver = 0;
  std::uint64_t app_bytes_to_sender = 0;

  /// Throws std::out_of_range for an unknown name.
  const ParticipantResult& at(std::string_view name) const;
};

/// Runs to completion on a fresh network. Files go under workdir/<name>/.
/// Throws Error(invalid_argument) for an inconsistent scenario.
ScenarioResult run(const Scenario& scenario, const std::filesystem::path& workdir);

/// Parses one scenario object. Throws Error(parse_error).
Scenario parse_scenario(std::string_view json_text);
/// Picks a named scenario out of a config file. Throws Error(parse_error),
/// or Error(invalid_argument) when the name is missing.
Scenario load_scenario(std::string_view config_text, const std::string& name);
std::vector<std::string> scenario_names(std::string_view config_text);

/// Host-mode settings for `pcp send/receive --sim-config`: records go to a
/// shared directory and peers talk TCP over loopback.
struct LoopbackConfig {
  std::filesystem::path store_dir;
  Millis query_interval = 200;
  SessionConfig session;
};

/// nullopt when the config has no "loopback" section.
std::optional<LoopbackConfig> load_loopback(std::string_view config_text);

}  // namespace pcp::scenario
