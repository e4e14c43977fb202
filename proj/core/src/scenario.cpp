#include "pcp/scenario.hpp"

#include <fstream>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "pcp/error.hpp"
#include "pcp/wordlist.hpp"

namespace pcp::scenario {

namespace fs = std::filesystem;
using nlohmann::json;

const ParticipantResult& ScenarioResult::at(std::string_view name) const {
  for (const auto& p : participants) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("no participant named " + std::string(name));
}

namespace {

crypto::Digest digest_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  crypto::Sha256 h;
  Bytes buf(1 << 16);
  while (in) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    h.update(ByteView(buf.data(), static_cast<std::size_t>(in.gcount())));
  }
  return h.finish();
}

void write_random_file(const fs::path& path, std::uint64_t size, std::uint64_t seed) {
  SeededRandom rng(seed);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io_error, "cannot create " + path.string());
  Bytes buf(1 << 16);
  while (size > 0) {
    auto n = static_cast<std::size_t>(std::min<std::uint64_t>(size, buf.size()));
    rng.fill(std::span<std::uint8_t>(buf.data(), n));
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(n));
    size -= n;
  }
  if (!out) fail(Errc::io_error, "write failed on " + path.string());
}

std::size_t count_files(const fs::path& dir) {
  std::error_code ec;
  std::size_t n = 0;
  for (fs::directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec)) {
    if (it->is_regular_file()) ++n;
  }
  return n;
}

/// Follows application-data frames through one direction of one stream.
struct FrameCursor {
  Bytes header;
  std::vector<std::size_t> header_pos;  // positions in the current buffer, or npos
  std::uint64_t remaining = 0;
  bool in_app = false;
};

class Tamperer {
 public:
  Tamperer(const Scenario& s) : spec_(s.tamper) {
    for (const auto& p : s.participants) senders_[p.name] = p.role == ParticipantRole::sender;
  }

  void operator()(const sim::TapContext& ctx, Bytes& data) {
    auto& cur = cursors_[{ctx.connection_id, ctx.from}];
    bool to_receiver = senders_[ctx.from];
    std::uint64_t& counter = to_receiver ? to_receiver_ : to_sender_;
    bool armed = spec_ && !applied_ && (spec_->direction == TapDirection::to_receiver) == to_receiver;
    for (auto& pos : cur.header_pos) pos = kStale;

    auto visit_app_byte = [&](std::size_t pos) {
      if (armed && !applied_ && counter == spec_->offset && pos != kStale) {
        data[pos] ^= spec_->mask;
        applied_ = true;
      }
      ++counter;
    };

    for (std::size_t i = 0; i < data.size();) {
      if (cur.remaining == 0) {
        cur.header.push_back(data[i]);
        cur.header_pos.push_back(i);
        ++i;
        if (cur.header.size() == 6) {
          cur.in_app = cur.header[1] == 0x10;
          cur.remaining = get_u32_be(ByteView(cur.header).subspan(2));
          if (cur.in_app) {
            for (auto p : cur.header_pos) visit_app_byte(p);
          }
          cur.header.clear();
          cur.header_pos.clear();
        }
        continue;
      }
      auto n = static_cast<std::size_t>(std::min<std::uint64_t>(cur.remaining, data.size() - i));
      if (cur.in_app) {
        for (std::size_t k = 0; k < n; ++k) visit_app_byte(i + k);
      }
      cur.remaining -= n;
      i += n;
    }
  }

  bool applied() const { return applied_; }
  std::uint64_t to_receiver() const { return to_receiver_; }
  std::uint64_t to_sender() const { return to_sender_; }

 private:
  static constexpr std::size_t kStale = static_cast<std::size_t>(-1);
  std::optional<TamperSpec> spec_;
  std::map<std::string, bool> senders_;
  std::map<std::pair<std::uint64_t, std::string>, FrameCursor> cursors_;
  bool applied_ = false;
  std::uint64_t to_receiver_ = 0;
  std::uint64_t to_sender_ = 0;
};

Passphrase perturb(const Passphrase& p, std::size_t index, RandomSource& rng) {
  auto words = p.words();
  if (index >= words.size()) fail(Errc::invalid_argument, "perturb_word index out of range");
  const auto& list = Wordlist::english();
  auto old_index = list.index_of(words[index]).value();
  auto shift = 1 + rng.uniform(Wordlist::kSize - 1);
  words[index] = std::string(list.word(static_cast<std::size_t>((old_index + shift) % Wordlist::kSize)));
  return Passphrase(std::move(words));
}

struct Runner {
  const Scenario& scenario;
  sim::SimNetwork net;
  std::vector<std::shared_ptr<sim::SimNode>> nodes;
  std::vector<std::unique_ptr<ScriptedDecision>> decisions;
  std::vector<ParticipantResult> results;
  std::size_t done = 0;

  Runner(const Scenario& s) : scenario(s), net(s.net) {}

  std::vector<std::shared_ptr<DiscoveryBackend>> backends_for(const Participant& p,
                                                              const std::shared_ptr<sim::SimNode>& node) {
    std::vector<std::shared_ptr<DiscoveryBackend>> out;
    for (const auto& b : p.backends) {
      if (b == "dht") {
        out.push_back(net.dht_backend(node));
      } else if (b == "local" || b == "mdns") {
        out.push_back(net.local_backend(node));
      } else {
        fail(Errc::invalid_argument, "unknown backend \"" + b + "\"");
      }
    }
    return out;
  }

  static Task<void> participant(Runner& r, std::size_t i, fs::path dir) {
    const Participant& p = r.scenario.participants[i];
    auto& ex = r.net.executor();
    co_await sleep_until(ex, ex.now() + p.start_ms);
    auto node = r.nodes[i];
    SessionConfig config = r.scenario.session;
    config.dial.relay = p.relay;
    SessionEnv env{ex, *node, r.backends_for(p, node), r.net.rng(), &r.net.trace(), p.name, nullptr};
    auto& result = r.results[i];
    if (p.role == ParticipantRole::sender) {
      SenderOptions opts;
      opts.passphrase = parse_passphrase(result.passphrase);
      result.outcome = co_await run_sender(config, env, result.file, opts);
    } else {
      ReceiverOptions opts;
      opts.dest_dir = dir / "inbox";
      result.outcome = co_await run_receiver(config, env, result.passphrase, *r.decisions[i], opts);
    }
    ++r.done;
  }
};

}  // namespace

ScenarioResult run(const Scenario& scenario, const fs::path& workdir) {
  Runner r(scenario);
  const auto& ps = scenario.participants;
  std::map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!by_name.emplace(ps[i].name, i).second) fail(Errc::invalid_argument, "duplicate participant " + ps[i].name);
  }

  Tamperer tap(scenario);
  r.net.set_tap([&tap](const sim::TapContext& ctx, Bytes& data) { tap(ctx, data); });

  r.results.resize(ps.size());
  r.decisions.resize(ps.size());
  // Senders first: receivers copy their passphrases.
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const auto& p = ps[i];
      bool is_sender = p.role == ParticipantRole::sender;
      if (is_sender != (pass == 0)) continue;
      auto& res = r.results[i];
      res.name = p.name;
      res.role = p.role;
      fs::path dir = workdir / p.name;
      fs::remove_all(dir);
      fs::create_directories(dir);
      if (is_sender) {
        Passphrase phrase = p.passphrase ? parse_passphrase(*p.passphrase)
                                         : generate_passphrase(scenario.session.word_count, r.net.rng());
        if (p.channel_word) {
          auto words = phrase.words();
          words[0] = *p.channel_word;
          phrase = Passphrase(std::move(words));
        }
        res.passphrase = phrase.render();
        res.file = dir / p.file_name;
        write_random_file(res.file, p.file_size, scenario.net.seed * 0x9e3779b97f4a7c15ULL + i + 1);
        res.source_digest = digest_file(res.file);
      } else {
        std::string text;
        if (p.passphrase) {
          text = *p.passphrase;
        } else {
          auto it = by_name.find(p.peer);
          if (it == by_name.end() || ps[it->second].role != ParticipantRole::sender) {
            fail(Errc::invalid_argument, "receiver " + p.name + " names no sender as its peer");
          }
          text = r.results[it->second].passphrase;
        }
        if (p.perturb_word) text = perturb(parse_passphrase(text), *p.perturb_word, r.net.rng()).render();
        res.passphrase = text;
        r.decisions[i] = std::make_unique<ScriptedDecision>(r.net.executor(), p.decision, p.think_time);
      }
    }
  }
  for (std::size_t i = 0; i < ps.size(); ++i) {
    r.nodes.push_back(r.net.spawn_node(ps[i].name, ps[i].links, sim::NodeOptions{ps[i].behind_relay}));
    r.results[i].peer_id = r.nodes.back()->self().peer_id;
  }

  auto& ex = r.net.executor();
  TimePoint start = ex.now();
  for (const auto& ev : scenario.events) {
    ex.schedule_at(start + ev.at, [&net = r.net, ev] { net.partition(ev.link, ev.on); });
  }
  for (std::size_t i = 0; i < ps.size(); ++i) {
    spawn(Runner::participant(r, i, workdir / ps[i].name), [&r, i](std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        r.results[i].outcome.status = SessionStatus::aborted;
        r.results[i].outcome.detail = e.what();
      }
      ++r.done;
    });
  }
  ex.run_until([&] { return r.done == ps.size(); });
  if (r.done != ps.size()) throw std::logic_error("scenario stalled before every participant finished");
  TimePoint finished = ex.now();
  // Let cancelled activity wind down so nothing is left suspended.
  for (int steps = 0; steps < 1'000'000 && ex.run_one(); ++steps) {
  }

  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& res = r.results[i];
    if (res.role != ParticipantRole::receiver) continue;
    const auto& saved = res.outcome.transfer.saved_as;
    if (!saved.empty() && fs::exists(saved)) res.received_digest = digest_file(saved);
    res.inbox_files = count_files(workdir / ps[i].name / "inbox");
  }

  ScenarioResult out;
  out.started_at = start;
  out.finished_at = finished;
  out.settled_at = ex.now();
  out.participants = std::move(r.results);
  out.events = r.net.trace().events();
  out.trace_jsonl = r.net.trace().to_jsonl();
  out.trace_hash = r.net.trace().hash();
  out.tamper_applied = tap.applied();
  out.app_bytes_to_receiver = tap.to_receiver();
  out.app_bytes_to_sender = tap.to_sender();
  return out;
}

namespace {

sim::LatencyRange latency_from(const json& j) {
  if (j.is_number()) return {j.get<Millis>(), j.get<Millis>()};
  if (j.is_array() && j.size() == 2) return {j[0].get<Millis>(), j[1].get<Millis>()};
  throw std::invalid_argument("latency must be a number or [min, max]");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

sim::SimConfig net_from(const json& j) {
  sim::SimConfig c;
  if (!j.is_object()) return c;
  read(j, "seed", c.seed);
  read(j, "start_time", c.start_time);
  if (auto it = j.find("links"); it != j.end()) {
    c.links.clear();
    for (const auto& l : *it) {
      sim::LinkConfig link;
      link.id = l.at("id").get<std::string>();
      if (auto lat = l.find("latency"); lat != l.end()) link.latency = latency_from(*lat);
      read(l, "loss", link.loss);
      read(l, "bandwidth", link.bandwidth);
      c.links.push_back(link);
    }
  }
  if (auto it = j.find("wan_latency"); it != j.end()) c.wan_latency = latency_from(*it);
  read(j, "wan_bandwidth", c.wan_bandwidth);
  if (auto it = j.find("dht_latency"); it != j.end()) c.dht_latency = latency_from(*it);
  if (auto it = j.find("local_latency"); it != j.end()) c.local_latency = latency_from(*it);
  read(j, "dht_query_interval", c.dht_query_interval);
  read(j, "dht_loss", c.dht_loss);
  read(j, "local_query_interval", c.local_query_interval);
  read(j, "connect_timeout", c.connect_timeout);
  return c;
}

SessionConfig session_from(const json& j) {
  SessionConfig c;
  if (!j.is_object()) return c;
  read(j, "word_count", c.word_count);
  read(j, "slot_width", c.slot_width);
  read(j, "discovery_deadline", c.discovery_deadline);
  read(j, "handshake_timeout", c.handshake_timeout);
  read(j, "decision_timeout", c.decision_timeout);
  read(j, "transfer_idle_timeout", c.transfer_idle_timeout);
  read(j, "record_ttl", c.record_ttl);
  read(j, "republish", c.republish_on_rollover);
  read(j, "chunk_size", c.chunk_size);
  return c;
}

ScriptedDecision::Mode decision_from(const std::string& s) {
  if (s == "accept" || s == "yes") return ScriptedDecision::Mode::accept;
  if (s == "reject" || s == "no") return ScriptedDecision::Mode::reject;
  if (s == "silent") return ScriptedDecision::Mode::silent;
  throw std::invalid_argument("decision must be accept, reject or silent");
}

Participant participant_from(const json& j) {
  Participant p;
  p.name = j.at("name").get<std::string>();
  auto role = j.at("role").get<std::string>();
  if (role == "sender") {
    p.role = ParticipantRole::sender;
  } else if (role == "receiver") {
    p.role = ParticipantRole::receiver;
  } else {
    throw std::invalid_argument("role must be sender or receiver");
  }
  read(j, "links", p.links);
  read(j, "behind_relay", p.behind_relay);
  read(j, "relay", p.relay);
  read(j, "start_ms", p.start_ms);
  read(j, "file_size", p.file_size);
  read(j, "file_name", p.file_name);
  if (auto it = j.find("passphrase"); it != j.end()) p.passphrase = it->get<std::string>();
  if (auto it = j.find("channel_word"); it != j.end()) p.channel_word = it->get<std::string>();
  read(j, "peer", p.peer);
  if (auto it = j.find("perturb_word"); it != j.end()) p.perturb_word = it->get<std::size_t>();
  if (auto it = j.find("decision"); it != j.end()) p.decision = decision_from(it->get<std::string>());
  read(j, "think_time", p.think_time);
  read(j, "backends", p.backends);
  return p;
}

Scenario scenario_from(const json& j) {
  Scenario s;
  s.net = net_from(j.value("net", json::object()));
  s.session = session_from(j.value("session", json::object()));
  for (const auto& p : j.at("participants")) s.participants.push_back(participant_from(p));
  if (auto it = j.find("events"); it != j.end()) {
    for (const auto& e : *it) {
      PartitionEvent ev;
      ev.at = e.at("at").get<Millis>();
      ev.link = e.at("partition").get<std::string>();
      read(e, "on", ev.on);
      s.events.push_back(ev);
    }
  }
  if (auto it = j.find("tamper"); it != j.end()) {
    TamperSpec t;
    auto dir = it->value("direction", std::string("to_receiver"));
    if (dir == "to_receiver") {
      t.direction = TapDirection::to_receiver;
    } else if (dir == "to_sender") {
      t.direction = TapDirection::to_sender;
    } else {
      throw std::invalid_argument("tamper direction must be to_receiver or to_sender");
    }
    t.offset = it->at("offset").get<std::uint64_t>();
    read(*it, "mask", t.mask);
    if (t.mask == 0) throw std::invalid_argument("tamper mask must flip at least one bit");
    s.tamper = t;
  }
  return s;
}

json parse_json(std::string_view text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) fail(Errc::parse_error, "config is not a JSON object");
  return j;
}

template <typename F>
auto guarded(F&& f) {
  try {
    return f();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(Errc::parse_error, std::string("bad config: ") + e.what());
  }
}

}  // namespace

Scenario parse_scenario(std::string_view json_text) {
  return guarded([&] { return scenario_from(parse_json(json_text)); });
}

Scenario load_scenario(std::string_view config_text, const std::string& name) {
  return guarded([&] {
    json root = parse_json(config_text);
    auto scenarios = root.value("scenarios", json::object());
    auto it = scenarios.find(name);
    if (it == scenarios.end()) fail(Errc::invalid_argument, "no scenario named \"" + name + "\"");
    json merged = *it;
    for (const char* section : {"net", "session"}) {
      json base = root.value(section, json::object());
      base.merge_patch(it->value(section, json::object()));
      merged[section] = base;
    }
    return scenario_from(merged);
  });
}

std::vector<std::string> scenario_names(std::string_view config_text) {
  return guarded([&] {
    std::vector<std::string> names;
    const json scenarios = parse_json(config_text).value("scenarios", json::object());
    for (const auto& [name, _] : scenarios.items()) {
      names.push_back(name);
    }
    return names;
  });
}

std::optional<LoopbackConfig> load_loopback(std::string_view config_text) {
  return guarded([&]() -> std::optional<LoopbackConfig> {
    json root = parse_json(config_text);
    auto it = root.find("loopback");
    if (it == root.end()) return std::nullopt;
    LoopbackConfig c;
    c.store_dir = it->at("store_dir").get<std::string>();
    read(*it, "query_interval", c.query_interval);
    json session = root.value("session", json::object());
    session.merge_patch(it->value("session", json::object()));
    c.session = session_from(session);
    return c;
  });
}

}  // namespace pcp::scenario
