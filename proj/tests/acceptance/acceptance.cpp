// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
//   pcp_acceptance --pcp <path to pcp binary> [--only N]
//
// Digests used as oracles are computed with OpenSSL, not with the library's
// own libsodium wrappers.

#include <fcntl.h>
#include <openssl/evp.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pcp/scenario.hpp"

extern char** environ;

namespace {

namespace fs = std::filesystem;
using namespace pcp;
using scenario::Participant;
using scenario::ParticipantRole;
using scenario::Scenario;
using scenario::ScenarioResult;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string openssl_sha256(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) return "<unreadable>";
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  std::ifstream x(a, std::ios::binary), y(b, std::ios::binary);
  return std::equal(std::istreambuf_iterator<char>(x), {}, std::istreambuf_iterator<char>(y), {});
}

Participant sender(std::string name, std::uint64_t size) {
  Participant p;
  p.name = std::move(name);
  p.role = ParticipantRole::sender;
  p.file_size = size;
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

Scenario pair(std::uint64_t seed, std::uint64_t size) {
  Scenario s;
  s.net.seed = seed;
  s.participants = {sender("alice", size), receiver("bob", "alice", 500)};
  return s;
}

/// Received file matches the source byte for byte and by an independent digest.
bool delivered(const ScenarioResult& r, const std::string& from, const std::string& to) {
  const auto& src = r.at(from);
  const auto& dst = r.at(to);
  if (dst.outcome.status != SessionStatus::completed || src.outcome.status != SessionStatus::completed) return false;
  const auto& saved = dst.outcome.transfer.saved_as;
  if (!dst.outcome.transfer.digest_verified || saved.empty()) return false;
  return openssl_sha256(saved) == openssl_sha256(src.file) && same_bytes(saved, src.file);
}

// 1. 1 MiB happy path, under 5 s wall clock.
Verdict happy_path(const fs::path& work) {
  auto t0 = std::chrono::steady_clock::now();
  auto r = scenario::run(pair(1, 1 << 20), work);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool ok = delivered(r, "alice", "bob") && r.at("bob").outcome.transfer.bytes_received == (1u << 20);
  std::ostringstream d;
  d << "1 MiB, " << secs << " s wall, " << (r.finished_at - r.started_at) << " ms virtual";
  return {ok && secs < 5.0, d.str()};
}

// 2. Exhaustive slot boundary sweep with republish disabled.
Verdict slot_boundaries(const fs::path& work) {
  constexpr std::int64_t kBase = 1'617'283'200;  // a slot start
  constexpr std::int64_t kWidth = 300;
  constexpr Millis kSearch = 20'000;
  auto t0 = std::chrono::steady_clock::now();
  int agree = 0, found = 0;
  std::string first_mismatch;
  for (std::int64_t delta = 0; delta < 600; ++delta) {
    // Step the publish time through every offset inside its slot (7 is
    // coprime with 300, so each offset shows up twice across the sweep).
    std::int64_t t = kBase + (delta * 7) % kWidth;
    std::int64_t gap = (t + delta) / kWidth * kWidth - t / kWidth * kWidth;
    bool expected = gap == 0 || gap == kWidth;

    Scenario s = pair(1000 + static_cast<std::uint64_t>(delta), 64);
    s.net.start_time = t;
    s.session.republish_on_rollover = false;
    s.session.discovery_deadline = delta * 1000 + kSearch;
    s.participants[1].start_ms = delta * 1000;
    auto r = scenario::run(s, work / "slot");
    auto st = r.at("bob").outcome.status;
    bool got = st == SessionStatus::completed;
    found += got;
    bool consistent = got == expected && (got || st == SessionStatus::not_found);
    agree += consistent;
    if (!consistent && first_mismatch.empty()) {
      first_mismatch = " first mismatch delta=" + std::to_string(delta) + " t=" + std::to_string(t) +
                       " status=" + std::string(to_string(st));
    }
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ostringstream d;
  d << agree << "/600 match the slot oracle, " << found << " found, " << secs << " s" << first_mismatch;
  return {agree == 600 && secs < 60.0, d.str()};
}

std::string peer_field(const std::string& detail) {
  auto at = detail.find("peer=");
  if (at == std::string::npos) return {};
  auto end = detail.find(' ', at);
  return detail.substr(at + 5, end == std::string::npos ? std::string::npos : end - at - 5);
}

// 3. Eight pairs on one channel word.
Verdict collisions(const fs::path& work) {
  Scenario s;
  s.net.seed = 33;
  for (int i = 0; i < 8; ++i) {
    auto snd = sender("s" + std::to_string(i), 16'384 + 1000 * static_cast<std::uint64_t>(i));
    snd.channel_word = "acid";
    s.participants.push_back(snd);
    s.participants.push_back(receiver("r" + std::to_string(i), snd.name, 1000));
  }
  auto r = scenario::run(s, work);

  std::set<std::string> phrases;
  int ok = 0;
  std::map<std::string, std::string> own_peer;  // node name -> hex id of its partner
  for (int i = 0; i < 8; ++i) {
    auto sn = "s" + std::to_string(i), rn = "r" + std::to_string(i);
    phrases.insert(r.at(sn).passphrase);
    ok += delivered(r, sn, rn);
    own_peer[sn] = r.at(rn).peer_id.hex();
    own_peer[rn] = r.at(sn).peer_id.hex();
  }
  int manifests = 0, cross = 0;
  for (const auto& e : r.events) {
    if (e.event != "manifest.sent" && e.event != "manifest.received") continue;
    ++manifests;
    if (peer_field(e.detail) != own_peer[e.node]) ++cross;
  }
  std::ostringstream d;
  d << ok << "/8 complete with matching digests, " << phrases.size() << " distinct passphrases, " << manifests
    << " manifest events, " << cross << " cross-pair";
  return {ok == 8 && phrases.size() == 8 && manifests == 16 && cross == 0, d.str()};
}

// 4. Wrong passphrase versus control.
Verdict auth_rejection(const fs::path& work) {
  int failures = 0, exhausted = 0, leaked_bytes = 0, control_failures = 0, control_ok = 0;
  for (int i = 0; i < 1000; ++i) {
    Scenario s = pair(5000 + static_cast<std::uint64_t>(i), 1024);
    s.session.discovery_deadline = 4'000;
    s.participants[1].perturb_word = 1 + static_cast<std::size_t>(i % 3);
    auto r = scenario::run(s, work / "wrong");
    const auto& bob = r.at("bob");
    failures += static_cast<int>(bob.outcome.auth_failures);
    exhausted += bob.outcome.status == SessionStatus::auth_exhausted && bob.inbox_files == 0;
    leaked_bytes += r.app_bytes_to_receiver + r.app_bytes_to_sender != 0;

    Scenario c = pair(5000 + static_cast<std::uint64_t>(i), 1024);
    c.session.discovery_deadline = 4'000;
    auto rc = scenario::run(c, work / "control");
    control_failures += static_cast<int>(rc.at("bob").outcome.auth_failures);
    control_ok += rc.at("bob").outcome.status == SessionStatus::completed;
  }
  std::ostringstream d;
  d << "wrong: " << failures << " confirmation failures, " << exhausted << " auth-exhausted, " << leaked_bytes
    << " runs with app bytes; control: " << control_failures << " failures, " << control_ok << " completed";
  return {failures == 1000 && exhausted == 1000 && leaked_bytes == 0 && control_failures == 0 && control_ok == 1000,
          d.str()};
}

// 5. Single-byte tampering after the handshake.
Verdict tampering(const fs::path& work) {
  auto base = pair(77, 20'000);
  base.session.chunk_size = 4096;
  auto clean = scenario::run(base, work / "clean");
  std::uint64_t fwd = clean.app_bytes_to_receiver, back = clean.app_bytes_to_sender;
  if (!delivered(clean, "alice", "bob") || fwd == 0 || back == 0) return {false, "clean baseline did not complete"};

  SeededRandom rng(2025);
  constexpr int kTrials = 240;
  int detected = 0, applied = 0;
  std::string first_miss;
  for (int i = 0; i < kTrials; ++i) {
    std::uint64_t pos = rng.uniform(fwd + back);
    scenario::TamperSpec t;
    t.direction = pos < fwd ? scenario::TapDirection::to_receiver : scenario::TapDirection::to_sender;
    t.offset = pos < fwd ? pos : pos - fwd;
    t.mask = static_cast<std::uint8_t>(1 + rng.uniform(255));
    auto s = base;
    s.tamper = t;
    auto r = scenario::run(s, work / "tamper");
    applied += r.tamper_applied;
    const auto& bob = r.at("bob");
    bool ok = r.tamper_applied && bob.outcome.status == SessionStatus::aborted &&
              r.at("alice").outcome.status == SessionStatus::aborted && bob.inbox_files == 0;
    detected += ok;
    if (!ok && first_miss.empty()) {
      first_miss = " first miss at " + std::string(pos < fwd ? "to_receiver" : "to_sender") + " offset " +
                   std::to_string(t.offset) + ": " + std::string(to_string(bob.outcome.status));
    }
  }
  std::ostringstream d;
  d << detected << "/" << kTrials << " aborted with no file (" << applied << " flips applied over " << fwd << "+"
    << back << " app bytes)" << first_miss;
  return {detected == kTrials, d.str()};
}

// 6. Local discovery beats the DHT.
Verdict local_first(const fs::path& work) {
  int local = 0;
  for (int i = 0; i < 100; ++i) {
    Scenario s = pair(9000 + static_cast<std::uint64_t>(i), 2048);
    s.net.local_latency = {5, 5};
    s.net.dht_latency = {500, 500};
    auto r = scenario::run(s, work);
    local += r.at("bob").outcome.status == SessionStatus::completed && r.at("bob").outcome.via == "mdns";
  }
  return {local == 100, std::to_string(local) + "/100 won via mdns"};
}

// 7. Sizes around the chunk boundary.
Verdict edge_sizes(const fs::path& work) {
  int ok = 0;
  std::string sizes;
  for (std::uint64_t size : {0, 1, 65535, 65536, 65537}) {
    auto r = scenario::run(pair(size + 1, size), work / std::to_string(size));
    bool good = delivered(r, "alice", "bob") && r.at("bob").outcome.transfer.bytes_received == size;
    ok += good;
    sizes += " " + std::to_string(size) + (good ? ":ok" : ":FAILED");
  }
  return {ok == 5, "sizes" + sizes};
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 8. Whole scenario suite twice, same hashes.
Verdict determinism(const fs::path& work) {
  std::string config = read_text(PCP_SCENARIOS_JSON);
  auto names = scenario::scenario_names(config);
  auto suite = [&](const fs::path& dir) {
    std::string hashes;
    for (const auto& n : names) hashes += n + "=" + to_hex(scenario::run(scenario::load_scenario(config, n), dir / n).trace_hash) + "\n";
    return hashes;
  };
  auto a = suite(work / "a");
  auto b = suite(work / "b");
  return {!names.empty() && a == b, std::to_string(names.size()) + " scenarios, suite digest " +
                                        to_hex(crypto::sha256(as_bytes(a))).substr(0, 16) +
                                        (a == b ? " on both runs" : " differs between runs")};
}

struct Child {
  pid_t pid = -1;
  int out_fd = -1;
};

Child launch(const std::vector<std::string>& args) {
  int fds[2];
  if (::pipe(fds) != 0) return {};
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, fds[1], STDOUT_FILENO);
  posix_spawn_file_actions_addclose(&actions, fds[0]);
  posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null", O_RDONLY, 0);
  std::vector<char*> argv;
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  Child c;
  if (posix_spawn(&c.pid, argv[0], &actions, nullptr, argv.data(), environ) != 0) c.pid = -1;
  posix_spawn_file_actions_destroy(&actions);
  ::close(fds[1]);
  c.out_fd = fds[0];
  return c;
}

/// Reads the child's stdout until `until` returns true, EOF, or the deadline.
std::string read_until(int fd, std::chrono::steady_clock::time_point deadline,
                       const std::function<bool(const std::string&)>& until) {
  std::string text;
  char buf[4096];
  while (!until(text)) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) break;
    pollfd p{fd, POLLIN, 0};
    if (::poll(&p, 1, static_cast<int>(left.count())) <= 0) break;
    auto n = ::read(fd, buf, sizeof buf);
    if (n <= 0) break;
    text.append(buf, static_cast<std::size_t>(n));
  }
  return text;
}

int reap(pid_t pid, std::chrono::steady_clock::time_point deadline) {
  int status = 0;
  while (::waitpid(pid, &status, WNOHANG) == 0) {
    if (std::chrono::steady_clock::now() > deadline) {
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      return -1;
    }
    ::usleep(10'000);
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// 9. Real processes: pcp send, then pcp receive with the printed code.
Verdict cli_round_trip(const fs::path& work, const std::string& pcp) {
  if (pcp.empty() || !fs::exists(pcp)) return {false, "pcp binary not given (--pcp)"};
  fs::create_directories(work / "in");
  fs::path src = work / "hello.bin";
  {
    std::ofstream out(src, std::ios::binary);
    SeededRandom rng(99);
    Bytes data(300'000);
    rng.fill(data);
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  }
  fs::path cfg = work / "loopback.json";
  {
    std::ofstream out(cfg);
    out << R"({"loopback": {"store_dir": ")" << (work / "store").string()
        << R"(", "query_interval": 50, "session": {"discovery_deadline": 30000}}})";
  }
  auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(60);
  auto snd = launch({pcp, "send", "--sim-config", cfg.string(), src.string()});
  if (snd.pid < 0) return {false, "could not start pcp send"};
  std::string banner = read_until(snd.out_fd, deadline, [](const std::string& t) {
    auto at = t.find("Code is: ");
    return at != std::string::npos && t.find('\n', at) != std::string::npos;
  });
  auto at = banner.find("Code is: ");
  if (at == std::string::npos) {
    ::kill(snd.pid, SIGKILL);
    reap(snd.pid, deadline);
    return {false, "sender printed no code"};
  }
  auto eol = banner.find('\n', at);
  std::string code = banner.substr(at + 9, eol - at - 9);

  auto rcv = launch({pcp, "receive", "--yes", "--dir", (work / "in").string(), "--sim-config", cfg.string(), code});
  std::string rcv_out = read_until(rcv.out_fd, deadline, [](const std::string&) { return false; });
  int rcv_rc = reap(rcv.pid, deadline);
  read_until(snd.out_fd, deadline, [](const std::string&) { return false; });
  int snd_rc = reap(snd.pid, deadline);
  ::close(snd.out_fd);
  ::close(rcv.out_fd);

  fs::path got = work / "in" / "hello.bin";
  bool same = fs::exists(got) && openssl_sha256(got) == openssl_sha256(src) && same_bytes(got, src);
  std::ostringstream d;
  d << "code has " << std::count(code.begin(), code.end(), '-') + 1 << " words, send exit " << snd_rc
    << ", receive exit " << rcv_rc << ", file " << (same ? "identical" : "missing or different");
  return {snd_rc == 0 && rcv_rc == 0 && same, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  std::string pcp_path;
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--pcp" && i + 1 < argc) {
      pcp_path = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      only = std::stoi(argv[++i]);
    } else {
      std::cerr << "usage: pcp_acceptance --pcp PATH [--only N]\n";
      return 2;
    }
  }

  std::string tmpl = (fs::temp_directory_path() / "pcp-acceptance-XXXXXX").string();
  if (!::mkdtemp(tmpl.data())) {
    std::perror("mkdtemp");
    return 2;
  }
  fs::path work = tmpl;

  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict(const fs::path&)> check;
  };
  std::vector<Criterion> criteria{
      {1, "happy path", happy_path},
      {2, "slot boundary sweep", slot_boundaries},
      {3, "collision safety", collisions},
      {4, "authentication rejection", auth_rejection},
      {5, "tamper detection", tampering},
      {6, "local before global", local_first},
      {7, "edge sizes", edge_sizes},
      {8, "determinism", determinism},
      {9, "cli round trip", [&](const fs::path& w) { return cli_round_trip(w, pcp_path); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (only != 0 && c.id != only) continue;
    Verdict v;
    try {
      v = c.check(work / std::to_string(c.id));
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " " << c.id << " " << c.name << ": " << v.detail << std::endl;
  }
  std::error_code ec;
  fs::remove_all(work, ec);
  return failed == 0 ? 0 : 1;
}
