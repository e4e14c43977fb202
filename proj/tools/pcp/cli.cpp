#include "cli.hpp"

#include <poll.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "pcp/error.hpp"
#include "pcp/host.hpp"
#include "pcp/scenario.hpp"
#include "progress.hpp"

namespace pcp::cli {

namespace fs = std::filesystem;

int exit_code_for(SessionStatus status) {
  switch (status) {
    case SessionStatus::completed:
      return kExitOk;
    case SessionStatus::timeout:
    case SessionStatus::not_found:
      return kExitDiscoveryTimeout;
    case SessionStatus::auth_exhausted:
      return kExitAuthExhausted;
    case SessionStatus::rejected:
      return kExitRejected;
    case SessionStatus::io_error:
    case SessionStatus::aborted:
      return kExitIo;
    case SessionStatus::interrupted:
      return kExitInterrupted;
  }
  return kExitIo;
}

namespace {

bool env_set(const char* name) {
  const char* v = std::getenv(name);
  return v != nullptr && *v != '\0';
}

bool verbose() {
  const char* v = std::getenv("PCP_LOG");
  if (v == nullptr) return false;
  std::string level(v);
  return level == "debug" || level == "trace" || level == "info";
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(Errc::io_error, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// y/N prompt on the controlling terminal, read without blocking the loop.
class TerminalDecision final : public DecisionSource {
 public:
  TerminalDecision(host::HostExecutor& ex, std::ostream& out, StopSource& stop) : ex_(ex), out_(out), stop_(stop) {}

  Task<std::optional<Decision>> decide(const TransferManifest& m, TimePoint deadline) override {
    out_ << "Accept " << m.filename() << " (" << format_bytes(m.size()) << ")? [y/N] " << std::flush;
    Signal ready(ex_);
    std::string line;
    bool eof = false;
    ex_.watch(STDIN_FILENO, POLLIN, [&](short) {
      char buf[256];
      auto n = ::read(STDIN_FILENO, buf, sizeof buf);
      if (n <= 0) {
        eof = true;
      } else {
        line.append(buf, static_cast<std::size_t>(n));
      }
      ready.notify();
    });
    auto sub = stop_.subscribe([&] { ready.notify(); });
    while (line.find('\n') == std::string::npos && !eof && !stop_.stop_requested() && ex_.now() < deadline) {
      co_await ready.wait_until(deadline);
    }
    stop_.unsubscribe(sub);
    ex_.unwatch(STDIN_FILENO);
    if (line.find('\n') == std::string::npos && !eof) {
      out_ << "\n";
      co_return std::nullopt;
    }
    auto first = line.find_first_not_of(" \t");
    bool yes = first != std::string::npos && (line[first] == 'y' || line[first] == 'Y');
    co_return yes ? Decision::accept : Decision::reject;
  }

 private:
  host::HostExecutor& ex_;
  std::ostream& out_;
  StopSource& stop_;
};

/// Shows the manifest before handing the question on.
class AnnouncingDecision final : public DecisionSource {
 public:
  AnnouncingDecision(DecisionSource& inner, std::ostream& out, std::string note)
      : inner_(inner), out_(out), note_(std::move(note)) {}

  Task<std::optional<Decision>> decide(const TransferManifest& m, TimePoint deadline) override {
    out_ << "Incoming file: " << m.filename() << " (" << format_bytes(m.size()) << ")" << std::endl;
    if (!note_.empty()) out_ << note_ << std::endl;
    co_return co_await inner_.decide(m, deadline);
  }

 private:
  DecisionSource& inner_;
  std::ostream& out_;
  std::string note_;
};

/// Real clock, TCP on loopback, provider records in a shared directory.
struct HostStack {
  host::HostExecutor ex;
  SystemRandom rng;
  std::unique_ptr<host::TcpTransport> tcp;
  std::vector<std::shared_ptr<DiscoveryBackend>> backends;
  Trace trace{ex, false};
  StopSource stop;
  SessionConfig session;

  HostStack(std::ostream& err, const std::string& sim_config) {
    fs::path store;
    Millis interval = 200;
    if (!sim_config.empty()) {
      auto loop = scenario::load_loopback(read_file(sim_config));
      if (!loop) {
        fail(Errc::invalid_argument, sim_config + " has no \"loopback\" section; use `pcp simulate` for scenarios");
      }
      store = loop->store_dir;
      interval = loop->query_interval;
      session = loop->session;
    } else if (const char* dir = std::getenv("PCP_RENDEZVOUS_DIR"); dir != nullptr && *dir != '\0') {
      store = dir;
    } else {
      store = fs::temp_directory_path() / "pcp-rendezvous";
    }
    host::HostExecutor::install_signal_handlers();
    ex.on_interrupt([this] { stop.request_stop(); });
    tcp = std::make_unique<host::TcpTransport>(ex, rng);
    PollingOptions polling{interval};
    backends.push_back(std::make_shared<host::DirectoryBackend>(ex, store / "dht", DiscoveryScope::global, polling));
    backends.push_back(
        std::make_shared<host::DirectoryBackend>(ex, store / "mdns", DiscoveryScope::local_network, polling));
    if (verbose()) trace.set_sink([&err](const std::string& line) { err << line << '\n'; });
  }

  SessionEnv env() { return SessionEnv{ex, *tcp, backends, rng, &trace, "local", &stop}; }
};

ProgressFn progress_to(ProgressPrinter& printer) {
  auto start = std::chrono::steady_clock::now();
  return [&printer, start](std::uint64_t done, std::uint64_t total) {
    std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    printer.update(done, total, elapsed.count());
  };
}

std::string highlight(const std::string& text) {
  if (env_set("NO_COLOR") || !::isatty(STDOUT_FILENO)) return text;
  return "\x1b[1m" + text + "\x1b[0m";
}

int report(const SessionOutcome& outcome, std::ostream& err) {
  if (outcome.status != SessionStatus::completed) {
    err << "pcp: " << to_string(outcome.status);
    if (!outcome.detail.empty()) err << ": " << outcome.detail;
    err << '\n';
  }
  return exit_code_for(outcome.status);
}

int do_send(const std::string& file, std::size_t words, const std::string& sim_config, std::ostream& out,
            std::ostream& err) {
  HostStack stack(err, sim_config);
  SessionConfig config = stack.session;
  config.word_count = words;
  ProgressPrinter printer(err, ::isatty(STDERR_FILENO) != 0);
  SenderOptions opts;
  opts.progress = progress_to(printer);
  opts.on_passphrase = [&out](const Passphrase& p) {
    out << "Code is: " << highlight(p.render()) << '\n';
    out << "On the other machine, run:\n  pcp receive " << p.render() << std::endl;
  };
  auto outcome = block_on(stack.ex, run_sender(config, stack.env(), file, opts));
  printer.finish();
  if (outcome.status == SessionStatus::completed) {
    out << "Sent " << outcome.manifest->filename() << " (" << format_bytes(outcome.transfer.bytes_received) << ")"
        << std::endl;
  }
  return report(outcome, err);
}

int do_receive(const std::string& words, bool yes, const std::string& dir, const std::string& sim_config,
               std::ostream& out, std::ostream& err) {
  try {
    parse_passphrase(words);
  } catch (const Error& e) {
    err << "pcp: " << e.what() << '\n';
    return kExitUsage;
  }
  HostStack stack(err, sim_config);
  ScriptedDecision accept_all(stack.ex, ScriptedDecision::Mode::accept);
  ScriptedDecision decline(stack.ex, ScriptedDecision::Mode::reject);
  TerminalDecision terminal(stack.ex, out, stack.stop);
  DecisionSource* inner = &terminal;
  std::string note;
  if (yes) {
    inner = &accept_all;
  } else if (!::isatty(STDIN_FILENO)) {
    inner = &decline;
    note = "stdin is not a terminal; declining (pass --yes to accept)";
  }
  AnnouncingDecision decisions(*inner, out, note);

  ProgressPrinter printer(err, ::isatty(STDERR_FILENO) != 0);
  ReceiverOptions opts;
  opts.dest_dir = dir;
  opts.progress = progress_to(printer);
  auto outcome = block_on(stack.ex, run_receiver(stack.session, stack.env(), words, decisions, opts));
  printer.finish();
  if (outcome.status == SessionStatus::completed) {
    out << "Saved " << outcome.transfer.saved_as.string() << " (" << format_bytes(outcome.transfer.bytes_received)
        << ", sha256 verified)" << std::endl;
  }
  return report(outcome, err);
}

int do_simulate(const std::string& sim_config, const std::string& name, const std::string& workdir,
                const std::string& trace_out, std::ostream& out) {
  auto sc = scenario::load_scenario(read_file(sim_config), name);
  fs::path dir = workdir.empty() ? fs::temp_directory_path() / ("pcp-sim-" + std::to_string(::getpid())) : fs::path(workdir);
  auto result = scenario::run(sc, dir);
  if (workdir.empty()) fs::remove_all(dir);
  for (const auto& p : result.participants) {
    out << p.name << ' ' << (p.role == scenario::ParticipantRole::sender ? "sender" : "receiver") << ' '
        << to_string(p.outcome.status) << " bytes=" << p.outcome.transfer.bytes_received;
    if (p.role == scenario::ParticipantRole::receiver) {
      out << " digest=" << (p.received_digest ? "verified" : "none");
      if (!p.outcome.via.empty()) out << " via=" << p.outcome.via;
    }
    if (!p.outcome.detail.empty() && p.outcome.status != SessionStatus::completed) {
      out << " (" << p.outcome.detail << ")";
    }
    out << '\n';
  }
  out << "virtual-ms " << (result.finished_at - result.started_at) << '\n';
  out << "trace-sha256 " << to_hex(result.trace_hash) << std::endl;
  if (!trace_out.empty()) {
    std::ofstream t(trace_out, std::ios::binary | std::ios::trunc);
    t << result.trace_jsonl;
  }
  return kExitOk;
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"pcp: peer-to-peer file transfer with a short passphrase", "pcp"};
  app.require_subcommand(1);

  std::string sim_config;

  auto* send = app.add_subcommand("send", "Offer a file and print the passphrase for the receiver");
  std::string file;
  std::size_t words = Passphrase::kDefaultWords;
  send->add_option("-w,--words", words, "Number of passphrase words")->check(CLI::Range(2, 24));
  send->add_option("--sim-config", sim_config, "JSON config with a loopback section");
  send->add_option("FILE", file, "File to send")->required();

  auto* receive = app.add_subcommand("receive", "Fetch a file using the sender's passphrase");
  std::string phrase;
  bool yes = false;
  std::string dir = ".";
  receive->add_flag("-y,--yes", yes, "Accept the incoming file without asking");
  receive->add_option("-d,--dir", dir, "Destination directory");
  receive->add_option("--sim-config", sim_config, "JSON config with a loopback section");
  receive->add_option("WORDS", phrase, "Passphrase, words joined by '-'")->required();

  auto* simulate = app.add_subcommand("simulate", "Run a scripted scenario on the simulated network");
  std::string scenario_name;
  std::string workdir;
  std::string trace_out;
  simulate->add_option("--sim-config", sim_config, "Scenario config file")->required();
  simulate->add_option("--scenario", scenario_name, "Scenario name")->required();
  simulate->add_option("--workdir", workdir, "Keep generated and received files here");
  simulate->add_option("--trace", trace_out, "Write the event trace (JSON lines) to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "pcp: " << e.what() << "\n" << "Run with --help for more information.\n";
    return kExitUsage;
  }

  try {
    if (*send) return do_send(file, words, sim_config, out, err);
    if (*receive) return do_receive(phrase, yes, dir, sim_config, out, err);
    return do_simulate(sim_config, scenario_name, workdir, trace_out, out);
  } catch (const Error& e) {
    err << "pcp: " << e.what() << '\n';
    switch (e.code()) {
      case Errc::invalid_argument:
      case Errc::parse_error:
        return kExitUsage;
      default:
        return kExitIo;
    }
  }
}

}  // namespace pcp::cli
