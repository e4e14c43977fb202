#include "pcp/simnet.hpp"

#include <algorithm>

#include "pcp/error.hpp"

namespace pcp::sim {

struct Pipe {
  std::uint64_t id = 0;
  std::string names[2];
  std::weak_ptr<SimConnection> ends[2];  // [0] dialer, [1] acceptor
  std::vector<std::string> links;
  LatencyRange latency;
  std::uint64_t bandwidth = 0;
  bool relayed = false;
  TimePoint last_delivery[2] = {0, 0};
  /// When each direction's sender finishes putting queued bytes on the wire.
  TimePoint tx_free[2] = {0, 0};
  std::uint64_t offset[2] = {0, 0};
  bool severed = false;
};

class SimConnection final : public Connection {
 public:
  SimConnection(SimNetwork& net, std::shared_ptr<Pipe> pipe, int side)
      : Connection(net.executor()), net_(net), pipe_(std::move(pipe)), side_(side) {}

  void receive(ByteView data) { deliver(data); }

  Task<void> wait_drained(std::size_t max_pending, TimePoint deadline) override {
    if (pipe_->bandwidth == 0) co_return;
    auto& ex = net_.executor();
    // Backlog drains at the pipe's bandwidth; wake once it is under max_pending.
    TimePoint ready = pipe_->tx_free[side_] - static_cast<TimePoint>(max_pending / pipe_->bandwidth);
    if (ready <= ex.now()) co_return;
    if (ready > deadline) {
      co_await sleep_until(ex, deadline);
      fail(Errc::timeout, "send backlog did not drain in time");
    }
    co_await sleep_until(ex, ready);
  }
  void receive_eof() { deliver_eof(); }
  void receive_reset(const std::string& reason) { deliver_reset(reason); }

 protected:
  void transmit(ByteView data) override { net_.send(pipe_, side_, Bytes(data.begin(), data.end())); }
  void transmit_close() override { net_.send_control(pipe_, side_, false, {}); }
  void transmit_reset(const std::string& reason) override { net_.send_control(pipe_, side_, true, reason); }

 private:
  SimNetwork& net_;
  std::shared_ptr<Pipe> pipe_;
  int side_;
};

namespace {

std::string key_tag(const ContentKey& key) { return to_hex(ByteView(key.data(), 6)); }

}  // namespace

class SimDhtBackend final : public DiscoveryBackend {
 public:
  SimDhtBackend(SimNetwork& net, std::shared_ptr<SimNode> node)
      : DiscoveryBackend(net.executor(), DiscoveryScope::global, "dht",
                         PollingOptions{net.config().dht_query_interval}),
        net_(net),
        node_(std::move(node)) {}

 protected:
  Millis sample_latency() override { return net_.sample(net_.config().dht_latency); }

  bool reachable() override {
    if (!node_->alive() || !net_.has_uplink(*node_)) return false;
    return !net_.rng().chance(net_.config().dht_loss);
  }

  void store(const ProviderRecord& record) override {
    net_.dht_records_[record.content_key][record.provider.peer_id] = record;
    net_.trace().emit(node_->name(), "dht.provide", "key=" + key_tag(record.content_key));
  }

  std::vector<PeerAddress> load(const ContentKey& key, std::int64_t now_seconds) override {
    std::vector<PeerAddress> out;
    auto it = net_.dht_records_.find(key);
    if (it == net_.dht_records_.end()) return out;
    auto& records = it->second;
    for (auto r = records.begin(); r != records.end();) {
      if (!r->second.live_at(now_seconds)) {
        r = records.erase(r);
        continue;
      }
      out.push_back(r->second.provider);
      ++r;
    }
    return out;
  }

 private:
  SimNetwork& net_;
  std::shared_ptr<SimNode> node_;
};

class SimLocalBackend final : public DiscoveryBackend {
 public:
  SimLocalBackend(SimNetwork& net, std::shared_ptr<SimNode> node)
      : DiscoveryBackend(net.executor(), DiscoveryScope::local_network, "mdns",
                         PollingOptions{net.config().local_query_interval}),
        net_(net),
        node_(std::move(node)) {}

 protected:
  Millis sample_latency() override { return net_.sample(net_.config().local_latency); }

  bool reachable() override {
    if (!node_->alive()) return false;
    for (const auto& l : node_->links()) {
      if (!net_.partitioned(l)) return !net_.rng().chance(net_.link(l).loss);
    }
    return false;
  }

  void store(const ProviderRecord& record) override {
    for (const auto& l : node_->links()) {
      if (net_.partitioned(l)) continue;
      net_.local_records_[{l, record.content_key}][record.provider.peer_id] = record;
      net_.trace().emit(node_->name(), "local.advertise", "link=" + l + " key=" + key_tag(record.content_key));
    }
  }

  std::vector<PeerAddress> load(const ContentKey& key, std::int64_t now_seconds) override {
    std::map<PeerId, PeerAddress> found;
    for (const auto& l : node_->links()) {
      if (net_.partitioned(l)) continue;
      auto it = net_.local_records_.find({l, key});
      if (it == net_.local_records_.end()) continue;
      for (const auto& [peer, record] : it->second) {
        auto advertiser = net_.node_at(record.provider.endpoint);
        if (!advertiser || !advertiser->alive() || !record.live_at(now_seconds)) continue;
        found.emplace(peer, record.provider);
      }
    }
    std::vector<PeerAddress> out;
    for (auto& [_, addr] : found) out.push_back(addr);
    return out;
  }

 private:
  SimNetwork& net_;
  std::shared_ptr<SimNode> node_;
};

SimNode::SimNode(SimNetwork& net, std::size_t index, std::string name, std::set<std::string> links,
                 NodeOptions options, PeerAddress address)
    : net_(net),
      index_(index),
      name_(std::move(name)),
      links_(std::move(links)),
      options_(options),
      address_(std::move(address)) {}

Executor& SimNode::executor() { return net_.executor(); }

void SimNode::listen(AcceptHandler on_accept) { on_accept_ = std::move(on_accept); }

void SimNode::stop_listening() { on_accept_ = nullptr; }

Task<std::shared_ptr<Connection>> SimNode::dial(PeerAddress to, DialOptions options) {
  return net_.dial(net_.nodes_.at(index_), std::move(to), options);
}

void SimNode::stop() {
  if (!alive_) return;
  alive_ = false;
  on_accept_ = nullptr;
  net_.trace_.emit(name_, "node.stop");
  for (auto& weak : net_.pipes_) {
    auto pipe = weak.lock();
    if (!pipe || pipe->severed) continue;
    if (pipe->names[0] != name_ && pipe->names[1] != name_) continue;
    pipe->severed = true;
    for (auto& end : pipe->ends) {
      if (auto c = end.lock()) c->receive_reset("node stopped");
    }
  }
}

SimNetwork::SimNetwork(SimConfig config)
    : config_(std::move(config)),
      ex_(config_.start_time * 1000),
      rng_(config_.seed),
      trace_(ex_) {
  for (const auto& l : config_.links) {
    if (l.id.empty()) fail(Errc::invalid_argument, "link id must not be empty");
    if (l.loss < 0.0 || l.loss >= 1.0) fail(Errc::invalid_argument, "link loss must be in [0, 1)");
    if (!links_.emplace(l.id, l).second) fail(Errc::invalid_argument, "duplicate link " + l.id);
  }
}

SimNetwork::~SimNetwork() = default;

Millis SimNetwork::sample(const LatencyRange& range) {
  if (range.max <= range.min) return std::max<Millis>(range.min, 0);
  return rng_.uniform_between(range.min, range.max);
}

std::shared_ptr<SimNode> SimNetwork::spawn_node(std::string name, std::vector<std::string> links,
                                                NodeOptions options) {
  std::set<std::string> joined;
  for (auto& l : links) {
    if (!links_.count(l)) fail(Errc::invalid_argument, "unknown link " + l);
    joined.insert(l);
  }
  if (node(name)) fail(Errc::invalid_argument, "duplicate node name " + name);
  std::size_t index = nodes_.size();
  PeerAddress addr{PeerId::random(rng_), "sim:" + std::to_string(index)};
  auto n = std::make_shared<SimNode>(*this, index, name, std::move(joined), options, addr);
  nodes_.push_back(n);
  std::string detail = "peer=" + addr.peer_id.hex();
  for (const auto& l : n->links()) detail += " link=" + l;
  trace_.emit(name, "node.spawn", detail);
  return n;
}

std::shared_ptr<SimNode> SimNetwork::node(std::string_view name) const {
  for (const auto& n : nodes_) {
    if (n->name() == name) return n;
  }
  return nullptr;
}

std::shared_ptr<SimNode> SimNetwork::node_at(const std::string& endpoint) const {
  constexpr std::string_view prefix = "sim:";
  if (endpoint.rfind(prefix, 0) != 0) return nullptr;
  std::size_t index = 0;
  try {
    index = std::stoul(endpoint.substr(prefix.size()));
  } catch (const std::exception&) {
    return nullptr;
  }
  if (index >= nodes_.size()) return nullptr;
  return nodes_[index];
}

const LinkConfig& SimNetwork::link(const std::string& id) const {
  auto it = links_.find(id);
  if (it == links_.end()) fail(Errc::invalid_argument, "unknown link " + id);
  return it->second;
}

bool SimNetwork::partitioned(const std::string& link_id) const { return severed_.count(link_id) != 0; }

bool SimNetwork::has_uplink(const SimNode& node) const {
  return std::any_of(node.links().begin(), node.links().end(), [&](const auto& l) { return !partitioned(l); });
}

void SimNetwork::partition(const std::string& link_id, bool on) {
  (void)link(link_id);
  trace_.emit("net", "net.partition", "link=" + link_id + (on ? " on" : " off"));
  if (!on) {
    severed_.erase(link_id);
    return;
  }
  severed_.insert(link_id);
  std::vector<std::weak_ptr<Pipe>> live;
  for (auto& weak : pipes_) {
    auto pipe = weak.lock();
    if (!pipe) continue;
    live.push_back(weak);
    if (pipe->severed) continue;
    if (std::find(pipe->links.begin(), pipe->links.end(), link_id) == pipe->links.end()) continue;
    pipe->severed = true;
    for (auto& end : pipe->ends) {
      if (auto c = end.lock()) c->receive_reset("link " + link_id + " partitioned");
    }
  }
  pipes_ = std::move(live);
}

std::optional<SimNetwork::Route> SimNetwork::route(const SimNode& from, const SimNode& to, bool force_relay) const {
  if (!force_relay) {
    for (const auto& l : from.links()) {
      if (to.links().count(l) && !partitioned(l)) return Route{{l}, link(l).latency, link(l).bandwidth, false};
    }
  }
  auto uplink = [&](const SimNode& n) -> std::optional<std::string> {
    for (const auto& l : n.links()) {
      if (!partitioned(l)) return l;
    }
    return std::nullopt;
  };
  auto a = uplink(from);
  auto b = uplink(to);
  if (!a || !b) return std::nullopt;
  bool relayed = force_relay || to.options().behind_relay || from.options().behind_relay;
  std::uint64_t bw = config_.wan_bandwidth;
  for (const auto* l : {&*a, &*b}) {
    auto lb = link(*l).bandwidth;
    if (lb != 0 && (bw == 0 || lb < bw)) bw = lb;
  }
  return Route{{*a, *b}, config_.wan_latency, bw, relayed};
}

Task<std::shared_ptr<Connection>> SimNetwork::dial(std::shared_ptr<SimNode> from, PeerAddress to,
                                                   DialOptions options) {
  auto target = node_at(to.endpoint);
  trace_.emit(from->name(), "net.dial", "to=" + to.peer_id.short_hex() + (options.relay ? " relay" : ""));
  if (!from->alive()) fail(Errc::dial_error, "dialing node is stopped");
  std::optional<Route> r;
  if (target && target->alive()) r = route(*from, *target, options.relay);
  if (!r || target->address_.peer_id != to.peer_id) {
    co_await sleep_for(ex_, config_.connect_timeout);
    trace_.emit(from->name(), "net.unreachable", "to=" + to.peer_id.short_hex());
    fail(Errc::dial_error, "peer " + to.peer_id.short_hex() + " unreachable");
  }

  auto one_way = [this, relayed = r->relayed, latency = r->latency] {
    Millis d = sample(latency);
    if (relayed) d += sample(latency);
    return d;
  };

  co_await sleep_for(ex_, one_way());
  if (!target->alive() || !target->listening() || !from->alive()) {
    co_await sleep_for(ex_, one_way());
    trace_.emit(from->name(), "net.refused", "to=" + to.peer_id.short_hex());
    fail(Errc::dial_error, "peer " + to.peer_id.short_hex() + " refused the connection");
  }
  for (const auto& l : r->links) {
    if (partitioned(l)) fail(Errc::dial_error, "route to " + to.peer_id.short_hex() + " lost");
  }

  auto pipe = std::make_shared<Pipe>();
  pipe->id = next_connection_id_++;
  pipe->names[0] = from->name();
  pipe->names[1] = target->name();
  pipe->links = r->links;
  pipe->latency = r->latency;
  pipe->relayed = r->relayed;
  pipe->bandwidth = r->bandwidth;
  pipe->last_delivery[0] = pipe->last_delivery[1] = ex_.now();
  pipes_.push_back(pipe);

  auto dialer_end = std::make_shared<SimConnection>(*this, pipe, 0);
  auto acceptor_end = std::make_shared<SimConnection>(*this, pipe, 1);
  pipe->ends[0] = dialer_end;
  pipe->ends[1] = acceptor_end;
  dialer_end->set_remote(target->self());
  acceptor_end->set_remote(from->self());

  trace_.emit(target->name(), "net.accept",
              "conn=" + std::to_string(pipe->id) + " from=" + from->self().peer_id.short_hex() +
                  (pipe->relayed ? " relayed" : ""));
  auto handler = target->on_accept_;
  handler(acceptor_end);

  co_await sleep_for(ex_, one_way());
  if (pipe->severed || dialer_end->was_reset()) {
    fail(Errc::dial_error, "connection to " + to.peer_id.short_hex() + " dropped during setup");
  }
  trace_.emit(from->name(), "net.connected", "conn=" + std::to_string(pipe->id));
  co_return std::shared_ptr<Connection>(dialer_end);
}

void SimNetwork::send(const std::shared_ptr<Pipe>& pipe, int direction, Bytes data) {
  if (pipe->severed) return;
  if (tap_) {
    TapContext ctx{pipe->id, pipe->names[direction], pipe->names[1 - direction], pipe->offset[direction]};
    tap_(ctx, data);
  }
  pipe->offset[direction] += data.size();
  TimePoint sent = ex_.now();
  if (pipe->bandwidth != 0) {
    auto wire_ms = static_cast<TimePoint>((data.size() + pipe->bandwidth - 1) / pipe->bandwidth);
    sent = std::max(sent, pipe->tx_free[direction]) + wire_ms;
    pipe->tx_free[direction] = sent;
  }
  Millis delay = sample(pipe->latency);
  if (pipe->relayed) delay += sample(pipe->latency);
  TimePoint when = std::max(sent + delay, pipe->last_delivery[direction]);
  pipe->last_delivery[direction] = when;
  ex_.schedule_at(when, [pipe, direction, data = std::move(data)] {
    if (pipe->severed) return;
    if (auto peer = pipe->ends[1 - direction].lock()) peer->receive(data);
  });
}

void SimNetwork::send_control(const std::shared_ptr<Pipe>& pipe, int direction, bool reset, std::string reason) {
  if (pipe->severed) return;
  trace_.emit(pipe->names[direction], reset ? "net.reset" : "net.close",
              "conn=" + std::to_string(pipe->id) + (reason.empty() ? "" : " reason=" + reason));
  Millis delay = sample(pipe->latency);
  if (pipe->relayed) delay += sample(pipe->latency);
  TimePoint when = std::max(std::max(ex_.now(), pipe->tx_free[direction]) + delay, pipe->last_delivery[direction]);
  pipe->last_delivery[direction] = when;
  ex_.schedule_at(when, [pipe, direction, reset, reason = std::move(reason)] {
    if (pipe->severed) return;
    auto peer = pipe->ends[1 - direction].lock();
    if (!peer) return;
    if (reset) {
      peer->receive_reset(reason.empty() ? "reset by peer" : reason);
    } else {
      peer->receive_eof();
    }
  });
}

std::shared_ptr<DiscoveryBackend> SimNetwork::dht_backend(const std::shared_ptr<SimNode>& node) {
  return std::make_shared<SimDhtBackend>(*this, node);
}

std::shared_ptr<DiscoveryBackend> SimNetwork::local_backend(const std::shared_ptr<SimNode>& node) {
  return std::make_shared<SimLocalBackend>(*this, node);
}

}  // namespace pcp::sim
