#pragma once

// Deterministic in-process network: virtual clock, nodes on named links,
// reliable ordered byte streams with sampled latency, a shared DHT-style
// record store, per-link local advertisements, and fault injection.
// Given the same seed and the same scripted actions, two runs produce the
// same trace.

#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "pcp/async.hpp"
#include "pcp/connection.hpp"
#include "pcp/discovery.hpp"
#include "pcp/random.hpp"
#include "pcp/trace.hpp"

namespace pcp::sim {

struct LatencyRange {
  Millis min = 0;
  Millis max = 0;
};

struct LinkConfig {
  std::string id;
  LatencyRange latency{1, 5};
  /// Probability that a discovery operation over this link is lost.
  double loss = 0.0;
  /// Bytes per millisecond; 0 means unlimited.
  std::uint64_t bandwidth = 12'500;
};

struct SimConfig {
  std::uint64_t seed = 1;
  /// Unix seconds at which the virtual clock starts.
  std::int64_t start_time = 1'617'283'473;
  std::vector<LinkConfig> links{LinkConfig{"lan0"}};
  /// One-way delay between nodes that share no link.
  LatencyRange wan_latency{20, 80};
  std::uint64_t wan_bandwidth = 2'500;
  LatencyRange dht_latency{200, 800};
  Millis dht_query_interval = 500;
  double dht_loss = 0.0;
  LatencyRange local_latency{5, 5};
  Millis local_query_interval = 500;
  /// Dials to an unreachable node give up after this long.
  Millis connect_timeout = 3'000;
};

struct NodeOptions {
  /// Reachable from outside its links only through a relay hop.
  bool behind_relay = false;
};

/// What a wire tap sees for each write: which stream, which direction,
/// and where in that direction's byte stream the chunk starts.
struct TapContext {
  std::uint64_t connection_id;
  std::string from;  // node names
  std::string to;
  std::uint64_t stream_offset;
};
using WireTap = std::function<void(const TapContext&, Bytes& data)>;

class SimNetwork;
class SimConnection;
struct Pipe;

class SimNode final : public Transport {
 public:
  SimNode(SimNetwork& net, std::size_t index, std::string name, std::set<std::string> links, NodeOptions options,
          PeerAddress address);

  Executor& executor() override;
  const PeerAddress& self() const override { return address_; }
  void listen(AcceptHandler on_accept) override;
  void stop_listening() override;
  Task<std::shared_ptr<Connection>> dial(PeerAddress to, DialOptions options = {}) override;

  const std::string& name() const { return name_; }
  std::size_t index() const { return index_; }
  const std::set<std::string>& links() const { return links_; }
  bool alive() const { return alive_; }
  bool listening() const { return static_cast<bool>(on_accept_); }
  const NodeOptions& options() const { return options_; }

  /// Takes the node off the network; its connections drop.
  void stop();

 private:
  friend class SimNetwork;
  SimNetwork& net_;
  std::size_t index_;
  std::string name_;
  std::set<std::string> links_;
  NodeOptions options_;
  PeerAddress address_;
  AcceptHandler on_accept_;
  bool alive_ = true;
};

class SimNetwork {
 public:
  explicit SimNetwork(SimConfig config);
  ~SimNetwork();
  SimNetwork(const SimNetwork&) = delete;
  SimNetwork& operator=(const SimNetwork&) = delete;

  VirtualExecutor& executor() { return ex_; }
  Trace& trace() { return trace_; }
  RandomSource& rng() { return rng_; }
  const SimConfig& config() const { return config_; }

  /// Throws Error(invalid_argument) for an unknown link.
  std::shared_ptr<SimNode> spawn_node(std::string name, std::vector<std::string> links, NodeOptions options = {});
  std::shared_ptr<SimNode> node(std::string_view name) const;
  std::shared_ptr<SimNode> node_at(const std::string& endpoint) const;

  /// Severs (on = true) or heals a link. Severing drops in-flight messages
  /// and every connection routed over the link.
  void partition(const std::string& link_id, bool on);
  bool partitioned(const std::string& link_id) const;

  void set_tap(WireTap tap) { tap_ = std::move(tap); }

  /// DHT-style backend for a node: one record store shared by every node.
  std::shared_ptr<DiscoveryBackend> dht_backend(const std::shared_ptr<SimNode>& node);
  /// mDNS-style backend for a node: advertisements stay on its links.
  std::shared_ptr<DiscoveryBackend> local_backend(const std::shared_ptr<SimNode>& node);

  Millis sample(const LatencyRange& range);

 private:
  friend class SimNode;
  friend class SimConnection;
  friend class SimDhtBackend;
  friend class SimLocalBackend;

  struct Route {
    std::vector<std::string> links;
    LatencyRange latency;
    std::uint64_t bandwidth = 0;
    bool relayed = false;
  };

  std::optional<Route> route(const SimNode& from, const SimNode& to, bool force_relay) const;
  bool has_uplink(const SimNode& node) const;
  const LinkConfig& link(const std::string& id) const;
  Task<std::shared_ptr<Connection>> dial(std::shared_ptr<SimNode> from, PeerAddress to, DialOptions options);
  void send(const std::shared_ptr<Pipe>& pipe, int direction, Bytes data);
  void send_control(const std::shared_ptr<Pipe>& pipe, int direction, bool reset, std::string reason);

  SimConfig config_;
  VirtualExecutor ex_;
  SeededRandom rng_;
  Trace trace_;
  std::map<std::string, LinkConfig> links_;
  std::set<std::string> severed_;
  std::vector<std::shared_ptr<SimNode>> nodes_;
  std::vector<std::weak_ptr<Pipe>> pipes_;
  std::uint64_t next_connection_id_ = 1;
  WireTap tap_;

  std::map<ContentKey, std::map<PeerId, ProviderRecord>> dht_records_;
  std::map<std::pair<std::string, ContentKey>, std::map<PeerId, ProviderRecord>> local_records_;
};

}  // namespace pcp::sim
