#include "pcp/trace.hpp"

#include <nlohmann/json.hpp>

#include "pcp/peer.hpp"
#include "pcp/error.hpp"

namespace pcp {

PeerId PeerId::random(RandomSource& rng) {
  FixedBytes<kSize> b{};
  rng.fill(b);
  return PeerId(b);
}

PeerId PeerId::from_hex(std::string_view hex) {
  auto raw = pcp::from_hex(hex);
  if (raw.size() != kSize) fail(Errc::parse_error, "peer id must be 16 bytes");
  FixedBytes<kSize> b{};
  std::copy(raw.begin(), raw.end(), b.begin());
  return PeerId(b);
}

Trace::Trace(const Executor& clock, bool record) : clock_(clock), record_(record) {}

void Trace::emit(std::string_view node, std::string_view event, std::string detail) {
  TraceEvent e{clock_.now(), std::string(node), std::string(event), std::move(detail)};
  if (sink_) sink_(format(e));
  if (record_) events_.push_back(std::move(e));
}

std::vector<TraceEvent> Trace::select(std::string_view event) const {
  std::vector<TraceEvent> out;
  for (const auto& e : events_) {
    if (e.event == event) out.push_back(e);
  }
  return out;
}

std::string Trace::format(const TraceEvent& e) {
  // ordered_json keeps the field order fixed for hashing.
  nlohmann::ordered_json j;
  j["t"] = e.at;
  j["node"] = e.node;
  j["event"] = e.event;
  j["detail"] = e.detail;
  return j.dump();
}

std::string Trace::to_jsonl() const {
  std::string out;
  for (const auto& e : events_) {
    out += format(e);
    out.push_back('\n');
  }
  return out;
}

crypto::Digest Trace::hash() const {
  crypto::Sha256 h;
  for (const auto& e : events_) {
    auto line = format(e);
    line.push_back('\n');
    h.update(as_bytes(line));
  }
  return h.finish();
}

}  // namespace pcp
