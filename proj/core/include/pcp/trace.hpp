#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "pcp/async.hpp"
#include "pcp/crypto.hpp"

namespace pcp {

struct TraceEvent {
  TimePoint at;
  std::string node;
  std::string event;
  std::string detail;
};

/// Line-delimited structured event log. Simulated runs record every event
/// and hash the log to compare runs; the CLI streams lines to stderr.
class Trace {
 public:
  explicit Trace(const Executor& clock, bool record = true);

  void emit(std::string_view node, std::string_view event, std::string detail = {});

  void set_sink(std::function<void(const std::string& line)> sink) { sink_ = std::move(sink); }

  const std::vector<TraceEvent>& events() const { return events_; }
  std::vector<TraceEvent> select(std::string_view event) const;
  std::string to_jsonl() const;
  crypto::Digest hash() const;

  /// {"t":..,"node":..,"event":..,"detail":..} on one line, no newline.
  static std::string format(const TraceEvent& e);

 private:
  const Executor& clock_;
  bool record_;
  std::vector<TraceEvent> events_;
  std::function<void(const std::string&)> sink_;
};

}  // namespace pcp
