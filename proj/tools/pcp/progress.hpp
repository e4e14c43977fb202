#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

namespace pcp::cli {

/// "1.5 MiB", "512 B".
std::string format_bytes(std::uint64_t n);

/// "50% 512 B / 1.0 KiB 256 B/s". The percentage is floored, so 100% only
/// shows once done == total. A zero total counts as complete.
std::string render_progress(std::uint64_t done, std::uint64_t total, double elapsed_seconds);

/// Writes progress lines: redrawn in place on a terminal, one per change
/// otherwise. Percentages never go backwards.
class ProgressPrinter {
 public:
  ProgressPrinter(std::ostream& out, bool tty) : out_(out), tty_(tty) {}

  void update(std::uint64_t done, std::uint64_t total, double elapsed_seconds);
  /// Terminates an in-place line.
  void finish();

 private:
  std::ostream& out_;
  bool tty_;
  int last_percent_ = -1;
  std::size_t last_width_ = 0;
  bool line_open_ = false;
};

}  // namespace pcp::cli
