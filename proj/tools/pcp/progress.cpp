#include "progress.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace pcp::cli {

namespace {

int percent_of(std::uint64_t done, std::uint64_t total) {
  if (total == 0 || done >= total) return 100;
  auto p = static_cast<int>(std::floor(static_cast<long double>(done) * 100.0L / static_cast<long double>(total)));
  return p > 99 ? 99 : p;
}

}  // namespace

std::string format_bytes(std::uint64_t n) {
  static const char* units[] = {"B", "KiB", "MiB", "GiB", "TiB"};
  if (n < 1024) return std::to_string(n) + " B";
  double v = static_cast<double>(n);
  int u = 0;
  while (v >= 1024.0 && u < 4) {
    v /= 1024.0;
    ++u;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f %s", v, units[u]);
  return buf;
}

std::string render_progress(std::uint64_t done, std::uint64_t total, double elapsed_seconds) {
  std::uint64_t rate = 0;
  if (elapsed_seconds > 0) rate = static_cast<std::uint64_t>(static_cast<double>(done) / elapsed_seconds);
  return std::to_string(percent_of(done, total)) + "% " + format_bytes(done) + " / " + format_bytes(total) + " " +
         format_bytes(rate) + "/s";
}

void ProgressPrinter::update(std::uint64_t done, std::uint64_t total, double elapsed_seconds) {
  int pct = percent_of(done, total);
  if (pct <= last_percent_) return;
  last_percent_ = pct;
  std::string line = render_progress(done, total, elapsed_seconds);
  if (tty_) {
    std::string pad = line.size() < last_width_ ? std::string(last_width_ - line.size(), ' ') : "";
    out_ << '\r' << line << pad;
    last_width_ = line.size();
    line_open_ = true;
    if (pct == 100) finish();
  } else {
    out_ << line << '\n';
  }
  out_.flush();
}

void ProgressPrinter::finish() {
  if (line_open_) out_ << '\n';
  line_open_ = false;
  out_.flush();
}

}  // namespace pcp::cli
