#include "pcp/connection.hpp"

#include "pcp/error.hpp"

namespace pcp {

Connection::Connection(Executor& ex) : ex_(ex), readable_(ex) {}

void Connection::write(ByteView data) {
  if (reset_) fail(Errc::connection_reset, "write on dropped connection: " + reset_reason_);
  if (local_ != State::open) fail(Errc::connection_closed, "write after close");
  bytes_written_ += data.size();
  transmit(data);
}

void Connection::close() {
  if (reset_ || local_ != State::open) return;
  local_ = State::closed;
  transmit_close();
  if (eof_) terminated();
}

void Connection::abort(const std::string& reason) {
  if (reset_) return;
  bool was_open = !(local_ == State::closed && eof_);
  reset_ = true;
  reset_reason_ = reason;
  local_ = State::reset;
  if (was_open) transmit_reset(reason);
  readable_.notify();
  terminated();
}

Task<Bytes> Connection::read_exact(std::size_t n, TimePoint deadline) {
  for (;;) {
    if (reset_) fail(Errc::connection_reset, "connection dropped: " + reset_reason_);
    if (inbound_.size() >= n) {
      Bytes out(inbound_.begin(), inbound_.begin() + static_cast<std::ptrdiff_t>(n));
      inbound_.erase(inbound_.begin(), inbound_.begin() + static_cast<std::ptrdiff_t>(n));
      bytes_read_ += n;
      co_return out;
    }
    if (eof_) fail(Errc::connection_closed, "end of stream");
    bool woke = co_await readable_.wait_until(deadline);
    if (!woke && inbound_.size() < n && !eof_ && !reset_) fail(Errc::timeout, "read timed out");
  }
}

Task<void> Connection::await_peer_close(TimePoint deadline) {
  for (;;) {
    if (reset_) fail(Errc::connection_reset, "connection dropped: " + reset_reason_);
    inbound_.clear();
    if (eof_) co_return;
    bool woke = co_await readable_.wait_until(deadline);
    if (!woke && !eof_ && !reset_) fail(Errc::timeout, "peer did not close in time");
  }
}

Task<void> Connection::wait_drained(std::size_t, TimePoint) { co_return; }

void Connection::deliver(ByteView data) {
  if (reset_ || eof_) return;
  inbound_.insert(inbound_.end(), data.begin(), data.end());
  readable_.notify();
}

void Connection::deliver_eof() {
  if (reset_ || eof_) return;
  eof_ = true;
  readable_.notify();
  if (local_ != State::open) terminated();
}

void Connection::deliver_reset(const std::string& reason) {
  if (reset_) return;
  reset_ = true;
  reset_reason_ = reason;
  readable_.notify();
  terminated();
}

void Connection::terminated() {
  if (terminated_) return;
  terminated_ = true;
  if (on_terminated_) {
    auto fn = std::move(on_terminated_);
    fn();
  }
}

}  // namespace pcp
