#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>

#include "pcp/async.hpp"
#include "pcp/bytes.hpp"
#include "pcp/peer.hpp"

namespace pcp {

/// Ordered, reliable, duplex byte stream. Concrete transports push inbound
/// bytes with deliver*(); readers pull with read_exact().
class Connection {
 public:
  enum class State { open, closed, reset };

  explicit Connection(Executor& ex);
  virtual ~Connection() = default;
  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;

  Executor& executor() const { return ex_; }

  /// Queues bytes for the peer. Throws Error(connection_reset) after a drop
  /// and Error(connection_closed) after close().
  void write(ByteView data);
  /// Graceful close: the peer reads everything written, then end-of-stream.
  void close();
  /// Drops the connection; both ends observe a terminal reset.
  void abort(const std::string& reason);

  /// Waits for exactly n bytes. Throws Error(timeout) at the deadline,
  /// Error(connection_closed) on end-of-stream, Error(connection_reset) on drop.
  Task<Bytes> read_exact(std::size_t n, TimePoint deadline = kNever);
  /// Waits for end-of-stream from the peer, discarding stray bytes.
  Task<void> await_peer_close(TimePoint deadline = kNever);
  /// Waits until the transport has at most max_pending bytes unsent.
  virtual Task<void> wait_drained(std::size_t max_pending, TimePoint deadline);

  bool is_open() const { return local_ == State::open && !reset_; }
  bool was_reset() const { return reset_; }
  const std::string& reset_reason() const { return reset_reason_; }

  std::uint64_t bytes_written() const { return bytes_written_; }
  std::uint64_t bytes_read() const { return bytes_read_; }

  /// Remote peer id when the transport knows it (handshake may refine it).
  const PeerAddress& remote() const { return remote_; }
  void set_remote(PeerAddress a) { remote_ = std::move(a); }

  /// Invoked once when the connection ends for any reason.
  void on_terminated(std::function<void()> fn) { on_terminated_ = std::move(fn); }

 protected:
  virtual void transmit(ByteView data) = 0;
  virtual void transmit_close() = 0;
  virtual void transmit_reset(const std::string& reason) = 0;

  void deliver(ByteView data);
  void deliver_eof();
  void deliver_reset(const std::string& reason);
  bool peer_closed() const { return eof_; }

 private:
  void terminated();

  Executor& ex_;
  State local_ = State::open;
  bool eof_ = false;
  bool reset_ = false;
  std::string reset_reason_;
  std::deque<std::uint8_t> inbound_;
  Signal readable_;
  PeerAddress remote_;
  std::uint64_t bytes_written_ = 0;
  std::uint64_t bytes_read_ = 0;
  std::function<void()> on_terminated_;
  bool terminated_ = false;
};

struct DialOptions {
  /// Route through a relay hop even when a direct path exists.
  bool relay = false;
};

/// One node's view of the network: accept inbound connections and dial out.
class Transport {
 public:
  using AcceptHandler = std::function<void(std::shared_ptr<Connection>)>;

  virtual ~Transport() = default;

  virtual Executor& executor() = 0;
  virtual const PeerAddress& self() const = 0;
  virtual void listen(AcceptHandler on_accept) = 0;
  virtual void stop_listening() = 0;
  /// Throws Error(dial_error) when the target is unreachable or not listening.
  virtual Task<std::shared_ptr<Connection>> dial(PeerAddress to, DialOptions options = {}) = 0;
};

}  // namespace pcp
