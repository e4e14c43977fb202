#pragma once

// Single-threaded cooperative runtime: an Executor owns time and the run
// queue, protocol code is written as C++20 coroutines (Task<T>). Every
// wake-up goes through the executor queue, never inline, so the order of
// events depends only on the executor.

#include <coroutine>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

namespace pcp {

/// Unix time in milliseconds.
using TimePoint = std::int64_t;
using Millis = std::int64_t;

inline constexpr TimePoint kNever = std::numeric_limits<TimePoint>::max();

inline TimePoint deadline_after(TimePoint now, Millis delay) {
  if (delay >= kNever - now) return kNever;
  return now + delay;
}

class Executor {
 public:
  using TimerId = std::uint64_t;

  virtual ~Executor() = default;

  virtual TimePoint now() const = 0;
  /// Callbacks due at the same time run in scheduling order.
  virtual TimerId schedule_at(TimePoint when, std::function<void()> fn) = 0;
  virtual void cancel(TimerId id) = 0;
  /// Runs fn once every callback already due at the current instant has run.
  virtual void at_tick_end(std::function<void()> fn) = 0;
  /// Drives the loop until done() returns true or nothing is left to run.
  virtual void run_until(const std::function<bool()>& done) = 0;

  TimerId post(std::function<void()> fn) { return schedule_at(now(), std::move(fn)); }
  std::int64_t now_seconds() const { return now() / 1000; }
};

/// Deterministic virtual clock. Time jumps to the next scheduled event.
class VirtualExecutor final : public Executor {
 public:
  explicit VirtualExecutor(TimePoint start = 0) : now_(start) {}

  TimePoint now() const override { return now_; }
  TimerId schedule_at(TimePoint when, std::function<void()> fn) override;
  void cancel(TimerId id) override;
  void at_tick_end(std::function<void()> fn) override;
  void run_until(const std::function<bool()>& done) override;

  /// Runs one callback; false when the queue is empty.
  bool run_one();
  void run_until_idle();
  /// Runs everything due up to and including t, then sets the clock to t.
  void advance_to(TimePoint t);
  std::size_t pending() const { return queue_.size() + tick_end_.size(); }

 private:
  using Key = std::pair<TimePoint, TimerId>;
  TimePoint now_;
  TimerId next_id_ = 1;
  std::map<Key, std::function<void()>> queue_;
  std::map<TimerId, TimePoint> index_;
  std::vector<std::function<void()>> tick_end_;
};

namespace detail {

struct PromiseBase {
  std::coroutine_handle<> continuation;
  std::exception_ptr error;

  struct FinalAwaiter {
    bool await_ready() const noexcept { return false; }
    template <typename P>
    std::coroutine_handle<> await_suspend(std::coroutine_handle<P> h) noexcept {
      auto next = h.promise().continuation;
      return next ? next : std::noop_coroutine();
    }
    void await_resume() const noexcept {}
  };

  std::suspend_always initial_suspend() noexcept { return {}; }
  FinalAwaiter final_suspend() noexcept { return {}; }
  void unhandled_exception() noexcept { error = std::current_exception(); }
};

}  // namespace detail

/// Lazily started coroutine; runs when awaited.
template <typename T = void>
class [[nodiscard]] Task {
 public:
  struct promise_type : detail::PromiseBase {
    std::optional<T> value;
    Task get_return_object() { return Task(std::coroutine_handle<promise_type>::from_promise(*this)); }
    template <typename U>
    void return_value(U&& v) { value.emplace(std::forward<U>(v)); }
  };

  Task() = default;
  Task(Task&& other) noexcept : handle_(std::exchange(other.handle_, {})) {}
  Task& operator=(Task&& other) noexcept {
    if (this != &other) {
      reset();
      handle_ = std::exchange(other.handle_, {});
    }
    return *this;
  }
  Task(const Task&) = delete;
  Task& operator=(const Task&) = delete;
  ~Task() { reset(); }

  bool await_ready() const noexcept { return !handle_ || handle_.done(); }
  std::coroutine_handle<> await_suspend(std::coroutine_handle<> awaiting) noexcept {
    handle_.promise().continuation = awaiting;
    return handle_;
  }
  T await_resume() {
    auto& p = handle_.promise();
    if (p.error) std::rethrow_exception(p.error);
    return std::move(*p.value);
  }

 private:
  explicit Task(std::coroutine_handle<promise_type> h) : handle_(h) {}
  void reset() {
    if (handle_) handle_.destroy();
    handle_ = {};
  }
  std::coroutine_handle<promise_type> handle_;
};

template <>
class [[nodiscard]] Task<void> {
 public:
  struct promise_type : detail::PromiseBase {
    Task get_return_object() { return Task(std::coroutine_handle<promise_type>::from_promise(*this)); }
    void return_void() noexcept {}
  };

  Task() = default;
  Task(Task&& other) noexcept : handle_(std::exchange(other.handle_, {})) {}
  Task& operator=(Task&& other) noexcept {
    if (this != &other) {
      reset();
      handle_ = std::exchange(other.handle_, {});
    }
    return *this;
  }
  Task(const Task&) = delete;
  Task& operator=(const Task&) = delete;
  ~Task() { reset(); }

  bool await_ready() const noexcept { return !handle_ || handle_.done(); }
  std::coroutine_handle<> await_suspend(std::coroutine_handle<> awaiting) noexcept {
    handle_.promise().continuation = awaiting;
    return handle_;
  }
  void await_resume() {
    if (handle_.promise().error) std::rethrow_exception(handle_.promise().error);
  }

 private:
  explicit Task(std::coroutine_handle<promise_type> h) : handle_(h) {}
  void reset() {
    if (handle_) handle_.destroy();
    handle_ = {};
  }
  std::coroutine_handle<promise_type> handle_;
};

using ErrorHandler = std::function<void(std::exception_ptr)>;

/// Starts task immediately and lets it run to completion on its own.
/// Exceptions escaping the task go to on_error (or are swallowed).
void spawn(Task<void> task, ErrorHandler on_error = {});

/// Suspends the current coroutine until the executor reaches `when`.
class SleepAwaiter {
 public:
  SleepAwaiter(Executor& ex, TimePoint when) : ex_(ex), when_(when) {}
  bool await_ready() const noexcept { return when_ <= ex_.now(); }
  void await_suspend(std::coroutine_handle<> h) {
    ex_.schedule_at(when_, [h] { h.resume(); });
  }
  void await_resume() const noexcept {}

 private:
  Executor& ex_;
  TimePoint when_;
};

inline SleepAwaiter sleep_until(Executor& ex, TimePoint when) { return {ex, when}; }
inline SleepAwaiter sleep_for(Executor& ex, Millis delay) {
  return {ex, deadline_after(ex.now(), delay)};
}

struct SignalWaiter {
  std::coroutine_handle<> handle;
  Executor::TimerId timer = 0;
  bool has_timer = false;
  bool done = false;
  bool notified = false;
};

/// Edge-triggered wake-up for a single waiting coroutine. notify() without
/// a waiter is a no-op; waiters re-check their condition in a loop.
class Signal {
 public:
  explicit Signal(Executor& ex) : ex_(&ex) {}
  Signal(const Signal&) = delete;
  Signal& operator=(const Signal&) = delete;

  void notify();
  bool has_waiter() const { return waiter_ && !waiter_->done; }

  class Awaiter {
   public:
    Awaiter(Signal& s, TimePoint deadline) : signal_(s), deadline_(deadline) {}
    bool await_ready() const noexcept { return false; }
    void await_suspend(std::coroutine_handle<> h);
    /// True when woken by notify(), false on deadline.
    bool await_resume() const noexcept { return state_->notified; }

   private:
    Signal& signal_;
    TimePoint deadline_;
    std::shared_ptr<SignalWaiter> state_;
  };

  Awaiter wait_until(TimePoint deadline = kNever) { return Awaiter(*this, deadline); }

 private:
  friend class Awaiter;
  Executor* ex_;
  std::shared_ptr<SignalWaiter> waiter_;
};

/// Unbounded FIFO with one consumer.
template <typename T>
class AsyncQueue {
 public:
  explicit AsyncQueue(Executor& ex) : signal_(ex) {}

  void push(T value) {
    if (closed_) return;
    items_.push_back(std::move(value));
    signal_.notify();
  }

  void close() {
    closed_ = true;
    signal_.notify();
  }

  bool closed() const { return closed_; }
  bool empty() const { return items_.empty(); }

  /// Next item; nullopt once closed and drained, or when the deadline passes.
  Task<std::optional<T>> pop(TimePoint deadline = kNever) {
    for (;;) {
      if (!items_.empty()) {
        std::optional<T> v(std::move(items_.front()));
        items_.pop_front();
        co_return v;
      }
      if (closed_) co_return std::nullopt;
      bool woke = co_await signal_.wait_until(deadline);
      if (!woke && items_.empty()) co_return std::nullopt;
    }
  }

 private:
  std::deque<T> items_;
  bool closed_ = false;
  Signal signal_;
};

namespace detail {
template <typename T>
Task<void> capture_result(Task<T> task, std::optional<T>& out, std::exception_ptr& err, bool& done) {
  try {
    out.emplace(co_await task);
  } catch (...) {
    err = std::current_exception();
  }
  done = true;
}

inline Task<void> capture_void(Task<void> task, std::exception_ptr& err, bool& done) {
  try {
    co_await task;
  } catch (...) {
    err = std::current_exception();
  }
  done = true;
}
}  // namespace detail

/// Runs the executor until task finishes and returns its result.
template <typename T>
T block_on(Executor& ex, Task<T> task) {
  std::optional<T> out;
  std::exception_ptr err;
  bool done = false;
  spawn(detail::capture_result(std::move(task), out, err, done));
  ex.run_until([&] { return done; });
  if (err) std::rethrow_exception(err);
  if (!out) throw std::logic_error("block_on: executor ran dry before the task finished");
  return std::move(*out);
}

inline void block_on(Executor& ex, Task<void> task) {
  std::exception_ptr err;
  bool done = false;
  spawn(detail::capture_void(std::move(task), err, done));
  ex.run_until([&] { return done; });
  if (err) std::rethrow_exception(err);
  if (!done) throw std::logic_error("block_on: executor ran dry before the task finished");
}

}  // namespace pcp
