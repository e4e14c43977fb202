#include "pcp/async.hpp"

namespace pcp {

Executor::TimerId VirtualExecutor::schedule_at(TimePoint when, std::function<void()> fn) {
  if (when < now_) when = now_;
  TimerId id = next_id_++;
  queue_.emplace(Key{when, id}, std::move(fn));
  index_.emplace(id, when);
  return id;
}

void VirtualExecutor::cancel(TimerId id) {
  auto it = index_.find(id);
  if (it == index_.end()) return;
  queue_.erase(Key{it->second, id});
  index_.erase(it);
}

void VirtualExecutor::at_tick_end(std::function<void()> fn) {
  tick_end_.push_back(std::move(fn));
}

bool VirtualExecutor::run_one() {
  // Tick-end callbacks run before time moves forward.
  if (!tick_end_.empty() && (queue_.empty() || queue_.begin()->first.first > now_)) {
    auto batch = std::move(tick_end_);
    tick_end_.clear();
    for (auto& fn : batch) fn();
    return true;
  }
  if (queue_.empty()) return false;
  auto node = queue_.extract(queue_.begin());
  index_.erase(node.key().second);
  now_ = node.key().first;
  node.mapped()();
  return true;
}

void VirtualExecutor::run_until_idle() {
  while (run_one()) {
  }
}

void VirtualExecutor::run_until(const std::function<bool()>& done) {
  while (!done() && run_one()) {
  }
}

void VirtualExecutor::advance_to(TimePoint t) {
  for (;;) {
    bool due = !queue_.empty() && queue_.begin()->first.first <= t;
    if (!due && tick_end_.empty()) break;
    if (!due && !tick_end_.empty()) {
      run_one();
      continue;
    }
    run_one();
  }
  if (t > now_) now_ = t;
}

namespace {

struct Detached {
  struct promise_type {
    Detached get_return_object() noexcept { return {}; }
    std::suspend_never initial_suspend() noexcept { return {}; }
    std::suspend_never final_suspend() noexcept { return {}; }
    void return_void() noexcept {}
    void unhandled_exception() noexcept { std::terminate(); }
  };
};

Detached run_detached(Task<void> task, ErrorHandler on_error) {
  try {
    co_await task;
  } catch (...) {
    if (on_error) on_error(std::current_exception());
  }
}

}  // namespace

void spawn(Task<void> task, ErrorHandler on_error) {
  run_detached(std::move(task), std::move(on_error));
}

void Signal::notify() {
  if (!waiter_ || waiter_->done) return;
  auto w = std::move(waiter_);
  w->done = true;
  w->notified = true;
  if (w->has_timer) ex_->cancel(w->timer);
  auto h = w->handle;
  ex_->post([h] { h.resume(); });
}

void Signal::Awaiter::await_suspend(std::coroutine_handle<> h) {
  state_ = std::make_shared<SignalWaiter>();
  state_->handle = h;
  signal_.waiter_ = state_;
  if (deadline_ != kNever) {
    std::weak_ptr<SignalWaiter> weak = state_;
    state_->has_timer = true;
    state_->timer = signal_.ex_->schedule_at(deadline_, [weak] {
      auto w = weak.lock();
      if (!w || w->done) return;
      w->done = true;
      w->handle.resume();
    });
  }
}

}  // namespace pcp
