/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#ifndef STREAMSHUFFLE_SIM_HPP_
#define STREAMSHUFFLE_SIM_HPP_

#include <coroutine>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace streamshuffle::sim {

/// Virtual time in microseconds.
using VirtualTime = int64_t;

constexpr VirtualTime milliseconds(int64_t ms) { return ms * 1000; }
constexpr VirtualTime seconds(double s) { return static_cast<VirtualTime>(s * 1e6); }
constexpr double toSeconds(VirtualTime t) { return static_cast<double>(t) / 1e6; }

class Simulator;

/**
 * @brief Liveness and pause state of one worker instance.
 *
 * Events bound to a context are dropped once it is killed and held back while it is paused;
 * resume() replays the held events in their original order.
 */
class WorkerContext : public std::enable_shared_from_this<WorkerContext> {
  public:
    explicit WorkerContext(std::string name) : label(std::move(name)) {}

    const std::string& name() const { return label; }
    bool alive() const { return isAlive; }
    bool paused() const { return isPaused; }

    void kill();
    void pause() { isPaused = true; }
    void resume(Simulator& sim);

  private:
    friend class Simulator;

    std::string label;
    bool isAlive = true;
    bool isPaused = false;
    std::vector<std::function<void()>> deferred;
};

using ContextPtr = std::shared_ptr<WorkerContext>;

/**
 * @brief Single-threaded discrete-event loop. Events at equal times run in scheduling order,
 * so a fixed seed reproduces the whole run.
 */
class Simulator {
  public:
    explicit Simulator(uint64_t seed) : generator(seed) {}
    Simulator(const Simulator&) = delete;
    Simulator& operator=(const Simulator&) = delete;

    VirtualTime now() const { return currentTime; }
    std::mt19937_64& rng() { return generator; }
    /// Uniform integer in [lo, hi].
    int64_t uniform(int64_t lo, int64_t hi);
    /// True with the given probability.
    bool chance(double probability);

    /// Schedules `fn` after `delay`. With a context, the event obeys that context's kill/pause state.
    void schedule(VirtualTime delay, std::function<void()> fn, const ContextPtr& context = nullptr);

    /// Runs the next event. Returns false when the queue is empty.
    bool step();
    /// Runs events with time <= deadline, then sets the clock to the deadline.
    void runUntil(VirtualTime deadline);
    /// Runs until `done` holds (checked between events) or the queue drains. Returns done().
    bool runUntilCondition(const std::function<bool()>& done, VirtualTime deadline);

    size_t pendingEvents() const { return queue.size(); }
    uint64_t eventsExecuted() const { return executed; }

  private:
    struct Event {
        VirtualTime time;
        uint64_t sequence;
        std::function<void()> fn;
        std::weak_ptr<WorkerContext> context;
        bool bound;
    };
    struct Later {
        bool operator()(const Event& a, const Event& b) const {
            return a.time != b.time ? a.time > b.time : a.sequence > b.sequence;
        }
    };

    void dispatch(Event& event);

    std::priority_queue<Event, std::vector<Event>, Later> queue;
    VirtualTime currentTime = 0;
    uint64_t nextSequence = 0;
    uint64_t executed = 0;
    std::mt19937_64 generator;
};

// ---- Coroutines --------------------------------------------------------------------------------

template<typename T>
class Task;

namespace detail {

struct PromiseBase {
    std::coroutine_handle<> continuation;
    std::exception_ptr error;

    std::suspend_always initial_suspend() noexcept { return {}; }

    struct FinalAwaiter {
        bool await_ready() noexcept { return false; }
        template<typename Promise>
        std::coroutine_handle<> await_suspend(std::coroutine_handle<Promise> h) noexcept {
            auto next = h.promise().continuation;
            return next ? next : std::noop_coroutine();
        }
        void await_resume() noexcept {}
    };
    FinalAwaiter final_suspend() noexcept { return {}; }
    void unhandled_exception() { error = std::current_exception(); }
};

template<typename T>
struct Promise : PromiseBase {
    std::optional<T> value;
    Task<T> get_return_object();
    void return_value(T v) { value = std::move(v); }
};

template<>
struct Promise<void> : PromiseBase {
    Task<void> get_return_object();
    void return_void() {}
};

}// namespace detail

/**
 * @brief Lazily started coroutine. Awaiting it runs it to completion and yields its value;
 * a top-level task is started with start() and owns its frame until destroyed.
 */
template<typename T = void>
class [[nodiscard]] Task {
  public:
    using promise_type = detail::Promise<T>;
    using Handle = std::coroutine_handle<promise_type>;

    Task() = default;
    explicit Task(Handle h) : handle(h) {}
    Task(Task&& other) noexcept : handle(std::exchange(other.handle, nullptr)) {}
    Task& operator=(Task&& other) noexcept {
        if (this != &other) {
            reset();
            handle = std::exchange(other.handle, nullptr);
        }
        return *this;
    }
    Task(const Task&) = delete;
    Task& operator=(const Task&) = delete;
    ~Task() { reset(); }

    bool valid() const { return static_cast<bool>(handle); }
    bool done() const { return handle && handle.done(); }
    bool failed() const { return done() && handle.promise().error; }
    /// Rethrows the exception the coroutine ended with, if any.
    void rethrowIfFailed() const {
        if (failed()) {
            std::rethrow_exception(handle.promise().error);
        }
    }
    void start() { handle.resume(); }
    void reset() {
        if (handle) {
            handle.destroy();
            handle = nullptr;
        }
    }

    /// Result of a finished task.
    T result() {
        rethrowIfFailed();
        if constexpr (!std::is_void_v<T>) {
            return std::move(*handle.promise().value);
        }
    }

    bool await_ready() const noexcept { return false; }
    std::coroutine_handle<> await_suspend(std::coroutine_handle<> awaiting) noexcept {
        handle.promise().continuation = awaiting;
        return handle;
    }
    T await_resume() { return result(); }

  private:
    Handle handle;
};

namespace detail {

template<typename T>
Task<T> Promise<T>::get_return_object() {
    return Task<T>(std::coroutine_handle<Promise<T>>::from_promise(*this));
}

inline Task<void> Promise<void>::get_return_object() {
    return Task<void>(std::coroutine_handle<Promise<void>>::from_promise(*this));
}

}// namespace detail

/// Where a worker's continuations run: the simulator plus the worker's context.
struct Executor {
    Simulator* sim = nullptr;
    ContextPtr context;

    void post(VirtualTime delay, std::function<void()> fn) const { sim->schedule(delay, std::move(fn), context); }
    VirtualTime now() const { return sim->now(); }

    struct SleepAwaiter {
        const Executor& executor;
        VirtualTime delay;
        bool await_ready() const noexcept { return false; }
        void await_suspend(std::coroutine_handle<> h) const {
            executor.post(delay, [h] { h.resume(); });
        }
        void await_resume() const noexcept {}
    };
    SleepAwaiter sleep(VirtualTime delay) const { return SleepAwaiter{*this, delay}; }
};

/// Wakes every waiting coroutine of one context on notifyAll().
class Signal {
  public:
    explicit Signal(Executor executor) : executor(std::move(executor)) {}

    struct Awaiter {
        Signal& signal;
        bool await_ready() const noexcept { return false; }
        void await_suspend(std::coroutine_handle<> h) { signal.waiters.push_back(h); }
        void await_resume() const noexcept {}
    };
    Awaiter wait() { return Awaiter{*this}; }

    void notifyAll();
    size_t waiting() const { return waiters.size(); }

  private:
    Executor executor;
    std::vector<std::coroutine_handle<>> waiters;
};

}// namespace streamshuffle::sim

#endif// STREAMSHUFFLE_SIM_HPP_
