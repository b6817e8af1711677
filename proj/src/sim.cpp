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

#include <streamshuffle/sim.hpp>

namespace streamshuffle::sim {

void WorkerContext::kill() {
    isAlive = false;
    isPaused = false;
    deferred.clear();
}

void WorkerContext::resume(Simulator& sim) {
    if (!isPaused) {
        return;
    }
    isPaused = false;
    auto held = std::move(deferred);
    deferred.clear();
    auto self = shared_from_this();
    for (auto& fn : held) {
        sim.schedule(0, std::move(fn), self);
    }
}

int64_t Simulator::uniform(int64_t lo, int64_t hi) {
    return std::uniform_int_distribution<int64_t>(lo, hi)(generator);
}

bool Simulator::chance(double probability) {
    if (probability <= 0.0) {
        return false;
    }
    return std::uniform_real_distribution<double>(0.0, 1.0)(generator) < probability;
}

void Simulator::schedule(VirtualTime delay, std::function<void()> fn, const ContextPtr& context) {
    queue.push(Event{currentTime + std::max<VirtualTime>(0, delay), nextSequence++, std::move(fn), context, context != nullptr});
}

void Simulator::dispatch(Event& event) {
    if (event.bound) {
        auto context = event.context.lock();
        if (!context || !context->alive()) {
            return;
        }
        if (context->paused()) {
            context->deferred.push_back(std::move(event.fn));
            return;
        }
    }
    ++executed;
    event.fn();
}

bool Simulator::step() {
    if (queue.empty()) {
        return false;
    }
    auto event = std::move(const_cast<Event&>(queue.top()));
    queue.pop();
    currentTime = event.time;
    dispatch(event);
    return true;
}

void Simulator::runUntil(VirtualTime deadline) {
    while (!queue.empty() && queue.top().time <= deadline) {
        step();
    }
    currentTime = std::max(currentTime, deadline);
}

bool Simulator::runUntilCondition(const std::function<bool()>& done, VirtualTime deadline) {
    while (!done()) {
        if (queue.empty() || queue.top().time > deadline) {
            return done();
        }
        step();
    }
    return true;
}

void Signal::notifyAll() {
    auto woken = std::move(waiters);
    waiters.clear();
    for (auto h : woken) {
        executor.post(0, [h] { h.resume(); });
    }
}

}// namespace streamshuffle::sim
