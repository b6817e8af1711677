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

#include <streamshuffle/errors.hpp>
#include <streamshuffle/transport.hpp>

#include <algorithm>

namespace streamshuffle {

const char* toString(WorkerKind kind) {
    return kind == WorkerKind::Mapper ? "mapper" : "reducer";
}

std::string NodeId::debugString() const {
    return std::string(toString(kind)) + ":" + std::to_string(index);
}

// ---- Fabric ------------------------------------------------------------------------------------

Fabric::Fabric(sim::Simulator& sim, NetworkConfig config) : sim(sim), network(config) {
    if (network.dropProbability < 0.0 || network.dropProbability >= 1.0) {
        throw ConfigError("drop probability must be in [0, 1)");
    }
    if (network.minDelay < 0 || network.maxDelay < network.minDelay) {
        throw ConfigError("delivery delay range is invalid");
    }
    if (network.rpcTimeout <= 0) {
        throw ConfigError("rpc timeout must be positive");
    }
}

void Fabric::bind(const Endpoint& endpoint, sim::ContextPtr context, Handler handler) {
    bindings[endpoint.instanceGuid] = Binding{endpoint, context, std::move(handler)};
}

void Fabric::unbind(const std::string& instanceGuid) {
    bindings.erase(instanceGuid);
}

void Fabric::setIsolated(NodeId node, bool on) {
    if (on) {
        isolated.insert(node);
    } else {
        isolated.erase(node);
    }
}

void Fabric::setPartitioned(NodeId a, NodeId b, bool on) {
    auto key = std::minmax(a, b);
    if (on) {
        partitions.insert(key);
    } else {
        partitions.erase(key);
    }
}

bool Fabric::reachable(NodeId a, NodeId b) const {
    return !isolated.count(a) && !isolated.count(b) && !partitions.count(std::minmax(a, b));
}

sim::VirtualTime Fabric::delay() {
    return sim.uniform(network.minDelay, network.maxDelay);
}

void Fabric::call(NodeId from, const sim::ContextPtr& fromContext, const std::string& toGuid, Blob requestFrame,
                  std::function<void(RpcResult)> done) {
    ++counters.calls;
    struct PendingCall {
        bool finished = false;
        std::function<void(RpcResult)> done;
    };
    auto pending = std::make_shared<PendingCall>();
    pending->done = std::move(done);
    // First completion wins; later ones (a late response after the timeout) are ignored.
    auto complete = [pending](RpcResult result) {
        if (!pending->finished) {
            pending->finished = true;
            pending->done(std::move(result));
        }
    };
    auto failLater = [this, fromContext, complete](RpcFailure failure) {
        sim.schedule(delay(), [this, complete, failure] {
            if (failure == RpcFailure::Unreachable) {
                ++counters.unreachable;
            }
            complete(failure);
        }, fromContext);
    };

    sim.schedule(network.rpcTimeout, [this, pending, complete] {
        if (!pending->finished) {
            ++counters.timeouts;
        }
        complete(RpcFailure::Timeout);
    }, fromContext);

    auto target = bindings.find(toGuid);
    if (target == bindings.end() || !reachable(from, target->second.endpoint.node())) {
        failLater(RpcFailure::Unreachable);
        return;
    }
    if (sim.chance(network.dropProbability)) {
        ++counters.dropped;
        return;
    }

    auto request = std::make_shared<Blob>(std::move(requestFrame));
    sim.schedule(delay(), [this, from, fromContext, toGuid, request, complete, failLater] {
        auto it = bindings.find(toGuid);
        auto targetContext = it == bindings.end() ? nullptr : it->second.context.lock();
        if (!targetContext || !targetContext->alive() || !reachable(from, it->second.endpoint.node())) {
            failLater(RpcFailure::Unreachable);
            return;
        }
        sim.schedule(0, [this, toGuid, fromContext, request, complete] {
            auto binding = bindings.find(toGuid);
            if (binding == bindings.end()) {
                return;
            }
            Blob response;
            try {
                response = binding->second.handler(*request);
            } catch (const std::exception& e) {
                response = encodeErrorFrame(RpcErrorBody{RpcErrorCode::Unavailable, e.what()});
            }
            if (sim.chance(network.dropProbability)) {
                ++counters.dropped;
                return;
            }
            auto shared = std::make_shared<Blob>(std::move(response));
            sim.schedule(delay(), [this, shared, complete] {
                ++counters.delivered;
                complete(std::move(*shared));
            }, fromContext);
        }, targetContext);
    });
}

// ---- Discovery ---------------------------------------------------------------------------------

Discovery::Discovery(sim::Simulator& sim, sim::VirtualTime propagationDelay) : sim(sim), delay(propagationDelay) {
    if (delay < 0) {
        throw ConfigError("propagation delay must be non-negative");
    }
}

void Discovery::registerEndpoint(const std::string& group, const Endpoint& endpoint, Attributes attributes) {
    sim.schedule(delay, [this, group, member = Member{endpoint, std::move(attributes)}] {
        auto& members = groups[group];
        auto same = [&](const Member& m) { return m.endpoint.instanceGuid == member.endpoint.instanceGuid; };
        members.erase(std::remove_if(members.begin(), members.end(), same), members.end());
        members.push_back(member);
    });
}

void Discovery::unregisterEndpoint(const std::string& group, const std::string& instanceGuid) {
    sim.schedule(delay, [this, group, instanceGuid] {
        auto& members = groups[group];
        auto same = [&](const Member& m) { return m.endpoint.instanceGuid == instanceGuid; };
        members.erase(std::remove_if(members.begin(), members.end(), same), members.end());
    });
}

std::vector<Discovery::Member> Discovery::listGroup(const std::string& group) const {
    auto it = groups.find(group);
    return it == groups.end() ? std::vector<Member>{} : it->second;
}

// ---- SimShuffleChannel -------------------------------------------------------------------------

SimShuffleChannel::SimShuffleChannel(Fabric& fabric, Discovery& discovery, std::string mapperGroup, NodeId self,
                                     sim::ContextPtr context)
    : fabric(fabric), discovery(discovery), mapperGroup(std::move(mapperGroup)), self(self), context(std::move(context)) {}

std::vector<MapperEndpoint> SimShuffleChannel::discoverMappers() {
    std::vector<MapperEndpoint> result;
    for (const auto& member : discovery.listGroup(mapperGroup)) {
        if (member.endpoint.workerKind == WorkerKind::Mapper) {
            result.push_back(MapperEndpoint{member.endpoint.index, member.endpoint.instanceGuid, member.endpoint.address});
        }
    }
    return result;
}

void SimShuffleChannel::call(const MapperEndpoint& target, Blob requestFrame, std::function<void(RpcResult)> done) {
    fabric.call(self, context, target.guid, std::move(requestFrame), std::move(done));
}

}// namespace streamshuffle
