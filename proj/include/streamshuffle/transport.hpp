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

#ifndef STREAMSHUFFLE_TRANSPORT_HPP_
#define STREAMSHUFFLE_TRANSPORT_HPP_

#include <streamshuffle/reducer.hpp>
#include <streamshuffle/sim.hpp>

#include <compare>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace streamshuffle {

enum class WorkerKind { Mapper, Reducer };
const char* toString(WorkerKind kind);

/// (kind, index) names a worker slot; several instances may share it.
struct NodeId {
    WorkerKind kind = WorkerKind::Mapper;
    int index = 0;

    auto operator<=>(const NodeId&) const = default;
    std::string debugString() const;
};

struct Endpoint {
    WorkerKind workerKind = WorkerKind::Mapper;
    int index = 0;
    std::string instanceGuid;
    std::string address;

    NodeId node() const { return NodeId{workerKind, index}; }
    bool operator==(const Endpoint&) const = default;
};

using Attributes = std::map<std::string, std::string>;

struct NetworkConfig {
    double dropProbability = 0.0;
    /// One-way delivery delay, uniform in [minDelay, maxDelay].
    sim::VirtualTime minDelay = sim::milliseconds(1);
    sim::VirtualTime maxDelay = sim::milliseconds(5);
    sim::VirtualTime rpcTimeout = sim::seconds(1);
};

struct FabricStats {
    uint64_t calls = 0;
    uint64_t delivered = 0;
    uint64_t dropped = 0;
    uint64_t timeouts = 0;
    uint64_t unreachable = 0;
};

/**
 * @brief Simulated request/response network.
 *
 * Requests and responses travel as encoded frames with seeded delay and loss. Killed,
 * unbound, isolated or partitioned targets answer Unreachable; lost messages and paused
 * targets surface as Timeout at the deadline.
 */
class Fabric {
  public:
    using Handler = std::function<Blob(std::string_view requestFrame)>;

    Fabric(sim::Simulator& sim, NetworkConfig config);

    /// The handler runs in `context`; the endpoint is reachable while the context lives.
    void bind(const Endpoint& endpoint, sim::ContextPtr context, Handler handler);
    void unbind(const std::string& instanceGuid);

    void call(NodeId from, const sim::ContextPtr& fromContext, const std::string& toGuid, Blob requestFrame,
              std::function<void(RpcResult)> done);

    void setIsolated(NodeId node, bool isolated);
    void setPartitioned(NodeId a, NodeId b, bool partitioned);
    bool reachable(NodeId a, NodeId b) const;

    const NetworkConfig& config() const { return network; }
    const FabricStats& stats() const { return counters; }

  private:
    struct Binding {
        Endpoint endpoint;
        std::weak_ptr<sim::WorkerContext> context;
        Handler handler;
    };

    sim::VirtualTime delay();

    sim::Simulator& sim;
    NetworkConfig network;
    std::map<std::string, Binding> bindings;
    std::set<NodeId> isolated;
    std::set<std::pair<NodeId, NodeId>> partitions;
    FabricStats counters;
};

/**
 * @brief Group membership with delayed visibility.
 *
 * Registrations and deregistrations take effect after the propagation delay, so a listing
 * may still contain dead instances or miss fresh ones. Members are listed in registration order.
 */
class Discovery {
  public:
    struct Member {
        Endpoint endpoint;
        Attributes attributes;
    };

    Discovery(sim::Simulator& sim, sim::VirtualTime propagationDelay = sim::milliseconds(500));

    void registerEndpoint(const std::string& group, const Endpoint& endpoint, Attributes attributes = {});
    void unregisterEndpoint(const std::string& group, const std::string& instanceGuid);
    std::vector<Member> listGroup(const std::string& group) const;

    sim::VirtualTime propagationDelay() const { return delay; }

  private:
    sim::Simulator& sim;
    sim::VirtualTime delay;
    std::map<std::string, std::vector<Member>> groups;
};

/// Reducer side of the simulated network: discovery lookups plus fabric calls.
class SimShuffleChannel : public IShuffleChannel {
  public:
    SimShuffleChannel(Fabric& fabric, Discovery& discovery, std::string mapperGroup, NodeId self, sim::ContextPtr context);

    std::vector<MapperEndpoint> discoverMappers() override;
    void call(const MapperEndpoint& target, Blob requestFrame, std::function<void(RpcResult)> done) override;

  private:
    Fabric& fabric;
    Discovery& discovery;
    std::string mapperGroup;
    NodeId self;
    sim::ContextPtr context;
};

}// namespace streamshuffle

#endif// STREAMSHUFFLE_TRANSPORT_HPP_
