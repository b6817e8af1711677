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

#ifndef STREAMSHUFFLE_REDUCER_HPP_
#define STREAMSHUFFLE_REDUCER_HPP_

#include <streamshuffle/sim.hpp>
#include <streamshuffle/state_store.hpp>
#include <streamshuffle/user_api.hpp>
#include <streamshuffle/wire.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace streamshuffle {

/// One row of the reducer state table; reducer_index is the key column.
struct ReducerPersistentState {
    int64_t reducerIndex = 0;
    /// committed_row_indices[m]: last shuffle index of mapper m applied by this reducer.
    std::vector<int64_t> committedRowIndices;

    bool operator==(const ReducerPersistentState&) const = default;

    static ReducerPersistentState initial(int64_t reducerIndex, int mapperCount);
    Row toRow() const;
    static ReducerPersistentState fromRow(const Row& row);
    static TableSchema tableSchema();
    static Row key(int64_t reducerIndex);
};

/// committed_row_indices is stored as a String: u32 count, then one i64 per mapper.
Blob encodeIndexList(const std::vector<int64_t>& values);
std::vector<int64_t> decodeIndexList(std::string_view bytes);

/// A mapper instance as published in discovery.
struct MapperEndpoint {
    int mapperIndex = 0;
    std::string guid;
    std::string address;
};

enum class RpcFailure { Timeout, Unreachable };
const char* toString(RpcFailure failure);

/// A response frame, or a transport failure.
using RpcResult = std::variant<RpcFailure, Blob>;

/// How a reducer reaches its mappers.
class IShuffleChannel {
  public:
    virtual ~IShuffleChannel() = default;
    virtual std::vector<MapperEndpoint> discoverMappers() = 0;
    /// Sends a request frame. `done` runs exactly once, possibly before call() returns.
    virtual void call(const MapperEndpoint& target, Blob requestFrame, std::function<void(RpcResult)> done) = 0;
};

enum class CommitOrder {
    /// User writes and the state advance in one transaction.
    Atomic,
    /// Broken on purpose: the state commits first, user writes after a gap.
    StateFirst,
    /// Broken on purpose: user writes commit first, the state after a gap.
    UserFirst,
};

struct ReducerConfig {
    int64_t maxRowsPerMapperPerRound = 512;
    CommitOrder commitOrder = CommitOrder::Atomic;
    /// Gap between the two commits of the broken orderings.
    sim::VirtualTime brokenCommitGap = sim::milliseconds(20);
};

enum class ReducerOutcome { Committed, NothingToDo, SplitBrainSkip, TransientError };
const char* toString(ReducerOutcome outcome);

/// What one round saw from one mapper.
struct MapperPoll {
    int mapperIndex = 0;
    std::string mapperGuid;
    bool discovered = false;
    std::optional<RpcFailure> failure;
    std::optional<RpcErrorBody> error;
    bool malformed = false;
    GetRowsResponse response;
    Rowset rows;
};

struct RoundReport {
    uint64_t round = 0;
    ReducerOutcome outcome = ReducerOutcome::NothingToDo;
    ReducerPersistentState before;
    ReducerPersistentState after;
    std::vector<MapperPoll> polls;
};

struct ReducerStats {
    uint64_t rounds = 0;
    uint64_t commits = 0;
    uint64_t nothingToDo = 0;
    uint64_t splitBrainSkips = 0;
    uint64_t transientErrors = 0;
    uint64_t userExceptions = 0;
    uint64_t rowsReduced = 0;
};

/**
 * @brief One reducer instance. step() runs one fetch-reduce-commit round.
 *
 * The persisted committed_row_indices only advance together with the user's writes,
 * and only if no other instance moved them since the round started.
 */
class ReducerRuntime {
  public:
    /// Picks one of `candidates` endpoints of the same mapper index.
    using EndpointChooser = std::function<size_t(size_t candidates)>;

    ReducerRuntime(ReducerSpec spec, ReducerConfig config, StateStore& store, IShuffleChannel& channel, IReducerPtr reducer,
                   sim::Executor executor);

    sim::Task<ReducerOutcome> step();

    /// Committed state outside any transaction (initial state if absent). Throws StateUnavailable.
    ReducerPersistentState fetchState() const;
    void setEndpointChooser(EndpointChooser fn) { chooser = std::move(fn); }
    void setRoundObserver(std::function<void(const RoundReport&)> fn) { onRound = std::move(fn); }

    const ReducerSpec& spec() const { return reducerSpec; }
    const ReducerStats& stats() const { return counters; }

  private:
    sim::Task<ReducerOutcome> runRound(RoundReport& report);
    std::map<int, MapperEndpoint> chooseEndpoints();
    /// Re-reads the state inside `tx` and stages the advance. False on a split brain.
    bool stageStateAdvance(Transaction& tx, const ReducerPersistentState& expected, const ReducerPersistentState& next);

    ReducerSpec reducerSpec;
    ReducerConfig config;
    StateStore& store;
    IShuffleChannel& channel;
    IReducerPtr reducer;
    sim::Executor executor;
    EndpointChooser chooser;
    std::function<void(const RoundReport&)> onRound;
    ReducerStats counters;
};

}// namespace streamshuffle

#endif// STREAMSHUFFLE_REDUCER_HPP_
