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

#ifndef STREAMSHUFFLE_SCENARIO_HPP_
#define STREAMSHUFFLE_SCENARIO_HPP_

#include <streamshuffle/reducer.hpp>
#include <streamshuffle/sim.hpp>
#include <streamshuffle/transport.hpp>

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace streamshuffle {

using sim::VirtualTime;

enum class SourceKind { OrderedTable, OffsetLog };

struct InputSpec {
    SourceKind source = SourceKind::OrderedTable;
    /// Total input rows, spread round-robin over the partitions.
    int64_t rows = 1000;
    /// Extra bytes carried by every input row.
    int64_t payloadBytes = 0;
    int64_t rowsPerAppend = 10;
    VirtualTime appendInterval = sim::milliseconds(20);
    /// Sub-streams per partition for the offset-log source.
    int subStreams = 3;
    int users = 50;
    int clusters = 4;
    double missingUserFraction = 0.1;
};

struct MapperTuning {
    int64_t maxBatchRows = 1024;
    uint64_t memoryLimitBytes = 64ull << 20;
    VirtualTime backoff = sim::milliseconds(100);
    VirtualTime splitBrainDelay = sim::seconds(5);
    VirtualTime trimPeriod = sim::seconds(2);
    /// Delay before a requested source trim takes effect.
    VirtualTime readerTrimDelay = sim::milliseconds(50);
    bool persistShuffle = false;
};

struct ReducerTuning {
    int64_t maxRowsPerMapperPerRound = 512;
    VirtualTime backoff = sim::milliseconds(100);
    CommitOrder commitOrder = CommitOrder::Atomic;
    VirtualTime brokenCommitGap = sim::milliseconds(20);
};

struct ControllerTuning {
    VirtualTime restartDelay = sim::seconds(1);
    int quiescentRounds = 5;
    VirtualTime probeInterval = sim::milliseconds(100);
    VirtualTime noProgressBound = sim::seconds(120);
    VirtualTime maxVirtualTime = sim::seconds(3600);
    bool recordRounds = true;
};

struct ProcessorSpec {
    std::string processorGuid = "processor-0";
    int mapperCount = 1;
    int reducerCount = 1;
    std::string pipeline = "access-tally";
    std::string mapperStateTable = "mapper_state";
    std::string reducerStateTable = "reducer_state";
    std::string userTable = "access_tally";
    /// Empty disables per-row effect counters.
    std::string effectsTable = "row_effects";
    std::string shuffleTable = "persisted_shuffle";
    InputSpec input;
    MapperTuning mapper;
    ReducerTuning reducer;
    VirtualTime rpcTimeout = sim::seconds(1);
    VirtualTime discoveryDelay = sim::milliseconds(500);
    ControllerTuning controller;

    /// Throws ConfigError naming the offending field.
    static ProcessorSpec fromJson(const nlohmann::json& j);
    nlohmann::ordered_json toJson() const;
    void validate() const;
};

enum class FaultAction { Kill, Pause, Resume, Duplicate, Isolate };
const char* toString(FaultAction action);

struct FaultEvent {
    VirtualTime at = 0;
    FaultAction action = FaultAction::Kill;
    NodeId target;
    /// Pause/isolate: revert after this long (0 = never). Duplicate: kill the older instance after this long.
    VirtualTime duration = 0;
};

struct PartitionWindow {
    NodeId a;
    NodeId b;
    VirtualTime from = 0;
    VirtualTime until = 0;
};

/// A row whose body carries a directive interpreted by the test pipelines.
struct ControlRow {
    int partition = 0;
    int64_t seq = 0;
    std::string directive;
};

struct FaultPlan {
    double messageDropProbability = 0.0;
    VirtualTime minDelay = sim::milliseconds(1);
    VirtualTime maxDelay = sim::milliseconds(5);
    std::vector<PartitionWindow> partitionedPairs;
    std::vector<FaultEvent> events;
    std::vector<ControlRow> controls;
    /// When set, overrides the seed given on the command line.
    std::optional<uint64_t> rngSeed;

    static FaultPlan fromJson(const nlohmann::json& j);
    nlohmann::ordered_json toJson() const;
    void validate(const ProcessorSpec& spec) const;
};

struct FaultGeneratorOptions {
    bool kills = true;
    bool pauses = true;
    bool duplicates = true;
    /// Events are placed in [start, start + horizon); horizon 0 means the input production time plus 2 s.
    VirtualTime start = sim::milliseconds(300);
    VirtualTime horizon = 0;
};

/// Time the producers need to append the whole input.
VirtualTime productionTime(const ProcessorSpec& spec);

/// Random kill/pause/duplicate schedule touching every worker at most once per action kind.
FaultPlan generateFaultPlan(const ProcessorSpec& spec, uint64_t seed, const FaultGeneratorOptions& options = {});

NodeId parseNodeId(const std::string& text);

nlohmann::json loadJsonFile(const std::string& path);

}// namespace streamshuffle

#endif// STREAMSHUFFLE_SCENARIO_HPP_
