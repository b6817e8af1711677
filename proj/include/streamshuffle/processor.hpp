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

#ifndef STREAMSHUFFLE_PROCESSOR_HPP_
#define STREAMSHUFFLE_PROCESSOR_HPP_

#include <streamshuffle/reducer.hpp>
#include <streamshuffle/scenario.hpp>
#include <streamshuffle/state_store.hpp>
#include <streamshuffle/transport.hpp>
#include <streamshuffle/verify.hpp>
#include <streamshuffle/workload.hpp>

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace streamshuffle {

/// Periodic snapshot of the running processor.
struct ProbeSample {
    VirtualTime time = 0;
    /// Per mapper slot, from its newest live instance (0 when none is up).
    std::vector<uint64_t> windowBytes;
    std::vector<uint64_t> windowEntries;
    /// Rows appended to the partition minus the mapper's input cursor.
    std::vector<int64_t> readLag;
    /// Persisted committed_row_indices per reducer slot.
    std::vector<std::vector<int64_t>> committed;
};

/// One reducer round as seen by the controller.
struct RoundSample {
    VirtualTime time = 0;
    int reducerIndex = 0;
    ReducerOutcome outcome = ReducerOutcome::NothingToDo;
    /// Per mapper: 1 rows received, 0 answered without rows, -1 no usable answer, -2 not discovered.
    std::vector<int8_t> mapperStatus;
    /// Per mapper: whether this round moved the committed index.
    std::vector<bool> advanced;
};

/// Spawn/kill/pause/... timeline entry.
struct WorkerEvent {
    VirtualTime time = 0;
    NodeId node;
    std::string guid;
    std::string what;
};

struct ScenarioReport {
    uint64_t seed = 0;
    std::string pipeline;
    bool pass = false;
    ExactlyOnceVerdict exactlyOnce;
    /// Reducer slots whose final committed indices differ from the oracle's last owed rows.
    int64_t stateMismatches = 0;
    uint64_t snapshotCommitsChecked = 0;
    uint64_t snapshotViolations = 0;
    std::vector<std::string> snapshotSamples;
    std::vector<int> mapperRestarts;
    std::vector<int> reducerRestarts;
    int duplicatesSpawned = 0;
    uint64_t mapperSplitBrainDetections = 0;
    uint64_t reducerSplitBrainSkips = 0;
    /// Most state commits any instance built on a snapshot that another instance of its index had already replaced.
    int64_t impostorCommitsBeforeDetection = 0;
    WriteAmplification writeAmplification;
    std::vector<uint64_t> maxWindowBytes;
    uint64_t reducerRounds = 0;
    uint64_t reducerCommits = 0;
    VirtualTime convergenceTime = 0;
    uint64_t eventsExecuted = 0;
    FabricStats network;

    nlohmann::ordered_json toJson() const;
};

/**
 * @brief Runs one streaming processor on the simulated cluster: generates and feeds the input,
 * spawns and restarts workers, applies the fault plan and stops at quiescence.
 */
class Processor {
  public:
    Processor(ProcessorSpec spec, FaultPlan plan, uint64_t seed, std::optional<std::string> journalPath = std::nullopt);
    ~Processor();
    Processor(const Processor&) = delete;
    Processor& operator=(const Processor&) = delete;

    /// Runs to quiescence. Throws Deadlock when nothing progresses for the configured bound.
    ScenarioReport run();

    const ProcessorSpec& spec() const;
    const Workload& workload() const;
    StateStore& store();
    const std::vector<ProbeSample>& probes() const;
    const std::vector<RoundSample>& rounds() const;
    const std::vector<WorkerEvent>& timeline() const;
    /// Called after every probe sample is taken, before the stop check. Set before run().
    void setProbeObserver(std::function<void(const ProbeSample&)> observer);

  private:
    struct Impl;
    std::unique_ptr<Impl> impl;
};

/// Builds the processor, runs it and returns the report.
ScenarioReport runProcessor(const ProcessorSpec& spec, const FaultPlan& plan, uint64_t seed,
                            std::optional<std::string> journalPath = std::nullopt);

/// Built-in spec of the access-tally demo at toy scale.
ProcessorSpec demoSpec();

}// namespace streamshuffle

#endif// STREAMSHUFFLE_PROCESSOR_HPP_
