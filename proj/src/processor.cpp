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

#include <streamshuffle/encoding.hpp>
#include <streamshuffle/errors.hpp>
#include <streamshuffle/mapper.hpp>
#include <streamshuffle/pipelines.hpp>
#include <streamshuffle/processor.hpp>

#include <algorithm>
#include <cstdio>
#include <set>

namespace streamshuffle {

using nlohmann::ordered_json;

namespace {

struct MapperInstance {
    Endpoint endpoint;
    sim::ContextPtr context;
    sim::Executor executor;
    std::unique_ptr<MapperRuntime> runtime;
    std::unique_ptr<sim::Signal> memorySignal;
    sim::Task<> ingestTask;
    sim::Task<> trimTask;
    bool restartRequested = false;
    /// State commits built on a snapshot another instance had already replaced.
    int64_t staleCommits = 0;
};

struct ReducerInstance {
    Endpoint endpoint;
    sim::ContextPtr context;
    sim::Executor executor;
    std::unique_ptr<SimShuffleChannel> channel;
    std::unique_ptr<ReducerRuntime> runtime;
    sim::Task<> loopTask;
    int consecutiveIdle = 0;
    int64_t staleCommits = 0;
};

template<typename Instance>
struct Slot {
    std::vector<std::unique_ptr<Instance>> live;
    bool restartPending = false;
    int restarts = 0;
};

double ms(VirtualTime t) {
    return static_cast<double>(t) / 1000.0;
}

ordered_json rangeJson(const ByteRange& range) {
    return ordered_json{{"commits", range.count}, {"min", range.min}, {"max", range.max}};
}

}// namespace

ordered_json ScenarioReport::toJson() const {
    ordered_json j;
    j["seed"] = seed;
    j["pipeline"] = pipeline;
    j["verdict"] = pass ? "PASS" : "FAIL";
    j["duplicates"] = exactlyOnce.duplicates;
    j["losses"] = exactlyOnce.losses;
    j["unexpected_rows"] = exactlyOnce.unexpected;
    j["table_mismatches"] = exactlyOnce.tableMismatches;
    j["state_mismatches"] = stateMismatches;
    j["differences"] = exactlyOnce.samples;
    j["atomic_snapshot"] = ordered_json{
        {"commits_checked", snapshotCommitsChecked}, {"violations", snapshotViolations}, {"samples", snapshotSamples}};
    j["restarts"] = ordered_json{{"mapper", mapperRestarts}, {"reducer", reducerRestarts}};
    j["split_brain"] = ordered_json{{"duplicates_spawned", duplicatesSpawned},
                                    {"mapper_detections", mapperSplitBrainDetections},
                                    {"reducer_skips", reducerSplitBrainSkips},
                                    {"impostor_commits_before_detection", impostorCommitsBeforeDetection}};
    j["write_amplification"] = ordered_json{{"payload_bytes", writeAmplification.payloadBytes},
                                            {"persisted_meta_bytes", writeAmplification.metaBytes},
                                            {"persisted_shuffle_bytes", writeAmplification.shuffleBytes},
                                            {"user_bytes", writeAmplification.userBytes},
                                            {"ratio", writeAmplification.ratio},
                                            {"mapper_meta_per_commit", rangeJson(writeAmplification.mapperMetaPerCommit)},
                                            {"reducer_meta_per_commit", rangeJson(writeAmplification.reducerMetaPerCommit)}};
    j["max_window_bytes"] = maxWindowBytes;
    j["reducer_rounds"] = reducerRounds;
    j["reducer_commits"] = reducerCommits;
    j["convergence_time_ms"] = ms(convergenceTime);
    j["events_executed"] = eventsExecuted;
    j["network"] = ordered_json{{"calls", network.calls},
                                {"delivered", network.delivered},
                                {"dropped", network.dropped},
                                {"timeouts", network.timeouts},
                                {"unreachable", network.unreachable}};
    return j;
}

struct Processor::Impl {
    ProcessorSpec spec;
    FaultPlan plan;
    uint64_t seed;
    sim::Simulator sim;
    StateStore store;
    std::shared_ptr<Journal> journal;
    Pipeline pipeline;
    Workload workload;
    std::unique_ptr<Fabric> fabric;
    std::unique_ptr<Discovery> discovery;
    std::string mapperGroup;
    std::string reducerGroup;
    std::vector<std::shared_ptr<OffsetLog>> logs;
    std::vector<size_t> produced;
    std::unique_ptr<AtomicSnapshotChecker> checker;

    std::vector<Slot<MapperInstance>> mappers;
    std::vector<Slot<ReducerInstance>> reducers;
    std::vector<std::unique_ptr<MapperInstance>> deadMappers;
    std::vector<std::unique_ptr<ReducerInstance>> deadReducers;
    std::set<std::pair<RowId, std::string>> firedControls;

    std::vector<ProbeSample> probeSamples;
    std::vector<RoundSample> roundSamples;
    std::vector<WorkerEvent> events;
    std::vector<uint64_t> maxWindowBytes;
    /// After-image of the latest committed round per reducer slot, in commit order.
    std::vector<ReducerPersistentState> lastReducerCommit;
    int duplicatesSpawned = 0;
    VirtualTime faultsSettled = 0;
    std::vector<int64_t> lastProgress;
    VirtualTime lastProgressTime = 0;
    bool stopped = false;
    bool ran = false;
    std::function<void(const ProbeSample&)> probeObserver;

    Impl(ProcessorSpec specIn, FaultPlan planIn, uint64_t seedIn, const std::optional<std::string>& journalPath)
        : spec(std::move(specIn)), plan(std::move(planIn)), seed(plan.rngSeed.value_or(seedIn)), sim(seed) {
        spec.validate();
        plan.validate(spec);

        journal = journalPath ? std::make_shared<Journal>(*journalPath) : std::make_shared<Journal>();
        store.enableJournal(journal);
        store.createSortedTable(spec.mapperStateTable, MapperPersistentState::tableSchema());
        store.createSortedTable(spec.reducerStateTable, ReducerPersistentState::tableSchema());
        if (spec.mapper.persistShuffle) {
            store.createSortedTable(spec.shuffleTable,
                                    TableSchema{NameTable({"mapper_index", "shuffle_index", "reducer_index", "row"}), 2});
        }
        pipeline = makePipeline(spec, [this](const ControlSignal& signal) { return onControl(signal); });
        pipeline.createTables(store);

        workload = generateWorkload(spec.input, spec.mapperCount, seed, plan.controls);
        produced.assign(static_cast<size_t>(spec.mapperCount), 0);
        for (int m = 0; m < spec.mapperCount; ++m) {
            if (spec.input.source == SourceKind::OrderedTable) {
                store.createOrderedTable(inputTable(m), sourceSchema());
            } else {
                logs.push_back(std::make_shared<OffsetLog>(static_cast<size_t>(spec.input.subStreams), sourceSchema(),
                                                           seed * 31 + static_cast<uint64_t>(m)));
            }
        }

        fabric = std::make_unique<Fabric>(sim, NetworkConfig{plan.messageDropProbability, plan.minDelay, plan.maxDelay, spec.rpcTimeout});
        discovery = std::make_unique<Discovery>(sim, spec.discoveryDelay);
        mapperGroup = spec.processorGuid + "/mappers";
        reducerGroup = spec.processorGuid + "/reducers";

        if (!spec.effectsTable.empty()) {
            checker = std::make_unique<AtomicSnapshotChecker>(spec.reducerStateTable, spec.effectsTable,
                                                              pipeline.shuffleOracle(workload, spec.reducerCount), spec.mapperCount);
            store.setCommitObserver([c = checker.get()](const CommitRecord& record) { c->observe(record); });
        }
        mappers.resize(static_cast<size_t>(spec.mapperCount));
        reducers.resize(static_cast<size_t>(spec.reducerCount));
        maxWindowBytes.assign(static_cast<size_t>(spec.mapperCount), 0);
        for (int r = 0; r < spec.reducerCount; ++r) {
            lastReducerCommit.push_back(ReducerPersistentState::initial(r, spec.mapperCount));
        }
    }

    ~Impl() {
        // Frames may still be suspended; kill every context first so nothing resumes during teardown.
        for (auto& slot : mappers) {
            for (auto& inst : slot.live) {
                inst->context->kill();
            }
        }
        for (auto& slot : reducers) {
            for (auto& inst : slot.live) {
                inst->context->kill();
            }
        }
    }

    std::string inputTable(int m) const { return "input_" + std::to_string(m); }

    std::string newGuid(const char* kind) {
        char buffer[32];
        std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(sim.rng()()));
        return std::string(kind) + "-" + buffer;
    }

    void note(NodeId node, const std::string& guid, std::string what) {
        events.push_back(WorkerEvent{sim.now(), node, guid, std::move(what)});
    }

    // ---- Input -------------------------------------------------------------------------------

    void produce(int m) {
        const auto& events = workload.partitions[static_cast<size_t>(m)];
        size_t& next = produced[static_cast<size_t>(m)];
        size_t end = std::min(events.size(), next + static_cast<size_t>(spec.input.rowsPerAppend));
        if (spec.input.source == SourceKind::OrderedTable) {
            Rowset batch;
            batch.nameTable = sourceSchema();
            for (size_t i = next; i < end; ++i) {
                batch.rows.push_back(toSourceRow(events[i]));
            }
            store.appendRows(inputTable(m), batch);
        } else {
            auto& log = *logs[static_cast<size_t>(m)];
            for (size_t i = next; i < end; ++i) {
                log.append(static_cast<size_t>(sim.uniform(0, spec.input.subStreams - 1)), toSourceRow(events[i]));
            }
        }
        next = end;
        if (next < events.size()) {
            sim.schedule(spec.input.appendInterval, [this, m] { produce(m); });
        }
    }

    bool partitionDrained(int m) const {
        if (produced[static_cast<size_t>(m)] < workload.partitions[static_cast<size_t>(m)].size()) {
            return false;
        }
        if (spec.input.source == SourceKind::OrderedTable) {
            return store.trimmedUpTo(inputTable(m)) >= store.endIndex(inputTable(m));
        }
        return logs[static_cast<size_t>(m)]->storedCount() == 0;
    }

    PartitionReaderPtr makeReader(int m) {
        TrimScheduler scheduler = [this](std::function<void()> trim) { sim.schedule(spec.mapper.readerTrimDelay, std::move(trim)); };
        if (spec.input.source == SourceKind::OrderedTable) {
            return std::make_shared<OrderedTableReader>(store, inputTable(m), scheduler);
        }
        return std::make_shared<OffsetLogReader>(logs[static_cast<size_t>(m)], scheduler);
    }

    // ---- Mappers -----------------------------------------------------------------------------

    bool tryBootstrap(MapperRuntime& runtime) {
        try {
            runtime.bootstrap();
            return true;
        } catch (const StateUnavailable&) {
            return false;
        }
    }

    void noteDetection(MapperInstance& inst) {
        note(inst.endpoint.node(), inst.endpoint.instanceGuid, "split-brain detected");
    }

    sim::Task<> mapperIngestLoop(MapperInstance& inst) {
        auto& runtime = *inst.runtime;
        IngestionOutcome last = IngestionOutcome::Appended;
        while (true) {
            if (inst.restartRequested) {
                runtime.dropState();
                co_await inst.executor.sleep(spec.mapper.splitBrainDelay);
                inst.restartRequested = false;
            }
            if (!runtime.isBootstrapped()) {
                if (!tryBootstrap(runtime)) {
                    co_await inst.executor.sleep(spec.mapper.backoff);
                    continue;
                }
                last = IngestionOutcome::Appended;
            }
            if (last != IngestionOutcome::Appended) {
                co_await inst.executor.sleep(spec.mapper.backoff);
                if (inst.restartRequested) {
                    continue;
                }
            }
            last = runtime.ingestionStep();
            if (last == IngestionOutcome::SplitBrainRestart) {
                noteDetection(inst);
                inst.restartRequested = true;
                continue;
            }
            while (runtime.memoryExceeded() && !inst.restartRequested) {
                co_await inst.memorySignal->wait();
            }
        }
    }

    sim::Task<> mapperTrimLoop(MapperInstance& inst) {
        auto& runtime = *inst.runtime;
        while (true) {
            co_await inst.executor.sleep(spec.mapper.trimPeriod);
            if (inst.restartRequested || !runtime.isBootstrapped()) {
                continue;
            }
            // The trim commit is synchronous, so the row read here is the commit's pre-image.
            auto stored = store.lookup(spec.mapperStateTable, MapperPersistentState::key(inst.endpoint.index));
            bool staleBase = stored && MapperPersistentState::fromRow(*stored) != runtime.persistedState();
            uint64_t commitsBefore = runtime.stats().stateCommits;
            auto outcome = runtime.trimInputRows();
            if (staleBase && runtime.stats().stateCommits != commitsBefore) {
                ++inst.staleCommits;
            }
            if (outcome == TrimOutcome::SplitBrainDetected) {
                noteDetection(inst);
                inst.restartRequested = true;
                inst.memorySignal->notifyAll();
            }
        }
    }

    MapperInstance& spawnMapper(int m) {
        auto inst = std::make_unique<MapperInstance>();
        auto guid = newGuid("mapper");
        inst->endpoint = Endpoint{WorkerKind::Mapper, m, guid, "sim://" + guid};
        inst->context = std::make_shared<sim::WorkerContext>("mapper:" + std::to_string(m) + ":" + guid);
        inst->executor = sim::Executor{&sim, inst->context};

        MapperSpec mapperSpec{spec.processorGuid, spec.mapperStateTable, m, guid, spec.reducerCount};
        MapperConfig config;
        config.maxBatchRows = spec.mapper.maxBatchRows;
        config.memoryLimitBytes = spec.mapper.memoryLimitBytes;
        if (spec.mapper.persistShuffle) {
            config.persistShuffleTable = spec.shuffleTable;
        }
        nlohmann::json userConfig{{"user_table", spec.userTable}, {"effects_table", spec.effectsTable}};
        auto userMapper = pipeline.mapperFactory(userConfig, store, sourceSchema(), mapperSpec);
        inst->runtime = std::make_unique<MapperRuntime>(mapperSpec, config, store, makeReader(m), std::move(userMapper));
        inst->memorySignal = std::make_unique<sim::Signal>(inst->executor);
        inst->runtime->setMemoryReleasedCallback([signal = inst->memorySignal.get()] { signal->notifyAll(); });

        fabric->bind(inst->endpoint, inst->context, [runtime = inst->runtime.get()](std::string_view request) {
            if (!runtime->isBootstrapped()) {
                return encodeErrorFrame(RpcErrorBody{RpcErrorCode::Unavailable, "mapper is not bootstrapped"});
            }
            return runtime->handleGetRowsFrame(request);
        });
        discovery->registerEndpoint(mapperGroup, inst->endpoint, Attributes{{"index", std::to_string(m)}});

        inst->ingestTask = mapperIngestLoop(*inst);
        inst->trimTask = mapperTrimLoop(*inst);
        auto* raw = inst.get();
        inst->executor.post(0, [raw] { raw->ingestTask.start(); });
        inst->executor.post(0, [raw] { raw->trimTask.start(); });
        note(inst->endpoint.node(), guid, "spawn");
        mappers[static_cast<size_t>(m)].live.push_back(std::move(inst));
        return *raw;
    }

    // ---- Reducers ----------------------------------------------------------------------------

    void onRound(ReducerInstance& inst, const RoundReport& report) {
        inst.consecutiveIdle = report.outcome == ReducerOutcome::NothingToDo ? inst.consecutiveIdle + 1 : 0;
        auto& last = lastReducerCommit[static_cast<size_t>(inst.endpoint.index)];
        if (report.outcome == ReducerOutcome::Committed) {
            if (report.before != last) {
                ++inst.staleCommits;
            }
            last = report.after;
        } else if (report.outcome == ReducerOutcome::SplitBrainSkip) {
            note(inst.endpoint.node(), inst.endpoint.instanceGuid, "split-brain detected");
        }
        if (!spec.controller.recordRounds) {
            return;
        }
        RoundSample sample;
        sample.time = sim.now();
        sample.reducerIndex = inst.endpoint.index;
        sample.outcome = report.outcome;
        for (const auto& poll : report.polls) {
            int8_t status = 0;
            if (!poll.discovered) {
                status = -2;
            } else if (poll.failure || poll.error || poll.malformed) {
                status = -1;
            } else if (!poll.rows.rows.empty()) {
                status = 1;
            }
            sample.mapperStatus.push_back(status);
            auto m = static_cast<size_t>(poll.mapperIndex);
            sample.advanced.push_back(report.outcome == ReducerOutcome::Committed
                                      && report.after.committedRowIndices[m] != report.before.committedRowIndices[m]);
        }
        roundSamples.push_back(std::move(sample));
    }

    sim::Task<> reducerLoop(ReducerInstance& inst) {
        while (true) {
            auto round = inst.runtime->step();
            ReducerOutcome outcome = co_await round;
            if (outcome != ReducerOutcome::Committed) {
                co_await inst.executor.sleep(spec.reducer.backoff);
            }
        }
    }

    ReducerInstance& spawnReducer(int r) {
        auto inst = std::make_unique<ReducerInstance>();
        auto guid = newGuid("reducer");
        inst->endpoint = Endpoint{WorkerKind::Reducer, r, guid, "sim://" + guid};
        inst->context = std::make_shared<sim::WorkerContext>("reducer:" + std::to_string(r) + ":" + guid);
        inst->executor = sim::Executor{&sim, inst->context};
        inst->channel = std::make_unique<SimShuffleChannel>(*fabric, *discovery, mapperGroup, inst->endpoint.node(), inst->context);

        ReducerSpec reducerSpec{spec.processorGuid, spec.reducerStateTable, r, guid, spec.mapperCount};
        ReducerConfig config{spec.reducer.maxRowsPerMapperPerRound, spec.reducer.commitOrder, spec.reducer.brokenCommitGap};
        nlohmann::json userConfig{{"user_table", spec.userTable}, {"effects_table", spec.effectsTable}};
        auto userReducer = pipeline.reducerFactory(userConfig, store, reducerSpec);
        inst->runtime =
            std::make_unique<ReducerRuntime>(reducerSpec, config, store, *inst->channel, std::move(userReducer), inst->executor);
        inst->runtime->setEndpointChooser([this](size_t candidates) { return static_cast<size_t>(sim.uniform(0, static_cast<int64_t>(candidates) - 1)); });
        auto* raw = inst.get();
        inst->runtime->setRoundObserver([this, raw](const RoundReport& report) { onRound(*raw, report); });
        discovery->registerEndpoint(reducerGroup, inst->endpoint, Attributes{{"index", std::to_string(r)}});

        inst->loopTask = reducerLoop(*inst);
        inst->executor.post(0, [raw] { raw->loopTask.start(); });
        note(inst->endpoint.node(), guid, "spawn");
        reducers[static_cast<size_t>(r)].live.push_back(std::move(inst));
        return *raw;
    }

    // ---- Controller --------------------------------------------------------------------------

    template<typename Instance>
    void retire(Instance& inst, const std::string& group) {
        inst.context->kill();
        fabric->unbind(inst.endpoint.instanceGuid);
        discovery->unregisterEndpoint(group, inst.endpoint.instanceGuid);
        note(inst.endpoint.node(), inst.endpoint.instanceGuid, "kill");
    }

    void scheduleRespawn(NodeId node) {
        bool& pending = node.kind == WorkerKind::Mapper ? mappers[static_cast<size_t>(node.index)].restartPending
                                                        : reducers[static_cast<size_t>(node.index)].restartPending;
        if (pending) {
            return;
        }
        pending = true;
        sim.schedule(spec.controller.restartDelay, [this, node] {
            if (node.kind == WorkerKind::Mapper) {
                auto& slot = mappers[static_cast<size_t>(node.index)];
                slot.restartPending = false;
                if (slot.live.empty()) {
                    ++slot.restarts;
                    spawnMapper(node.index);
                }
            } else {
                auto& slot = reducers[static_cast<size_t>(node.index)];
                slot.restartPending = false;
                if (slot.live.empty()) {
                    ++slot.restarts;
                    spawnReducer(node.index);
                }
            }
        });
    }

    /// Kills the instances of a slot, all of them when `guids` is empty; respawns if none remain.
    void killInstances(NodeId node, const std::set<std::string>& guids = {}) {
        auto sweep = [&](auto& slot, auto& graveyard, const std::string& group) {
            for (auto it = slot.live.begin(); it != slot.live.end();) {
                if (guids.empty() || guids.count((*it)->endpoint.instanceGuid)) {
                    retire(**it, group);
                    graveyard.push_back(std::move(*it));
                    it = slot.live.erase(it);
                } else {
                    ++it;
                }
            }
            if (slot.live.empty()) {
                scheduleRespawn(node);
            }
        };
        if (node.kind == WorkerKind::Mapper) {
            sweep(mappers[static_cast<size_t>(node.index)], deadMappers, mapperGroup);
        } else {
            sweep(reducers[static_cast<size_t>(node.index)], deadReducers, reducerGroup);
        }
    }

    template<typename F>
    void forLive(NodeId node, F&& fn) {
        if (node.kind == WorkerKind::Mapper) {
            for (auto& inst : mappers[static_cast<size_t>(node.index)].live) {
                fn(inst->context, inst->endpoint.instanceGuid);
            }
        } else {
            for (auto& inst : reducers[static_cast<size_t>(node.index)].live) {
                fn(inst->context, inst->endpoint.instanceGuid);
            }
        }
    }

    void pause(NodeId node, VirtualTime duration) {
        forLive(node, [&](const sim::ContextPtr& context, const std::string& guid) {
            context->pause();
            note(node, guid, "pause");
        });
        if (duration > 0) {
            sim.schedule(duration, [this, node] { resume(node); });
        }
    }

    void resume(NodeId node) {
        forLive(node, [&](const sim::ContextPtr& context, const std::string& guid) {
            if (context->paused()) {
                context->resume(sim);
                note(node, guid, "resume");
            }
        });
    }

    void duplicate(NodeId node, VirtualTime duration) {
        std::set<std::string> originals;
        if (node.kind == WorkerKind::Mapper) {
            for (auto& inst : mappers[static_cast<size_t>(node.index)].live) {
                originals.insert(inst->endpoint.instanceGuid);
            }
            spawnMapper(node.index);
        } else {
            for (auto& inst : reducers[static_cast<size_t>(node.index)].live) {
                originals.insert(inst->endpoint.instanceGuid);
            }
            spawnReducer(node.index);
        }
        ++duplicatesSpawned;
        note(node, "", "duplicate");
        if (!originals.empty()) {
            sim.schedule(std::max<VirtualTime>(duration, 1), [this, node, originals] { killInstances(node, originals); });
        }
    }

    void apply(const FaultEvent& event) {
        switch (event.action) {
            case FaultAction::Kill: killInstances(event.target); break;
            case FaultAction::Pause: pause(event.target, event.duration); break;
            case FaultAction::Resume: resume(event.target); break;
            case FaultAction::Duplicate: duplicate(event.target, event.duration); break;
            case FaultAction::Isolate: {
                fabric->setIsolated(event.target, true);
                note(event.target, "", "isolate");
                if (event.duration > 0) {
                    sim.schedule(event.duration, [this, node = event.target] {
                        fabric->setIsolated(node, false);
                        note(node, "", "heal");
                    });
                }
                break;
            }
        }
    }

    bool onControl(const ControlSignal& signal) {
        if (!firedControls.insert({signal.row, signal.directive}).second) {
            return false;
        }
        NodeId node{signal.kind, signal.workerIndex};
        note(node, "", "control " + signal.directive + " at row " + signal.row.debugString());
        if (signal.directive.rfind("crash-", 0) == 0) {
            sim.schedule(0, [this, node] { killInstances(node); });
        } else {
            auto colon = signal.directive.find(':');
            VirtualTime duration = sim::milliseconds(std::stoll(signal.directive.substr(colon + 1)));
            sim.schedule(0, [this, node, duration] { pause(node, duration); });
        }
        return true;
    }

    // ---- Probing and stopping ----------------------------------------------------------------

    template<typename Instance>
    static Instance* newest(Slot<Instance>& slot) {
        return slot.live.empty() ? nullptr : slot.live.back().get();
    }

    void checkTasks() {
        for (auto& slot : mappers) {
            for (auto& inst : slot.live) {
                inst->ingestTask.rethrowIfFailed();
                inst->trimTask.rethrowIfFailed();
            }
        }
        for (auto& slot : reducers) {
            for (auto& inst : slot.live) {
                inst->loopTask.rethrowIfFailed();
            }
        }
    }

    std::vector<int64_t> committedOf(int r) const {
        auto row = store.lookup(spec.reducerStateTable, ReducerPersistentState::key(r));
        return row ? ReducerPersistentState::fromRow(*row).committedRowIndices
                   : ReducerPersistentState::initial(r, spec.mapperCount).committedRowIndices;
    }

    bool quiescent() {
        if (sim.now() < faultsSettled) {
            return false;
        }
        for (int m = 0; m < spec.mapperCount; ++m) {
            auto& slot = mappers[static_cast<size_t>(m)];
            auto* inst = newest(slot);
            if (slot.restartPending || slot.live.size() != 1 || !inst || inst->context->paused() || inst->restartRequested
                || !inst->runtime->isBootstrapped() || !partitionDrained(m)) {
                return false;
            }
        }
        for (auto& slot : reducers) {
            auto* inst = newest(slot);
            if (slot.restartPending || slot.live.size() != 1 || !inst || inst->context->paused()
                || inst->consecutiveIdle < spec.controller.quiescentRounds) {
                return false;
            }
        }
        return true;
    }

    void probe() {
        checkTasks();
        ProbeSample sample;
        sample.time = sim.now();
        std::vector<int64_t> progress;
        for (int m = 0; m < spec.mapperCount; ++m) {
            auto* inst = newest(mappers[static_cast<size_t>(m)]);
            uint64_t bytes = inst ? inst->runtime->memoryUsage() : 0;
            int64_t cursor = inst && inst->runtime->isBootstrapped() ? inst->runtime->inputCurrentRowIndex() : 0;
            for (auto& any : mappers[static_cast<size_t>(m)].live) {
                maxWindowBytes[static_cast<size_t>(m)] = std::max(maxWindowBytes[static_cast<size_t>(m)], any->runtime->memoryUsage());
            }
            sample.windowBytes.push_back(bytes);
            sample.windowEntries.push_back(inst ? inst->runtime->windowEntryCount() : 0);
            sample.readLag.push_back(static_cast<int64_t>(produced[static_cast<size_t>(m)]) - cursor);
            progress.push_back(static_cast<int64_t>(produced[static_cast<size_t>(m)]));
            progress.push_back(spec.input.source == SourceKind::OrderedTable ? store.trimmedUpTo(inputTable(m))
                                                                              : -static_cast<int64_t>(logs[static_cast<size_t>(m)]->storedCount()));
        }
        for (int r = 0; r < spec.reducerCount; ++r) {
            sample.committed.push_back(committedOf(r));
            progress.insert(progress.end(), sample.committed.back().begin(), sample.committed.back().end());
        }
        probeSamples.push_back(std::move(sample));
        if (probeObserver) {
            probeObserver(probeSamples.back());
        }

        if (progress != lastProgress) {
            lastProgress = std::move(progress);
            lastProgressTime = sim.now();
        }
        if (quiescent()) {
            stopped = true;
            return;
        }
        VirtualTime idleFor = sim.now() - std::max(lastProgressTime, faultsSettled);
        if (idleFor > spec.controller.noProgressBound) {
            throw Deadlock("no progress for " + std::to_string(sim::toSeconds(idleFor)) + " s at virtual time "
                           + std::to_string(sim::toSeconds(sim.now())) + " s");
        }
        if (sim.now() > spec.controller.maxVirtualTime) {
            throw Deadlock("virtual time limit reached at " + std::to_string(sim::toSeconds(sim.now())) + " s");
        }
        sim.schedule(spec.controller.probeInterval, [this] { probe(); });
    }

    // ---- Run and report ----------------------------------------------------------------------

    ScenarioReport run() {
        if (ran) {
            throw ConfigError("a processor runs only once");
        }
        ran = true;
        for (int m = 0; m < spec.mapperCount; ++m) {
            sim.schedule(0, [this, m] { produce(m); });
        }
        for (int m = 0; m < spec.mapperCount; ++m) {
            spawnMapper(m);
        }
        for (int r = 0; r < spec.reducerCount; ++r) {
            spawnReducer(r);
        }
        for (const auto& event : plan.events) {
            sim.schedule(event.at, [this, event] { apply(event); });
            VirtualTime settle = event.at + event.duration + spec.controller.restartDelay;
            if (event.action == FaultAction::Duplicate) {
                settle += spec.mapper.splitBrainDelay;
            }
            faultsSettled = std::max(faultsSettled, settle);
        }
        for (const auto& window : plan.partitionedPairs) {
            sim.schedule(window.from, [this, window] { fabric->setPartitioned(window.a, window.b, true); });
            sim.schedule(window.until, [this, window] { fabric->setPartitioned(window.a, window.b, false); });
            faultsSettled = std::max(faultsSettled, window.until);
        }
        sim.schedule(0, [this] { probe(); });

        while (!stopped) {
            if (!sim.step()) {
                throw Deadlock("event queue drained before quiescence");
            }
        }
        return buildReport();
    }

    ScenarioReport buildReport() {
        ScenarioReport report;
        report.seed = seed;
        report.pipeline = spec.pipeline;

        std::vector<Row> effects;
        std::set<RowId> expected;
        if (!spec.effectsTable.empty()) {
            effects = store.dumpSortedTable(spec.effectsTable);
            expected = pipeline.expectedRows(workload);
        }
        if (spec.pipeline == "access-tally") {
            auto oracle = computeAccessOracle(workload, spec.reducerCount);
            auto tally = store.dumpSortedTable(spec.userTable);
            report.exactlyOnce = verifyExactlyOnce(effects, expected, &tally, &oracle.tally);
        } else {
            report.exactlyOnce = verifyExactlyOnce(effects, expected);
        }

        auto shuffle = pipeline.shuffleOracle(workload, spec.reducerCount);
        for (int r = 0; r < spec.reducerCount; ++r) {
            auto committed = committedOf(r);
            for (int m = 0; m < spec.mapperCount; ++m) {
                int64_t last = nothingCommitted;
                const auto& numbered = shuffle[static_cast<size_t>(m)];
                for (size_t s = 0; s < numbered.size(); ++s) {
                    if (numbered[s].second == r) {
                        last = static_cast<int64_t>(s);
                    }
                }
                if (committed[static_cast<size_t>(m)] != last) {
                    ++report.stateMismatches;
                }
            }
        }
        if (checker) {
            report.snapshotCommitsChecked = checker->commitsChecked();
            report.snapshotViolations = checker->violations();
            report.snapshotSamples = checker->samples();
        }
        report.pass = report.exactlyOnce.pass && report.stateMismatches == 0;

        auto mapperInstances = [&](auto&& fn) {
            for (auto& slot : mappers) {
                for (auto& inst : slot.live) fn(*inst);
            }
            for (auto& inst : deadMappers) fn(*inst);
        };
        auto reducerInstances = [&](auto&& fn) {
            for (auto& slot : reducers) {
                for (auto& inst : slot.live) fn(*inst);
            }
            for (auto& inst : deadReducers) fn(*inst);
        };
        for (auto& slot : mappers) report.mapperRestarts.push_back(slot.restarts);
        for (auto& slot : reducers) report.reducerRestarts.push_back(slot.restarts);
        report.duplicatesSpawned = duplicatesSpawned;
        mapperInstances([&](MapperInstance& inst) {
            report.mapperSplitBrainDetections += inst.runtime->stats().splitBrainDetections;
            report.impostorCommitsBeforeDetection = std::max(report.impostorCommitsBeforeDetection, inst.staleCommits);
        });
        reducerInstances([&](ReducerInstance& inst) {
            const auto& stats = inst.runtime->stats();
            report.reducerSplitBrainSkips += stats.splitBrainSkips;
            report.reducerRounds += stats.rounds;
            report.reducerCommits += stats.commits;
            report.impostorCommitsBeforeDetection = std::max(report.impostorCommitsBeforeDetection, inst.staleCommits);
        });

        uint64_t payload = 0;
        for (const auto& partition : workload.partitions) {
            for (const auto& event : partition) {
                payload += encodedSize(toSourceRow(event));
            }
        }
        TableRoles roles{spec.mapperStateTable, spec.reducerStateTable, spec.mapper.persistShuffle ? spec.shuffleTable : ""};
        report.writeAmplification = measureWriteAmplification(store, roles, payload);
        report.maxWindowBytes = maxWindowBytes;
        report.convergenceTime = sim.now();
        report.eventsExecuted = sim.eventsExecuted();
        report.network = fabric->stats();
        return report;
    }
};

Processor::Processor(ProcessorSpec spec, FaultPlan plan, uint64_t seed, std::optional<std::string> journalPath)
    : impl(std::make_unique<Impl>(std::move(spec), std::move(plan), seed, journalPath)) {}

Processor::~Processor() = default;

ScenarioReport Processor::run() {
    return impl->run();
}

const ProcessorSpec& Processor::spec() const {
    return impl->spec;
}

const Workload& Processor::workload() const {
    return impl->workload;
}

StateStore& Processor::store() {
    return impl->store;
}

const std::vector<ProbeSample>& Processor::probes() const {
    return impl->probeSamples;
}

const std::vector<RoundSample>& Processor::rounds() const {
    return impl->roundSamples;
}

const std::vector<WorkerEvent>& Processor::timeline() const {
    return impl->events;
}

void Processor::setProbeObserver(std::function<void(const ProbeSample&)> observer) {
    impl->probeObserver = std::move(observer);
}

ScenarioReport runProcessor(const ProcessorSpec& spec, const FaultPlan& plan, uint64_t seed, std::optional<std::string> journalPath) {
    Processor processor(spec, plan, seed, std::move(journalPath));
    return processor.run();
}

ProcessorSpec demoSpec() {
    ProcessorSpec spec;
    spec.processorGuid = "access-tally-demo";
    spec.mapperCount = 2;
    spec.reducerCount = 2;
    spec.pipeline = "access-tally";
    spec.input.rows = 2000;
    spec.input.payloadBytes = 64;
    return spec;
}

}// namespace streamshuffle
