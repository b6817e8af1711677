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

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. Pass criterion numbers as arguments to run a subset.

#include <streamshuffle/input.hpp>
#include <streamshuffle/processor.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

using namespace streamshuffle;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

ProcessorSpec baseSpec(int mappers, int reducers, int64_t rows, int64_t payload) {
    ProcessorSpec spec;
    spec.processorGuid = "acceptance";
    spec.mapperCount = mappers;
    spec.reducerCount = reducers;
    spec.input.rows = rows;
    spec.input.payloadBytes = payload;
    return spec;
}

FaultEvent event(VirtualTime at, FaultAction action, NodeId target, VirtualTime duration) {
    return FaultEvent{at, action, target, duration};
}

std::string fmt(const char* format, auto... args) {
    char buffer[512];
    std::snprintf(buffer, sizeof(buffer), format, args...);
    return buffer;
}

/// Last shuffle index each mapper owes reducer r, or -1.
std::vector<int64_t> owedTo(const ShuffleOracle& shuffle, int r) {
    std::vector<int64_t> last(shuffle.size(), nothingCommitted);
    for (size_t m = 0; m < shuffle.size(); ++m) {
        for (size_t s = 0; s < shuffle[m].size(); ++s) {
            if (shuffle[m][s].second == r) {
                last[m] = static_cast<int64_t>(s);
            }
        }
    }
    return last;
}

double meanWindow(const std::vector<ProbeSample>& probes, size_t m, VirtualTime from, VirtualTime until) {
    double sum = 0;
    int n = 0;
    for (const auto& p : probes) {
        if (p.time >= from && p.time < until) {
            sum += static_cast<double>(p.windowBytes[m]);
            ++n;
        }
    }
    return n ? sum / n : 0.0;
}

// ---- 1 -------------------------------------------------------------------------------------------

Outcome exactlyOnceUnderFaults() {
    auto spec = baseSpec(4, 2, 10000, 32);
    auto started = std::chrono::steady_clock::now();
    int passed = 0;
    int64_t duplicates = 0, losses = 0, mismatches = 0;
    int kills = 0, pauses = 0, dups = 0;
    std::string firstFailure;
    for (uint64_t seed = 1; seed <= 100; ++seed) {
        auto plan = generateFaultPlan(spec, seed);
        for (const auto& e : plan.events) {
            kills += e.action == FaultAction::Kill;
            pauses += e.action == FaultAction::Pause;
            dups += e.action == FaultAction::Duplicate;
        }
        auto report = runProcessor(spec, plan, seed);
        passed += report.pass;
        duplicates += report.exactlyOnce.duplicates;
        losses += report.exactlyOnce.losses;
        mismatches += report.exactlyOnce.tableMismatches + report.stateMismatches;
        if (!report.pass && firstFailure.empty()) {
            firstFailure = " first failure: seed " + std::to_string(seed);
        }
    }
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    bool ok = passed == 100 && duplicates == 0 && losses == 0 && mismatches == 0 && wall < 120.0;
    return {ok, fmt("%d/100 seeds PASS, duplicates=%lld losses=%lld table/state mismatches=%lld, faults kill=%d pause=%d "
                    "duplicate=%d, wall %.1f s (limit 120 s)",
                    passed, static_cast<long long>(duplicates), static_cast<long long>(losses),
                    static_cast<long long>(mismatches), kills, pauses, dups, wall)
                    + firstFailure};
}

// ---- 2 -------------------------------------------------------------------------------------------

Outcome splitBrainSafety() {
    auto spec = baseSpec(4, 2, 10000, 32);
    int runs = 0, passed = 0;
    int64_t worstImpostor = 0;
    uint64_t violations = 0, checked = 0, mapperDetections = 0, reducerSkips = 0;
    for (WorkerKind kind : {WorkerKind::Mapper, WorkerKind::Reducer}) {
        int count = kind == WorkerKind::Mapper ? spec.mapperCount : spec.reducerCount;
        for (uint64_t seed = 1; seed <= 10; ++seed) {
            std::mt19937_64 rng(seed);
            FaultPlan plan;
            int index = static_cast<int>(seed % static_cast<uint64_t>(count));
            VirtualTime at = sim::milliseconds(500 + static_cast<int64_t>(rng() % 2500));
            plan.events.push_back(event(at, FaultAction::Duplicate, NodeId{kind, index}, sim::seconds(4)));
            auto report = runProcessor(spec, plan, seed);
            ++runs;
            bool ok = report.pass && report.duplicatesSpawned == 1 && report.impostorCommitsBeforeDetection <= 1
                      && report.snapshotViolations == 0;
            passed += ok;
            worstImpostor = std::max(worstImpostor, report.impostorCommitsBeforeDetection);
            violations += report.snapshotViolations;
            checked += report.snapshotCommitsChecked;
            mapperDetections += report.mapperSplitBrainDetections;
            reducerSkips += report.reducerSplitBrainSkips;
        }
    }
    return {passed == runs, fmt("%d/%d duplicate scenarios PASS, max impostor commits before detection=%lld (limit 1), "
                                "snapshot violations=%llu over %llu commits, mapper detections=%llu, reducer split-brain skips=%llu",
                                passed, runs, static_cast<long long>(worstImpostor), static_cast<unsigned long long>(violations),
                                static_cast<unsigned long long>(checked), static_cast<unsigned long long>(mapperDetections),
                                static_cast<unsigned long long>(reducerSkips))};
}

// ---- 3 -------------------------------------------------------------------------------------------

Outcome healthyWorkerProgress() {
    // Part A: mapper 0 unreachable for 30% of the run.
    auto spec = baseSpec(4, 2, 10000, 32);
    VirtualTime from = sim::seconds(1);
    VirtualTime duration = sim::seconds(2);
    FaultPlan plan;
    plan.events.push_back(event(from, FaultAction::Isolate, NodeId{WorkerKind::Mapper, 0}, duration));
    Processor isolated(spec, plan, 7);
    auto reportA = isolated.run();
    double outageShare = static_cast<double>(duration) / static_cast<double>(reportA.convergenceTime);

    bool ok = reportA.pass && outageShare >= 0.3;
    std::string perReducer;
    for (int r = 0; r < spec.reducerCount; ++r) {
        int answered = 0, advancedAnswered = 0, all = 0, advancedAll = 0;
        for (const auto& round : isolated.rounds()) {
            if (round.reducerIndex != r || round.time <= from || round.time > from + duration) {
                continue;
            }
            for (int m = 1; m < spec.mapperCount; ++m) {
                ++all;
                advancedAll += round.advanced[static_cast<size_t>(m)];
                if (round.mapperStatus[static_cast<size_t>(m)] == 1) {
                    ++answered;
                    advancedAnswered += round.advanced[static_cast<size_t>(m)];
                }
            }
        }
        double share = answered ? static_cast<double>(advancedAnswered) / answered : 0.0;
        ok = ok && answered > 0 && share >= 0.95;
        perReducer += fmt(" r%d %.1f%% of %d rows-carrying polls (%.1f%% of all %d)", r, 100 * share, answered,
                          all ? 100.0 * advancedAll / all : 0.0, all);
    }

    // Part B: reducer 1 paused; reducer 0 must reach its final oracle state first.
    VirtualTime pauseAt = sim::milliseconds(500);
    VirtualTime pauseFor = sim::seconds(30);
    FaultPlan pausePlan;
    pausePlan.events.push_back(event(pauseAt, FaultAction::Pause, NodeId{WorkerKind::Reducer, 1}, pauseFor));
    Processor paused(spec, pausePlan, 11);
    auto oracle = computeAccessOracle(paused.workload(), spec.reducerCount);
    auto owed = owedTo(oracle.shuffle, 0);
    std::map<TallyKey, TallyValue> owedTally;
    for (const auto& [key, value] : oracle.tally) {
        if (reducerForKey(key.first, key.second, spec.reducerCount) == 0) {
            owedTally[key] = value;
        }
    }
    std::optional<VirtualTime> reached;
    paused.setProbeObserver([&](const ProbeSample& sample) {
        if (reached || sample.committed[0] != owed) {
            return;
        }
        std::map<TallyKey, TallyValue> actual;
        for (const auto& row : paused.store().dumpSortedTable(spec.userTable)) {
            TallyKey key{row[0].asString(), row[1].asString()};
            if (reducerForKey(key.first, key.second, spec.reducerCount) == 0) {
                actual[key] = TallyValue{row[2].asInt64(), row[3].asInt64()};
            }
        }
        if (actual == owedTally) {
            reached = sample.time;
        }
    });
    auto reportB = paused.run();
    VirtualTime resumeAt = pauseAt + pauseFor;
    bool okB = reportB.pass && reached && *reached < resumeAt;
    std::string partB = reached ? fmt("reducer 0 at oracle state at %.1f s, reducer 1 resumes at %.1f s", sim::toSeconds(*reached),
                                      sim::toSeconds(resumeAt))
                                : std::string("reducer 0 never reached oracle state during the pause");
    return {ok && okB, fmt("mapper 0 isolated %.0f%% of a %.1f s run; other mappers advanced in", 100 * outageShare,
                           sim::toSeconds(reportA.convergenceTime))
                           + perReducer + "; " + partB};
}

// ---- 4 -------------------------------------------------------------------------------------------

Outcome mapperRecoveryShape() {
    auto spec = baseSpec(2, 2, 20000, 32);
    spec.mapper.maxBatchRows = 64;
    VirtualTime pauseAt = sim::seconds(6);
    VirtualTime pauseFor = sim::seconds(1);
    FaultPlan plan;
    plan.events.push_back(event(pauseAt, FaultAction::Pause, NodeId{WorkerKind::Mapper, 0}, pauseFor));
    Processor processor(spec, plan, 5);
    auto report = processor.run();
    const auto& probes = processor.probes();
    double steady = meanWindow(probes, 0, pauseAt - sim::seconds(3), pauseAt);
    VirtualTime resumeAt = pauseAt + pauseFor;
    int64_t peakLag = 0;
    std::optional<VirtualTime> recovered;
    for (const auto& p : probes) {
        if (p.time >= pauseAt && p.time <= resumeAt) {
            peakLag = std::max(peakLag, p.readLag[0]);
        }
        if (!recovered && p.time > resumeAt && static_cast<double>(p.windowBytes[0]) <= 2 * steady
            && p.readLag[0] < spec.mapper.maxBatchRows) {
            recovered = p.time - resumeAt;
        }
    }
    bool ok = report.pass && steady > 0 && peakLag >= spec.mapper.maxBatchRows && recovered && *recovered <= 10 * pauseFor;
    return {ok, fmt("pause %.1f s: pre-pause window %.0f B, peak read lag %lld rows, window <= 2x steady and lag < %lld rows "
                    "%.1f s after resume (limit %.1f s)",
                    sim::toSeconds(pauseFor), steady, static_cast<long long>(peakLag), static_cast<long long>(spec.mapper.maxBatchRows),
                    recovered ? sim::toSeconds(*recovered) : -1.0, sim::toSeconds(10 * pauseFor))};
}

// ---- 5 -------------------------------------------------------------------------------------------

Outcome reducerOutageShape() {
    auto spec = baseSpec(2, 2, 20000, 32);
    VirtualTime pauseAt = sim::seconds(6);
    VirtualTime pauseFor = sim::seconds(3);
    FaultPlan plan;
    plan.events.push_back(event(pauseAt, FaultAction::Pause, NodeId{WorkerKind::Reducer, 1}, pauseFor));
    Processor processor(spec, plan, 3);
    auto report = processor.run();
    const auto& probes = processor.probes();
    VirtualTime resumeAt = pauseAt + pauseFor;

    bool ok = report.pass;
    std::string detail;
    for (int m = 0; m < spec.mapperCount; ++m) {
        auto mi = static_cast<size_t>(m);
        double steady = meanWindow(probes, mi, pauseAt - sim::seconds(3), pauseAt);
        int drops = 0;
        uint64_t peak = 0;
        const ProbeSample* previous = nullptr;
        for (const auto& p : probes) {
            // Rounds already in flight when the pause starts may still trim once.
            if (p.time < pauseAt + spec.rpcTimeout || p.time > resumeAt) {
                continue;
            }
            peak = std::max(peak, p.windowBytes[mi]);
            if (previous && previous->windowEntries[mi] > 0) {
                uint64_t batch = previous->windowBytes[mi] / previous->windowEntries[mi];
                if (p.windowBytes[mi] + batch < previous->windowBytes[mi]) {
                    ++drops;
                }
            }
            previous = &p;
        }
        std::optional<VirtualTime> shrunk;
        for (const auto& p : probes) {
            if (p.time > resumeAt && static_cast<double>(p.windowBytes[mi]) <= 2 * steady) {
                shrunk = p.time - resumeAt;
                break;
            }
        }
        bool grew = static_cast<double>(peak) > 2 * steady;
        ok = ok && steady > 0 && drops == 0 && grew && shrunk && *shrunk <= 10 * pauseFor;
        detail += fmt("%smapper %d: steady %.0f B, peak %llu B, %d drops beyond one batch, back within 2x %.1f s after resume", m ? "; " : "",
                      m, steady, static_cast<unsigned long long>(peak), drops, shrunk ? sim::toSeconds(*shrunk) : -1.0);
    }
    return {ok, fmt("reducer 1 paused %.1f s: ", sim::toSeconds(pauseFor)) + detail};
}

// ---- 6 -------------------------------------------------------------------------------------------

Outcome writeAmplification() {
    auto passThrough = [](int64_t payload, bool persistShuffle) {
        auto spec = baseSpec(2, 2, 10000, payload);
        spec.pipeline = "pass-through";
        spec.mapper.persistShuffle = persistShuffle;
        return runProcessor(spec, FaultPlan{}, 21);
    };
    auto small = passThrough(100, false);
    auto large = passThrough(1000, false);
    auto strawman = passThrough(1000, true);
    auto demo = demoSpec();
    demo.input.payloadBytes = 1024;
    auto demoReport = runProcessor(demo, FaultPlan{}, 21);

    auto span = [](std::initializer_list<const ByteRange*> ranges) {
        uint64_t lo = UINT64_MAX, hi = 0;
        for (const auto* r : ranges) {
            lo = std::min(lo, r->min);
            hi = std::max(hi, r->max);
        }
        return std::pair{lo, hi};
    };
    auto [mlo, mhi] = span({&small.writeAmplification.mapperMetaPerCommit, &large.writeAmplification.mapperMetaPerCommit});
    auto [rlo, rhi] = span({&small.writeAmplification.reducerMetaPerCommit, &large.writeAmplification.reducerMetaPerCommit});
    bool invariant = mhi - mlo <= 16 && rhi - rlo <= 16 && small.writeAmplification.mapperMetaPerCommit.count > 0
                     && small.writeAmplification.reducerMetaPerCommit.count > 0;
    bool ok = small.pass && large.pass && strawman.pass && demoReport.pass && invariant
              && large.writeAmplification.payloadBytes >= 10'000'000 && strawman.writeAmplification.ratio >= 1.0
              && demoReport.writeAmplification.ratio < 0.05;
    return {ok, fmt("meta per commit at 100 B vs 1000 B rows: mapper %llu..%llu B, reducer %llu..%llu B (slack 16 B); "
                    "payload %.1f MB; strawman ratio %.3f (need >= 1.0); demo ratio %.4f with 1 KB rows (need < 0.05)",
                    static_cast<unsigned long long>(mlo), static_cast<unsigned long long>(mhi), static_cast<unsigned long long>(rlo),
                    static_cast<unsigned long long>(rhi), static_cast<double>(large.writeAmplification.payloadBytes) / 1e6,
                    strawman.writeAmplification.ratio, demoReport.writeAmplification.ratio)};
}

// ---- 7 -------------------------------------------------------------------------------------------

int tokenReplayMismatches(int replays) {
    std::mt19937_64 rng(77);
    StateStore store;
    store.createOrderedTable("input", sourceSchema());
    auto log = std::make_shared<OffsetLog>(3, sourceSchema(), 99);
    OrderedTableReader tableReader(store, "input");
    OffsetLogReader logReader(log);

    InputSpec input;
    input.rows = 4000;
    input.payloadBytes = 8;
    auto workload = generateWorkload(input, 1, 5);
    size_t appended = 0;
    auto appendSome = [&] {
        size_t n = std::min<size_t>(workload.partitions[0].size() - appended, 1 + rng() % 40);
        Rowset batch;
        batch.nameTable = sourceSchema();
        for (size_t i = 0; i < n; ++i) {
            auto row = toSourceRow(workload.partitions[0][appended + i]);
            batch.rows.push_back(row);
            log->append(rng() % 3, row);
        }
        store.appendRows("input", batch);
        appended += n;
    };

    struct Stored {
        ContinuationToken token;
        std::vector<Row> rows;
    };
    std::vector<Stored> tableTokens, logTokens;
    ContinuationToken tablePos = tableReader.initialToken(), logPos = logReader.initialToken();
    int mismatches = 0;
    int done = 0;
    while (done < replays) {
        if (appended < workload.partitions[0].size()) {
            appendSome();
        }
        // Record a read from the current position, then replay a random earlier token.
        auto fresh = tableReader.read(0, 50, tablePos);
        tableTokens.push_back({tablePos, fresh.rowset.rows});
        if (!fresh.rowset.rows.empty() && rng() % 2) {
            tablePos = fresh.nextToken;
        }
        auto freshLog = logReader.read(0, 50, logPos);
        logTokens.push_back({logPos, freshLog.rowset.rows});
        if (!freshLog.rowset.rows.empty() && rng() % 2) {
            logPos = freshLog.nextToken;
        }
        for (auto* stored : {&tableTokens, &logTokens}) {
            const auto& pick = (*stored)[rng() % stored->size()];
            auto& reader = stored == &tableTokens ? static_cast<IPartitionReader&>(tableReader) : static_cast<IPartitionReader&>(logReader);
            auto again = reader.read(0, static_cast<int64_t>(pick.rows.size()), ContinuationToken::deserialize(pick.token.serialize()));
            std::vector<Row> prefix(again.rowset.rows.begin(),
                                    again.rowset.rows.begin() + static_cast<std::ptrdiff_t>(std::min(again.rowset.rows.size(), pick.rows.size())));
            mismatches += prefix != pick.rows;
            ++done;
        }
    }
    return mismatches;
}

Outcome determinism() {
    int identical = 0, runs = 0;
    for (auto source : {SourceKind::OrderedTable, SourceKind::OffsetLog}) {
        auto spec = baseSpec(4, 2, 5000, 32);
        spec.input.source = source;
        for (uint64_t seed : {3ull, 17ull, 42ull}) {
            auto plan = generateFaultPlan(spec, seed);
            plan.messageDropProbability = 0.05;
            auto a = runProcessor(spec, plan, seed).toJson().dump(2);
            auto b = runProcessor(spec, plan, seed).toJson().dump(2);
            identical += a == b;
            ++runs;
        }
    }
    int mismatches = tokenReplayMismatches(10000);
    return {identical == runs && mismatches == 0,
            fmt("%d/%d reruns byte-identical (ordered table and offset log sources, faults and 5%% drops); "
                "10000 token replays, %d mismatches",
                identical, runs, mismatches)};
}

// ---- 8 -------------------------------------------------------------------------------------------

Outcome negativeControl() {
    auto spec = baseSpec(4, 2, 10000, 32);
    std::string detail;
    bool ok = true;
    for (auto order : {CommitOrder::StateFirst, CommitOrder::UserFirst, CommitOrder::Atomic}) {
        auto broken = spec;
        broken.reducer.commitOrder = order;
        int failed = 0;
        int64_t duplicates = 0, losses = 0;
        uint64_t violations = 0;
        for (uint64_t seed = 1; seed <= 10; ++seed) {
            FaultPlan plan;
            std::mt19937_64 rng(seed);
            // Kill each reducer every ~0.7 s while input is flowing.
            for (VirtualTime t = sim::milliseconds(400); t < sim::seconds(6); t += sim::milliseconds(600 + static_cast<int64_t>(rng() % 200))) {
                plan.events.push_back(event(t, FaultAction::Kill, NodeId{WorkerKind::Reducer, static_cast<int>(rng() % 2)}, 0));
            }
            auto report = runProcessor(broken, plan, seed);
            failed += !report.pass;
            duplicates += report.exactlyOnce.duplicates;
            losses += report.exactlyOnce.losses;
            violations += report.snapshotViolations;
        }
        const char* name = order == CommitOrder::StateFirst ? "state-first" : order == CommitOrder::UserFirst ? "user-first" : "atomic (control)";
        if (order == CommitOrder::Atomic) {
            ok = ok && failed == 0 && violations == 0;
        } else {
            ok = ok && failed > 0 && violations > 0;
        }
        detail += fmt("%s%s: %d/10 kill scenarios FAIL (duplicates=%lld losses=%lld), snapshot violations=%llu", detail.empty() ? "" : "; ",
                      name, failed, static_cast<long long>(duplicates), static_cast<long long>(losses),
                      static_cast<unsigned long long>(violations));
    }
    return {ok, detail};
}

}// namespace

int main(int argc, char** argv) {
    struct Criterion {
        int number;
        const char* name;
        std::function<Outcome()> check;
    };
    std::vector<Criterion> criteria{
        {1, "exactly-once under faults", exactlyOnceUnderFaults},
        {2, "split-brain safety", splitBrainSafety},
        {3, "healthy-worker progress", healthyWorkerProgress},
        {4, "mapper recovery shape", mapperRecoveryShape},
        {5, "reducer outage shape", reducerOutageShape},
        {6, "write amplification", writeAmplification},
        {7, "determinism", determinism},
        {8, "negative control", negativeControl},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) {
        selected.insert(std::stoi(argv[i]));
    }
    int failures = 0;
    for (const auto& c : criteria) {
        if (!selected.empty() && !selected.count(c.number)) {
            continue;
        }
        Outcome outcome;
        try {
            outcome = c.check();
        } catch (const std::exception& e) {
            outcome = {false, std::string("threw: ") + e.what()};
        }
        failures += !outcome.pass;
        std::printf("[%s] %d %s: %s\n", outcome.pass ? "PASS" : "FAIL", c.number, c.name, outcome.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
