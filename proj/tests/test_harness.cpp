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
#include <streamshuffle/processor.hpp>

#include <gtest/gtest.h>

using namespace streamshuffle;
using nlohmann::json;

namespace {

std::string configErrorOf(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

ProcessorSpec smallSpec(int mappers, int reducers, int64_t rows, const std::string& pipeline = "access-tally") {
    ProcessorSpec spec;
    spec.processorGuid = "test";
    spec.mapperCount = mappers;
    spec.reducerCount = reducers;
    spec.pipeline = pipeline;
    spec.input.rows = rows;
    spec.validate();
    return spec;
}

}// namespace

// ---- configuration -------------------------------------------------------------------------------

TEST(SpecJson, ErrorsNameTheField) {
    EXPECT_NE(configErrorOf([] { ProcessorSpec::fromJson(json{{"mapper_count", 0}}); }).find("mapper_count"), std::string::npos);
    EXPECT_NE(configErrorOf([] { ProcessorSpec::fromJson(json{{"mapper_count", "two"}}); }).find("mapper_count"), std::string::npos);
    EXPECT_NE(configErrorOf([] { ProcessorSpec::fromJson(json{{"input", {{"rowz", 5}}}}); }).find("input.rowz"), std::string::npos);
    EXPECT_NE(configErrorOf([] { ProcessorSpec::fromJson(json{{"input", {{"source", "kafka"}}}}); }).find("input.source"),
              std::string::npos);
    EXPECT_NE(configErrorOf([] { ProcessorSpec::fromJson(json{{"reducer", {{"commit_order", "later"}}}}); }).find("reducer.commit_order"),
              std::string::npos);
    EXPECT_NE(configErrorOf([] { ProcessorSpec::fromJson(json{{"mapper", {{"backoff_ms", -3}}}}); }).find("mapper.backoff_ms"),
              std::string::npos);
    EXPECT_NE(configErrorOf([] { ProcessorSpec::fromJson(json::array()); }).find("<root>"), std::string::npos);
}

TEST(SpecJson, RoundTrips) {
    auto spec = ProcessorSpec::fromJson(json{{"mapper_count", 3},
                                             {"reducer_count", 2},
                                             {"pipeline", "pass-through"},
                                             {"input", {{"source", "offset_log"}, {"rows", 77}, {"append_interval_ms", 7}}},
                                             {"reducer", {{"commit_order", "user_first"}}},
                                             {"controller", {{"record_rounds", false}}}});
    EXPECT_EQ(spec.input.source, SourceKind::OffsetLog);
    EXPECT_EQ(spec.input.appendInterval, sim::milliseconds(7));
    EXPECT_EQ(spec.reducer.commitOrder, CommitOrder::UserFirst);
    auto again = ProcessorSpec::fromJson(json::parse(spec.toJson().dump()));
    EXPECT_EQ(again.toJson(), spec.toJson());
}

TEST(FaultPlanJson, ParsesAndValidates) {
    auto spec = smallSpec(2, 2, 100);
    auto plan = FaultPlan::fromJson(json{{"message_drop_probability", 0.05},
                                         {"rng_seed", 17},
                                         {"events", {{{"at_ms", 1500}, {"action", "pause"}, {"worker", "reducer:1"}, {"duration_ms", 200}}}},
                                         {"partitioned_pairs", {{{"a", "mapper:0"}, {"b", "reducer:1"}, {"from_ms", 10}, {"until_ms", 20}}}},
                                         {"controls", {{{"partition", 1}, {"seq", 4}, {"directive", "crash-mapper"}}}}});
    EXPECT_NO_THROW(plan.validate(spec));
    ASSERT_EQ(plan.events.size(), 1u);
    EXPECT_EQ(plan.events[0].target, (NodeId{WorkerKind::Reducer, 1}));
    EXPECT_EQ(plan.events[0].at, sim::milliseconds(1500));
    EXPECT_EQ(plan.rngSeed, std::optional<uint64_t>(17));
    EXPECT_EQ(FaultPlan::fromJson(json::parse(plan.toJson().dump())).toJson(), plan.toJson());

    EXPECT_NE(configErrorOf([] { FaultPlan::fromJson(json{{"events", {{{"at_ms", 1}, {"action", "explode"}, {"worker", "mapper:0"}}}}}); })
                  .find("events[0].action"),
              std::string::npos);
    EXPECT_NE(configErrorOf([] { FaultPlan::fromJson(json{{"events", {{{"action", "kill"}, {"worker", "mapper:0"}}}}}); }).find("at_ms"),
              std::string::npos);
    EXPECT_NE(configErrorOf([] { FaultPlan::fromJson(json{{"events", {{{"at_ms", 1}, {"action", "kill"}, {"worker", "gpu:0"}}}}}); })
                  .find("gpu:0"),
              std::string::npos);
    auto outOfRange = FaultPlan::fromJson(json{{"events", {{{"at_ms", 1}, {"action", "kill"}, {"worker", "mapper:5"}}}}});
    EXPECT_NE(configErrorOf([&] { outOfRange.validate(spec); }).find("events[0].worker"), std::string::npos);
    auto badDirective = FaultPlan::fromJson(json{{"controls", {{{"partition", 0}, {"seq", 1}, {"directive", "dance"}}}}});
    EXPECT_NE(configErrorOf([&] { badDirective.validate(spec); }).find("controls[0].directive"), std::string::npos);
    auto badPause = FaultPlan::fromJson(json{{"controls", {{{"partition", 0}, {"seq", 1}, {"directive", "pause-mapper:soon"}}}}});
    EXPECT_NE(configErrorOf([&] { badPause.validate(spec); }).find("controls[0].directive"), std::string::npos);
    auto goodPause = FaultPlan::fromJson(json{{"controls", {{{"partition", 0}, {"seq", 1}, {"directive", "pause-reducer:250"}}}}});
    EXPECT_NO_THROW(goodPause.validate(spec));
    EXPECT_NE(configErrorOf([&] { FaultPlan::fromJson(json{{"message_drop_probability", 1.0}}).validate(spec); })
                  .find("message_drop_probability"),
              std::string::npos);
}

TEST(FaultPlanJson, NodeIds) {
    EXPECT_EQ(parseNodeId("mapper:3"), (NodeId{WorkerKind::Mapper, 3}));
    EXPECT_EQ(parseNodeId("reducer:0"), (NodeId{WorkerKind::Reducer, 0}));
    EXPECT_THROW(parseNodeId("mapper"), ConfigError);
    EXPECT_THROW(parseNodeId("mapper:x"), ConfigError);
    EXPECT_THROW(parseNodeId("mapper:1x"), ConfigError);
    EXPECT_THROW(loadJsonFile("/nonexistent/spec.json"), ConfigError);
}

TEST(FaultGenerator, DeterministicAndInRange) {
    auto spec = smallSpec(4, 2, 10000);
    auto a = generateFaultPlan(spec, 5).toJson();
    EXPECT_EQ(a, generateFaultPlan(spec, 5).toJson());
    EXPECT_NE(a, generateFaultPlan(spec, 6).toJson());
    auto killsOnly = generateFaultPlan(spec, 5, FaultGeneratorOptions{true, false, false});
    for (const auto& e : killsOnly.events) {
        EXPECT_EQ(e.action, FaultAction::Kill);
        EXPECT_GE(e.at, sim::milliseconds(300));
        EXPECT_LE(e.at, sim::milliseconds(300) + productionTime(spec) + sim::seconds(2));
    }
    EXPECT_NO_THROW(killsOnly.validate(spec));
    // 2500 rows per partition at 10 rows every 20 ms.
    EXPECT_EQ(productionTime(spec), sim::seconds(5));
}

// ---- workload and oracle -------------------------------------------------------------------------

TEST(Workload, RoundRobinAndDeterministic) {
    InputSpec input;
    input.rows = 10;
    auto w = generateWorkload(input, 3, 1);
    ASSERT_EQ(w.partitions.size(), 3u);
    EXPECT_EQ(w.partitions[0].size(), 4u);
    EXPECT_EQ(w.partitions[2].size(), 3u);
    EXPECT_EQ(w.totalEvents(), 10u);
    EXPECT_EQ(w.partitions[1][2].seq, 2);
    auto again = generateWorkload(input, 3, 1);
    for (size_t p = 0; p < 3; ++p) {
        for (size_t i = 0; i < w.partitions[p].size(); ++i) {
            EXPECT_EQ(encodeBody(w.partitions[p][i]), encodeBody(again.partitions[p][i]));
        }
    }
}

TEST(Workload, PartitionOfKeysMatchesReferenceHash) {
    // FNV-1a 64 over the encoded (user, cluster) values, reference computed independently.
    EXPECT_EQ(reducerForKey("user-0", "cluster-0", 2), 1);
    EXPECT_EQ(reducerForKey("user-0", "cluster-0", 7), 4);
    EXPECT_EQ(reducerForKey("user-7", "cluster-3", 7), 2);
    EXPECT_EQ(reducerForKey("user-42", "cluster-1", 7), 4);
}

TEST(Workload, OracleTalliesCountEntries) {
    InputSpec input;
    input.rows = 500;
    input.missingUserFraction = 0.2;
    auto w = generateWorkload(input, 2, 3);
    auto oracle = computeAccessOracle(w, 3);
    int64_t withUser = 0;
    for (const auto& partition : w.partitions) {
        for (const auto& event : partition) {
            for (const auto& entry : event.entries) {
                withUser += !entry.user.empty();
            }
        }
    }
    int64_t tallied = 0;
    for (const auto& [key, value] : oracle.tally) {
        tallied += value.tally;
        EXPECT_FALSE(key.first.empty());
    }
    EXPECT_EQ(tallied, withUser);
    EXPECT_EQ(static_cast<int64_t>(oracle.expectedRows.size()), withUser);
    EXPECT_LT(withUser, 500 * 3);
}

// ---- verification --------------------------------------------------------------------------------

namespace {

Row effect(int p, int64_t seq, int entry, int64_t count) {
    return Row{DataValue::int64(p), DataValue::int64(seq), DataValue::int64(entry), DataValue::int64(count)};
}

}// namespace

TEST(Verify, EmptyInputPasses) {
    auto verdict = verifyExactlyOnce({}, {});
    EXPECT_TRUE(verdict.pass);
}

TEST(Verify, CountsDuplicatesLossesAndStrays) {
    std::set<RowId> expected{{0, 0, 0}, {0, 1, 0}, {1, 0, 0}};
    auto verdict = verifyExactlyOnce({effect(0, 0, 0, 3), effect(1, 0, 0, 1), effect(5, 5, 5, 1)}, expected);
    EXPECT_FALSE(verdict.pass);
    EXPECT_EQ(verdict.duplicates, 2);
    EXPECT_EQ(verdict.losses, 1);
    EXPECT_EQ(verdict.unexpected, 1);
    EXPECT_FALSE(verdict.samples.empty());
}

TEST(Verify, ComparesUserTable) {
    std::map<TallyKey, TallyValue> oracle{{{"u", "c"}, {2, 10}}};
    std::vector<Row> tally{Row{DataValue::string("u"), DataValue::string("c"), DataValue::int64(2), DataValue::int64(10)}};
    EXPECT_TRUE(verifyExactlyOnce({}, {}, &tally, &oracle).pass);
    tally[0] = Row{DataValue::string("u"), DataValue::string("c"), DataValue::int64(3), DataValue::int64(10)};
    EXPECT_EQ(verifyExactlyOnce({}, {}, &tally, &oracle).tableMismatches, 1);
    tally.push_back(Row{DataValue::string("v"), DataValue::string("c"), DataValue::int64(1), DataValue::int64(1)});
    EXPECT_EQ(verifyExactlyOnce({}, {}, &tally, &oracle).tableMismatches, 2);
}

TEST(WriteAmplification, ZeroInputAndNoJournal) {
    auto result = measureWriteAmplification(std::vector<JournalRecord>{}, TableRoles{"m", "r", ""}, 0);
    EXPECT_EQ(result.ratio, 0.0);
    EXPECT_EQ(result.metaBytes, 0u);
    StateStore store;
    EXPECT_THROW(measureWriteAmplification(store, TableRoles{"m", "r", ""}, 100), JournalDisabled);
}

TEST(WriteAmplification, AttributesBytesByTable) {
    StateStore store;
    store.enableJournal(std::make_shared<Journal>());
    store.createSortedTable("m", TableSchema{NameTable({"k", "v"}), 1});
    store.createSortedTable("u", TableSchema{NameTable({"k", "v"}), 1});
    auto tx = store.beginTransaction();
    tx->write("m", Row{DataValue::int64(1), DataValue::int64(2)});
    tx->write("u", Row{DataValue::int64(1), DataValue::string(std::string(100, 'x'))});
    ASSERT_EQ(tx->commit(), CommitResult::Committed);
    auto result = measureWriteAmplification(store, TableRoles{"m", "r", ""}, 1000);
    EXPECT_GT(result.metaBytes, 0u);
    EXPECT_GT(result.userBytes, 100u);
    EXPECT_EQ(result.mapperMetaPerCommit.count, 1u);
    EXPECT_EQ(result.mapperMetaPerCommit.min, result.metaBytes);
    EXPECT_EQ(result.reducerMetaPerCommit.count, 0u);
    EXPECT_DOUBLE_EQ(result.ratio, static_cast<double>(result.metaBytes) / 1000.0);
}

// ---- whole processor -----------------------------------------------------------------------------

TEST(Processor, SmallPassThroughWithoutFaults) {
    auto spec = smallSpec(1, 1, 100, "pass-through");
    Processor processor(spec, FaultPlan{}, 1);
    auto report = processor.run();
    EXPECT_TRUE(report.pass) << report.toJson().dump(2);
    EXPECT_EQ(report.exactlyOnce.duplicates, 0);
    EXPECT_EQ(report.exactlyOnce.losses, 0);
    EXPECT_EQ(report.mapperRestarts, std::vector<int>{0});
    EXPECT_EQ(processor.store().trimmedUpTo("input_0"), 100);
    EXPECT_EQ(report.toJson()["verdict"], "PASS");
}

TEST(Processor, DemoSpecPasses) {
    auto report = runProcessor(demoSpec(), FaultPlan{}, 3);
    EXPECT_TRUE(report.pass) << report.toJson().dump(2);
    EXPECT_EQ(report.snapshotViolations, 0u);
    EXPECT_GT(report.snapshotCommitsChecked, 0u);
}

TEST(Processor, SameSeedSameReport) {
    auto spec = smallSpec(2, 2, 1500);
    auto plan = generateFaultPlan(spec, 4);
    plan.messageDropProbability = 0.05;
    auto a = runProcessor(spec, plan, 4).toJson().dump();
    auto b = runProcessor(spec, plan, 4).toJson().dump();
    EXPECT_EQ(a, b);
}

TEST(Processor, DuplicateMapperIsDetected) {
    auto spec = smallSpec(2, 2, 3000);
    FaultPlan plan;
    plan.events.push_back(FaultEvent{sim::seconds(1), FaultAction::Duplicate, NodeId{WorkerKind::Mapper, 0}, sim::seconds(3)});
    auto report = runProcessor(spec, plan, 8);
    EXPECT_TRUE(report.pass) << report.toJson().dump(2);
    EXPECT_EQ(report.duplicatesSpawned, 1);
    EXPECT_LE(report.impostorCommitsBeforeDetection, 1);
}

TEST(Processor, EveryWorkerKilledOnceAcrossSeeds) {
    auto spec = smallSpec(4, 2, 10000);
    spec.controller.recordRounds = false;
    int failures = 0;
    for (uint64_t seed = 1; seed <= 50; ++seed) {
        FaultPlan plan;
        for (int w = 0; w < 6; ++w) {
            NodeId node = w < 4 ? NodeId{WorkerKind::Mapper, w} : NodeId{WorkerKind::Reducer, w - 4};
            auto at = sim::milliseconds(300 + static_cast<int64_t>((seed * 733 + static_cast<uint64_t>(w) * 911) % 5000));
            plan.events.push_back(FaultEvent{at, FaultAction::Kill, node, 0});
        }
        auto report = runProcessor(spec, plan, seed);
        if (!report.pass) {
            ++failures;
            ADD_FAILURE() << "seed " << seed << ": " << report.toJson().dump(2);
        }
        for (int restarts : report.mapperRestarts) {
            EXPECT_GE(restarts, 1);
        }
    }
    EXPECT_EQ(failures, 0);
}

TEST(Processor, StalledReducerIsReportedAsDeadlock) {
    auto spec = smallSpec(1, 1, 200);
    spec.controller.noProgressBound = sim::seconds(5);
    FaultPlan plan;
    plan.events.push_back(FaultEvent{sim::milliseconds(100), FaultAction::Pause, NodeId{WorkerKind::Reducer, 0}, 0});
    EXPECT_THROW(runProcessor(spec, plan, 1), Deadlock);
}

TEST(Processor, BrokenOrderingIsCaught) {
    auto spec = smallSpec(2, 2, 4000);
    spec.reducer.commitOrder = CommitOrder::StateFirst;
    spec.reducer.brokenCommitGap = sim::milliseconds(50);
    FaultPlan plan;
    for (int i = 0; i < 6; ++i) {
        plan.events.push_back(FaultEvent{sim::milliseconds(500 + 700 * i), FaultAction::Kill, NodeId{WorkerKind::Reducer, i % 2}, 0});
    }
    int caught = 0;
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        auto report = runProcessor(spec, plan, seed);
        caught += !report.pass || report.snapshotViolations > 0;
    }
    EXPECT_GT(caught, 0);
}
