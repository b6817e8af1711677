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
#include <streamshuffle/scenario.hpp>

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <random>

namespace streamshuffle {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

void requireObject(const json& j, const std::string& path) {
    if (!j.is_object()) {
        throw ConfigError("field '" + (path.empty() ? std::string("<root>") : path) + "': expected an object");
    }
}

void checkKeys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    requireObject(j, path);
    for (const auto& item : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return item.key() == a; })) {
            throw ConfigError("field '" + join(path, item.key()) + "': unknown field");
        }
    }
}

template<typename T>
const char* typeName() {
    if constexpr (std::is_same_v<T, bool>) {
        return "boolean";
    } else if constexpr (std::is_integral_v<T>) {
        return "integer";
    } else if constexpr (std::is_floating_point_v<T>) {
        return "number";
    } else {
        return "string";
    }
}

template<typename T>
bool matches(const json& v) {
    if constexpr (std::is_same_v<T, bool>) {
        return v.is_boolean();
    } else if constexpr (std::is_unsigned_v<T>) {
        return v.is_number_unsigned() || (v.is_number_integer() && v.get<int64_t>() >= 0);
    } else if constexpr (std::is_integral_v<T>) {
        return v.is_number_integer();
    } else if constexpr (std::is_floating_point_v<T>) {
        return v.is_number();
    } else {
        return v.is_string();
    }
}

template<typename T>
void read(const json& j, const std::string& path, const char* key, T& out) {
    auto it = j.find(key);
    if (it == j.end()) {
        return;
    }
    if (!matches<T>(*it)) {
        throw ConfigError("field '" + join(path, key) + "': expected " + typeName<T>());
    }
    out = it->get<T>();
}

void readMs(const json& j, const std::string& path, const char* key, VirtualTime& out) {
    auto it = j.find(key);
    if (it == j.end()) {
        return;
    }
    if (!it->is_number()) {
        throw ConfigError("field '" + join(path, key) + "': expected number of milliseconds");
    }
    double ms = it->get<double>();
    if (ms < 0) {
        throw ConfigError("field '" + join(path, key) + "': must be non-negative");
    }
    out = static_cast<VirtualTime>(ms * 1000.0);
}

double ms(VirtualTime t) {
    return static_cast<double>(t) / 1000.0;
}

const char* sourceName(SourceKind kind) {
    return kind == SourceKind::OrderedTable ? "ordered_table" : "offset_log";
}

const char* commitOrderName(CommitOrder order) {
    switch (order) {
        case CommitOrder::Atomic: return "atomic";
        case CommitOrder::StateFirst: return "state_first";
        case CommitOrder::UserFirst: return "user_first";
    }
    return "?";
}

}// namespace

NodeId parseNodeId(const std::string& text) {
    auto colon = text.find(':');
    if (colon == std::string::npos) {
        throw ConfigError("worker '" + text + "': expected mapper:N or reducer:N");
    }
    auto kind = text.substr(0, colon);
    NodeId node;
    if (kind == "mapper") {
        node.kind = WorkerKind::Mapper;
    } else if (kind == "reducer") {
        node.kind = WorkerKind::Reducer;
    } else {
        throw ConfigError("worker '" + text + "': unknown worker kind '" + kind + "'");
    }
    try {
        size_t used = 0;
        node.index = std::stoi(text.substr(colon + 1), &used);
        if (used != text.size() - colon - 1) {
            throw std::invalid_argument("trailing");
        }
    } catch (const std::logic_error&) {
        throw ConfigError("worker '" + text + "': bad index");
    }
    return node;
}

json loadJsonFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open " + path);
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

// ---- ProcessorSpec -----------------------------------------------------------------------------

ProcessorSpec ProcessorSpec::fromJson(const json& j) {
    checkKeys(j, "",
              {"processor_guid", "mapper_count", "reducer_count", "pipeline", "mapper_state_table", "reducer_state_table",
               "user_table", "effects_table", "shuffle_table", "input", "mapper", "reducer", "network", "discovery", "controller"});
    ProcessorSpec spec;
    read(j, "", "processor_guid", spec.processorGuid);
    read(j, "", "mapper_count", spec.mapperCount);
    read(j, "", "reducer_count", spec.reducerCount);
    read(j, "", "pipeline", spec.pipeline);
    read(j, "", "mapper_state_table", spec.mapperStateTable);
    read(j, "", "reducer_state_table", spec.reducerStateTable);
    read(j, "", "user_table", spec.userTable);
    read(j, "", "effects_table", spec.effectsTable);
    read(j, "", "shuffle_table", spec.shuffleTable);

    if (auto it = j.find("input"); it != j.end()) {
        const std::string path = "input";
        checkKeys(*it, path,
                  {"source", "rows", "payload_bytes", "rows_per_append", "append_interval_ms", "sub_streams", "users", "clusters",
                   "missing_user_fraction"});
        std::string source = sourceName(spec.input.source);
        read(*it, path, "source", source);
        if (source == "ordered_table") {
            spec.input.source = SourceKind::OrderedTable;
        } else if (source == "offset_log") {
            spec.input.source = SourceKind::OffsetLog;
        } else {
            throw ConfigError("field 'input.source': expected ordered_table or offset_log");
        }
        read(*it, path, "rows", spec.input.rows);
        read(*it, path, "payload_bytes", spec.input.payloadBytes);
        read(*it, path, "rows_per_append", spec.input.rowsPerAppend);
        readMs(*it, path, "append_interval_ms", spec.input.appendInterval);
        read(*it, path, "sub_streams", spec.input.subStreams);
        read(*it, path, "users", spec.input.users);
        read(*it, path, "clusters", spec.input.clusters);
        read(*it, path, "missing_user_fraction", spec.input.missingUserFraction);
    }
    if (auto it = j.find("mapper"); it != j.end()) {
        const std::string path = "mapper";
        checkKeys(*it, path,
                  {"max_batch_rows", "memory_limit_bytes", "backoff_ms", "split_brain_delay_ms", "trim_period_ms", "reader_trim_delay_ms", "persist_shuffle"});
        read(*it, path, "max_batch_rows", spec.mapper.maxBatchRows);
        read(*it, path, "memory_limit_bytes", spec.mapper.memoryLimitBytes);
        readMs(*it, path, "backoff_ms", spec.mapper.backoff);
        readMs(*it, path, "split_brain_delay_ms", spec.mapper.splitBrainDelay);
        readMs(*it, path, "trim_period_ms", spec.mapper.trimPeriod);
        readMs(*it, path, "reader_trim_delay_ms", spec.mapper.readerTrimDelay);
        read(*it, path, "persist_shuffle", spec.mapper.persistShuffle);
    }
    if (auto it = j.find("reducer"); it != j.end()) {
        const std::string path = "reducer";
        checkKeys(*it, path, {"max_rows_per_mapper_per_round", "backoff_ms", "commit_order", "broken_commit_gap_ms"});
        read(*it, path, "max_rows_per_mapper_per_round", spec.reducer.maxRowsPerMapperPerRound);
        readMs(*it, path, "backoff_ms", spec.reducer.backoff);
        std::string order = commitOrderName(spec.reducer.commitOrder);
        read(*it, path, "commit_order", order);
        if (order == "atomic") {
            spec.reducer.commitOrder = CommitOrder::Atomic;
        } else if (order == "state_first") {
            spec.reducer.commitOrder = CommitOrder::StateFirst;
        } else if (order == "user_first") {
            spec.reducer.commitOrder = CommitOrder::UserFirst;
        } else {
            throw ConfigError("field 'reducer.commit_order': expected atomic, state_first or user_first");
        }
        readMs(*it, path, "broken_commit_gap_ms", spec.reducer.brokenCommitGap);
    }
    if (auto it = j.find("network"); it != j.end()) {
        checkKeys(*it, "network", {"rpc_timeout_ms"});
        readMs(*it, "network", "rpc_timeout_ms", spec.rpcTimeout);
    }
    if (auto it = j.find("discovery"); it != j.end()) {
        checkKeys(*it, "discovery", {"propagation_delay_ms"});
        readMs(*it, "discovery", "propagation_delay_ms", spec.discoveryDelay);
    }
    if (auto it = j.find("controller"); it != j.end()) {
        const std::string path = "controller";
        checkKeys(*it, path,
                  {"restart_delay_ms", "quiescent_rounds", "probe_interval_ms", "no_progress_bound_ms", "max_virtual_time_ms",
                   "record_rounds"});
        readMs(*it, path, "restart_delay_ms", spec.controller.restartDelay);
        read(*it, path, "quiescent_rounds", spec.controller.quiescentRounds);
        readMs(*it, path, "probe_interval_ms", spec.controller.probeInterval);
        readMs(*it, path, "no_progress_bound_ms", spec.controller.noProgressBound);
        readMs(*it, path, "max_virtual_time_ms", spec.controller.maxVirtualTime);
        read(*it, path, "record_rounds", spec.controller.recordRounds);
    }
    spec.validate();
    return spec;
}

void ProcessorSpec::validate() const {
    auto fail = [](const std::string& field, const std::string& why) { throw ConfigError("field '" + field + "': " + why); };
    if (mapperCount < 1) fail("mapper_count", "must be at least 1");
    if (reducerCount < 1) fail("reducer_count", "must be at least 1");
    if (mapperStateTable.empty()) fail("mapper_state_table", "must not be empty");
    if (reducerStateTable.empty()) fail("reducer_state_table", "must not be empty");
    if (userTable.empty()) fail("user_table", "must not be empty");
    if (mapperStateTable == reducerStateTable) fail("reducer_state_table", "must differ from mapper_state_table");
    if (input.rows < 0) fail("input.rows", "must be non-negative");
    if (input.payloadBytes < 0) fail("input.payload_bytes", "must be non-negative");
    if (input.rowsPerAppend < 1) fail("input.rows_per_append", "must be at least 1");
    if (input.appendInterval < 1) fail("input.append_interval_ms", "must be positive");
    if (input.subStreams < 1) fail("input.sub_streams", "must be at least 1");
    if (input.users < 1) fail("input.users", "must be at least 1");
    if (input.clusters < 1) fail("input.clusters", "must be at least 1");
    if (input.missingUserFraction < 0 || input.missingUserFraction > 1) fail("input.missing_user_fraction", "must be in [0, 1]");
    if (mapper.maxBatchRows < 1) fail("mapper.max_batch_rows", "must be at least 1");
    if (mapper.memoryLimitBytes < 1) fail("mapper.memory_limit_bytes", "must be positive");
    if (mapper.trimPeriod < 1) fail("mapper.trim_period_ms", "must be positive");
    if (reducer.maxRowsPerMapperPerRound < 1) fail("reducer.max_rows_per_mapper_per_round", "must be at least 1");
    if (reducer.backoff < 1) fail("reducer.backoff_ms", "must be positive");
    if (mapper.backoff < 1) fail("mapper.backoff_ms", "must be positive");
    if (rpcTimeout < 1) fail("network.rpc_timeout_ms", "must be positive");
    if (controller.quiescentRounds < 1) fail("controller.quiescent_rounds", "must be at least 1");
    if (controller.probeInterval < 1) fail("controller.probe_interval_ms", "must be positive");
    if (controller.noProgressBound < 1) fail("controller.no_progress_bound_ms", "must be positive");
}

ordered_json ProcessorSpec::toJson() const {
    ordered_json j;
    j["processor_guid"] = processorGuid;
    j["mapper_count"] = mapperCount;
    j["reducer_count"] = reducerCount;
    j["pipeline"] = pipeline;
    j["mapper_state_table"] = mapperStateTable;
    j["reducer_state_table"] = reducerStateTable;
    j["user_table"] = userTable;
    j["effects_table"] = effectsTable;
    j["shuffle_table"] = shuffleTable;
    j["input"] = ordered_json{{"source", sourceName(input.source)},
                              {"rows", input.rows},
                              {"payload_bytes", input.payloadBytes},
                              {"rows_per_append", input.rowsPerAppend},
                              {"append_interval_ms", ms(input.appendInterval)},
                              {"sub_streams", input.subStreams},
                              {"users", input.users},
                              {"clusters", input.clusters},
                              {"missing_user_fraction", input.missingUserFraction}};
    j["mapper"] = ordered_json{{"max_batch_rows", mapper.maxBatchRows},
                               {"memory_limit_bytes", mapper.memoryLimitBytes},
                               {"backoff_ms", ms(mapper.backoff)},
                               {"split_brain_delay_ms", ms(mapper.splitBrainDelay)},
                               {"trim_period_ms", ms(mapper.trimPeriod)},
                               {"reader_trim_delay_ms", ms(mapper.readerTrimDelay)},
                               {"persist_shuffle", mapper.persistShuffle}};
    j["reducer"] = ordered_json{{"max_rows_per_mapper_per_round", reducer.maxRowsPerMapperPerRound},
                                {"backoff_ms", ms(reducer.backoff)},
                                {"commit_order", commitOrderName(reducer.commitOrder)},
                                {"broken_commit_gap_ms", ms(reducer.brokenCommitGap)}};
    j["network"] = ordered_json{{"rpc_timeout_ms", ms(rpcTimeout)}};
    j["discovery"] = ordered_json{{"propagation_delay_ms", ms(discoveryDelay)}};
    j["controller"] = ordered_json{{"restart_delay_ms", ms(controller.restartDelay)},
                                   {"quiescent_rounds", controller.quiescentRounds},
                                   {"probe_interval_ms", ms(controller.probeInterval)},
                                   {"no_progress_bound_ms", ms(controller.noProgressBound)},
                                   {"max_virtual_time_ms", ms(controller.maxVirtualTime)},
                                   {"record_rounds", controller.recordRounds}};
    return j;
}

// ---- FaultPlan ---------------------------------------------------------------------------------

const char* toString(FaultAction action) {
    switch (action) {
        case FaultAction::Kill: return "kill";
        case FaultAction::Pause: return "pause";
        case FaultAction::Resume: return "resume";
        case FaultAction::Duplicate: return "duplicate";
        case FaultAction::Isolate: return "isolate";
    }
    return "?";
}

FaultPlan FaultPlan::fromJson(const json& j) {
    checkKeys(j, "", {"message_drop_probability", "delivery_delay_ms", "partitioned_pairs", "events", "controls", "rng_seed"});
    FaultPlan plan;
    read(j, "", "message_drop_probability", plan.messageDropProbability);
    if (auto it = j.find("delivery_delay_ms"); it != j.end()) {
        checkKeys(*it, "delivery_delay_ms", {"min", "max"});
        readMs(*it, "delivery_delay_ms", "min", plan.minDelay);
        readMs(*it, "delivery_delay_ms", "max", plan.maxDelay);
    }
    if (auto it = j.find("rng_seed"); it != j.end()) {
        uint64_t seed = 0;
        read(j, "", "rng_seed", seed);
        plan.rngSeed = seed;
    }
    auto nodeField = [](const json& obj, const std::string& path, const char* key) {
        std::string text;
        read(obj, path, key, text);
        if (text.empty()) {
            throw ConfigError("field '" + join(path, key) + "': required");
        }
        try {
            return parseNodeId(text);
        } catch (const ConfigError& e) {
            throw ConfigError("field '" + join(path, key) + "': " + e.what());
        }
    };
    if (auto it = j.find("partitioned_pairs"); it != j.end()) {
        if (!it->is_array()) {
            throw ConfigError("field 'partitioned_pairs': expected an array");
        }
        for (size_t i = 0; i < it->size(); ++i) {
            std::string path = "partitioned_pairs[" + std::to_string(i) + "]";
            const auto& item = (*it)[i];
            checkKeys(item, path, {"a", "b", "from_ms", "until_ms"});
            PartitionWindow window;
            window.a = nodeField(item, path, "a");
            window.b = nodeField(item, path, "b");
            readMs(item, path, "from_ms", window.from);
            window.until = window.from;
            readMs(item, path, "until_ms", window.until);
            plan.partitionedPairs.push_back(window);
        }
    }
    if (auto it = j.find("events"); it != j.end()) {
        if (!it->is_array()) {
            throw ConfigError("field 'events': expected an array");
        }
        for (size_t i = 0; i < it->size(); ++i) {
            std::string path = "events[" + std::to_string(i) + "]";
            const auto& item = (*it)[i];
            checkKeys(item, path, {"at_ms", "action", "worker", "duration_ms"});
            FaultEvent event;
            if (!item.contains("at_ms")) {
                throw ConfigError("field '" + path + ".at_ms': required");
            }
            readMs(item, path, "at_ms", event.at);
            std::string action;
            read(item, path, "action", action);
            if (action == "kill") {
                event.action = FaultAction::Kill;
            } else if (action == "pause") {
                event.action = FaultAction::Pause;
            } else if (action == "resume") {
                event.action = FaultAction::Resume;
            } else if (action == "duplicate") {
                event.action = FaultAction::Duplicate;
            } else if (action == "isolate") {
                event.action = FaultAction::Isolate;
            } else {
                throw ConfigError("field '" + path + ".action': expected kill, pause, resume, duplicate or isolate");
            }
            event.target = nodeField(item, path, "worker");
            readMs(item, path, "duration_ms", event.duration);
            plan.events.push_back(event);
        }
    }
    if (auto it = j.find("controls"); it != j.end()) {
        if (!it->is_array()) {
            throw ConfigError("field 'controls': expected an array");
        }
        for (size_t i = 0; i < it->size(); ++i) {
            std::string path = "controls[" + std::to_string(i) + "]";
            const auto& item = (*it)[i];
            checkKeys(item, path, {"partition", "seq", "directive"});
            ControlRow control;
            read(item, path, "partition", control.partition);
            read(item, path, "seq", control.seq);
            read(item, path, "directive", control.directive);
            plan.controls.push_back(control);
        }
    }
    return plan;
}

void FaultPlan::validate(const ProcessorSpec& spec) const {
    if (messageDropProbability < 0 || messageDropProbability >= 1) {
        throw ConfigError("field 'message_drop_probability': must be in [0, 1)");
    }
    if (maxDelay < minDelay) {
        throw ConfigError("field 'delivery_delay_ms.max': must not be below min");
    }
    auto checkNode = [&](const NodeId& node, const std::string& field) {
        int count = node.kind == WorkerKind::Mapper ? spec.mapperCount : spec.reducerCount;
        if (node.index < 0 || node.index >= count) {
            throw ConfigError("field '" + field + "': no worker " + node.debugString());
        }
    };
    for (size_t i = 0; i < events.size(); ++i) {
        checkNode(events[i].target, "events[" + std::to_string(i) + "].worker");
    }
    for (size_t i = 0; i < partitionedPairs.size(); ++i) {
        checkNode(partitionedPairs[i].a, "partitioned_pairs[" + std::to_string(i) + "].a");
        checkNode(partitionedPairs[i].b, "partitioned_pairs[" + std::to_string(i) + "].b");
    }
    for (size_t i = 0; i < controls.size(); ++i) {
        const auto& c = controls[i];
        if (c.partition < 0 || c.partition >= spec.mapperCount) {
            throw ConfigError("field 'controls[" + std::to_string(i) + "].partition': out of range");
        }
        bool known = c.directive == "crash-mapper" || c.directive == "crash-reducer";
        for (const char* prefix : {"pause-mapper:", "pause-reducer:"}) {
            std::string_view p(prefix);
            if (c.directive.rfind(p, 0) == 0) {
                auto ms = c.directive.substr(p.size());
                known = !ms.empty() && ms.size() <= 12 && std::all_of(ms.begin(), ms.end(), [](char ch) { return ch >= '0' && ch <= '9'; });
            }
        }
        if (!known) {
            throw ConfigError("field 'controls[" + std::to_string(i) + "].directive': unknown directive '" + c.directive + "'");
        }
    }
}

ordered_json FaultPlan::toJson() const {
    ordered_json j;
    j["message_drop_probability"] = messageDropProbability;
    j["delivery_delay_ms"] = ordered_json{{"min", ms(minDelay)}, {"max", ms(maxDelay)}};
    j["partitioned_pairs"] = ordered_json::array();
    for (const auto& p : partitionedPairs) {
        j["partitioned_pairs"].push_back(
            ordered_json{{"a", p.a.debugString()}, {"b", p.b.debugString()}, {"from_ms", ms(p.from)}, {"until_ms", ms(p.until)}});
    }
    j["events"] = ordered_json::array();
    for (const auto& e : events) {
        j["events"].push_back(ordered_json{
            {"at_ms", ms(e.at)}, {"action", toString(e.action)}, {"worker", e.target.debugString()}, {"duration_ms", ms(e.duration)}});
    }
    j["controls"] = ordered_json::array();
    for (const auto& c : controls) {
        j["controls"].push_back(ordered_json{{"partition", c.partition}, {"seq", c.seq}, {"directive", c.directive}});
    }
    if (rngSeed) {
        j["rng_seed"] = *rngSeed;
    }
    return j;
}

VirtualTime productionTime(const ProcessorSpec& spec) {
    int64_t perPartition = (spec.input.rows + spec.mapperCount - 1) / spec.mapperCount;
    int64_t appends = (perPartition + spec.input.rowsPerAppend - 1) / spec.input.rowsPerAppend;
    return appends * spec.input.appendInterval;
}

FaultPlan generateFaultPlan(const ProcessorSpec& spec, uint64_t seed, const FaultGeneratorOptions& options) {
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull);
    auto uniform = [&](VirtualTime lo, VirtualTime hi) { return std::uniform_int_distribution<VirtualTime>(lo, hi)(rng); };
    auto coin = [&](double p) { return std::uniform_real_distribution<double>(0, 1)(rng) < p; };

    VirtualTime horizon = options.horizon > 0 ? options.horizon : productionTime(spec) + sim::seconds(2);
    VirtualTime begin = options.start;
    VirtualTime end = begin + std::max<VirtualTime>(horizon, sim::milliseconds(100));

    FaultPlan plan;
    std::vector<NodeId> workers;
    for (int m = 0; m < spec.mapperCount; ++m) {
        workers.push_back(NodeId{WorkerKind::Mapper, m});
    }
    for (int r = 0; r < spec.reducerCount; ++r) {
        workers.push_back(NodeId{WorkerKind::Reducer, r});
    }
    for (const auto& node : workers) {
        if (options.kills && coin(0.6)) {
            plan.events.push_back(FaultEvent{uniform(begin, end), FaultAction::Kill, node, 0});
        }
        if (options.pauses && coin(0.5)) {
            plan.events.push_back(FaultEvent{uniform(begin, end), FaultAction::Pause, node, uniform(sim::milliseconds(200), sim::seconds(3))});
        }
        if (options.duplicates && coin(0.3)) {
            plan.events.push_back(
                FaultEvent{uniform(begin, end), FaultAction::Duplicate, node, uniform(sim::milliseconds(500), sim::seconds(4))});
        }
    }
    std::stable_sort(plan.events.begin(), plan.events.end(), [](const FaultEvent& a, const FaultEvent& b) { return a.at < b.at; });
    return plan;
}

}// namespace streamshuffle
