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
#include <streamshuffle/partition.hpp>
#include <streamshuffle/pipelines.hpp>

#include <algorithm>

namespace streamshuffle {

TableSchema effectsTableSchema() {
    return TableSchema{NameTable({"source_partition", "source_seq", "entry_index", "count"}), 3};
}

TableSchema tallyTableSchema() {
    return TableSchema{NameTable({"user", "cluster", "tally", "last_access"}), 2};
}

std::vector<std::string> pipelineIds() {
    return {"access-tally", "pass-through"};
}

namespace {

bool isMapperDirective(const std::string& d) {
    return d == "crash-mapper" || d.rfind("pause-mapper:", 0) == 0;
}

bool isReducerDirective(const std::string& d) {
    return d == "crash-reducer" || d.rfind("pause-reducer:", 0) == 0;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
    std::vector<std::string_view> parts;
    size_t start = 0;
    while (start <= text.size()) {
        size_t end = text.find(sep, start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        parts.push_back(text.substr(start, end - start));
        start = end + 1;
    }
    return parts;
}

struct ParsedLine {
    std::string directive;
    /// (user, cluster) per entry; user empty when absent.
    std::vector<std::pair<std::string, std::string>> entries;
};

ParsedLine parseLine(std::string_view body) {
    ParsedLine line;
    if (body.empty()) {
        return line;
    }
    for (auto token : split(body, ';')) {
        if (token.rfind("@@", 0) == 0) {
            line.directive = std::string(token.substr(2));
            continue;
        }
        std::pair<std::string, std::string> entry;
        for (auto field : split(token, ',')) {
            if (field.rfind("u=", 0) == 0) {
                entry.first = std::string(field.substr(2));
            } else if (field.rfind("c=", 0) == 0) {
                entry.second = std::string(field.substr(2));
            }
        }
        line.entries.push_back(std::move(entry));
    }
    return line;
}

// Shared by both reducers: fires directives and bumps per-row effect counters.
class ReducerBase : public IReducer {
  protected:
    ReducerBase(StateStore& store, const ReducerSpec& spec, std::string effectsTable, ControlHook hook)
        : store(store), spec(spec), effectsTable(std::move(effectsTable)), hook(std::move(hook)) {}

    void checkDirective(Transaction& tx, const std::string& directive, const RowId& id) {
        if (directive.empty() || !hook) {
            return;
        }
        RowId whole{id.partition, id.seq, -1};
        if (hook(ControlSignal{WorkerKind::Reducer, spec.reducerIndex, directive, whole}) && directive == "crash-reducer") {
            tx.abort();
            throw InjectedCrash("reducer " + std::to_string(spec.reducerIndex) + " at row " + whole.debugString());
        }
    }

    void countEffect(Transaction& tx, const RowId& id) {
        if (effectsTable.empty()) {
            return;
        }
        Row key{DataValue::int64(id.partition), DataValue::int64(id.seq), DataValue::int64(id.entry)};
        auto existing = tx.read(effectsTable, key);
        int64_t count = existing ? (*existing)[3].asInt64() : 0;
        key.values.push_back(DataValue::int64(count + 1));
        tx.write(effectsTable, std::move(key));
    }

    StateStore& store;
    ReducerSpec spec;
    std::string effectsTable;
    ControlHook hook;
};

// ---- access-tally ------------------------------------------------------------------------------

class AccessTallyMapper : public IMapper {
  public:
    AccessTallyMapper(const MapperSpec& spec, ControlHook hook) : spec(spec), hook(std::move(hook)) {}

    PartitionedRowset map(const Rowset& rows) override {
        static const std::vector<std::string> keyColumns{"user", "cluster"};
        size_t seqColumn = rows.nameTable.idOf("seq");
        size_t tsColumn = rows.nameTable.idOf("timestamp");
        size_t bodyColumn = rows.nameTable.idOf("body");

        PartitionedRowset out;
        out.rowset.nameTable = NameTable({"user", "cluster", "timestamp", "source_partition", "source_seq", "entry_index", "directive"});
        for (const auto& row : rows.rows) {
            int64_t seq = row[seqColumn].asInt64();
            auto line = parseLine(row[bodyColumn].asString());
            if (isMapperDirective(line.directive) && hook) {
                RowId whole{spec.mapperIndex, seq, -1};
                if (hook(ControlSignal{WorkerKind::Mapper, spec.mapperIndex, line.directive, whole}) && line.directive == "crash-mapper") {
                    throw InjectedCrash("mapper " + std::to_string(spec.mapperIndex) + " at row " + whole.debugString());
                }
            }
            std::string forward = isReducerDirective(line.directive) ? line.directive : std::string();
            for (size_t i = 0; i < line.entries.size(); ++i) {
                const auto& [user, cluster] = line.entries[i];
                if (user.empty()) {
                    continue;
                }
                Row mapped{DataValue::string(user),
                           DataValue::string(cluster),
                           row[tsColumn],
                           DataValue::int64(spec.mapperIndex),
                           DataValue::int64(seq),
                           DataValue::int64(static_cast<int64_t>(i)),
                           DataValue::string(forward)};
                out.partitionIndexes.push_back(hashPartition(out.rowset.nameTable, mapped, keyColumns, spec.reducerCount));
                out.rowset.rows.push_back(std::move(mapped));
            }
        }
        return out;
    }

  private:
    MapperSpec spec;
    ControlHook hook;
};

class AccessTallyReducer : public ReducerBase {
  public:
    AccessTallyReducer(StateStore& store, const ReducerSpec& spec, std::string userTable, std::string effectsTable, ControlHook hook)
        : ReducerBase(store, spec, std::move(effectsTable), std::move(hook)), userTable(std::move(userTable)) {}

    TransactionPtr reduce(const Rowset& rows) override {
        const auto& names = rows.nameTable;
        size_t user = names.idOf("user"), cluster = names.idOf("cluster"), ts = names.idOf("timestamp");
        size_t partition = names.idOf("source_partition"), seq = names.idOf("source_seq"), entry = names.idOf("entry_index");
        size_t directive = names.idOf("directive");

        auto tx = store.beginTransaction();
        for (const auto& row : rows.rows) {
            RowId id{static_cast<int>(row[partition].asInt64()), row[seq].asInt64(), static_cast<int>(row[entry].asInt64())};
            checkDirective(*tx, row[directive].asString(), id);

            Row key{row[user], row[cluster]};
            auto existing = tx->read(userTable, key);
            int64_t tally = existing ? (*existing)[2].asInt64() : 0;
            int64_t last = existing ? (*existing)[3].asInt64() : 0;
            tx->write(userTable, Row{row[user], row[cluster], DataValue::int64(tally + 1),
                                     DataValue::int64(std::max(last, row[ts].asInt64()))});
            countEffect(*tx, id);
        }
        return tx;
    }

  private:
    std::string userTable;
};

// ---- pass-through ------------------------------------------------------------------------------

class PassThroughMapper : public IMapper {
  public:
    explicit PassThroughMapper(const MapperSpec& spec) : spec(spec) {}

    PartitionedRowset map(const Rowset& rows) override {
        static const std::vector<std::string> keyColumns{"seq", "timestamp"};
        PartitionedRowset out;
        out.rowset.nameTable = rows.nameTable;
        out.rowset.nameTable.registerName("source_partition");
        size_t extra = out.rowset.nameTable.idOf("source_partition");
        for (const auto& row : rows.rows) {
            Row mapped = row;
            mapped.values.resize(std::max(mapped.values.size(), extra + 1));
            mapped.values[extra] = DataValue::int64(spec.mapperIndex);
            out.partitionIndexes.push_back(hashPartition(out.rowset.nameTable, mapped, keyColumns, spec.reducerCount));
            out.rowset.rows.push_back(std::move(mapped));
        }
        return out;
    }

  private:
    MapperSpec spec;
};

class PassThroughReducer : public ReducerBase {
  public:
    PassThroughReducer(StateStore& store, const ReducerSpec& spec, std::string effectsTable)
        : ReducerBase(store, spec, std::move(effectsTable), {}) {}

    TransactionPtr reduce(const Rowset& rows) override {
        if (effectsTable.empty()) {
            return nullptr;
        }
        size_t partition = rows.nameTable.idOf("source_partition"), seq = rows.nameTable.idOf("seq");
        auto tx = store.beginTransaction();
        for (const auto& row : rows.rows) {
            countEffect(*tx, RowId{static_cast<int>(row[partition].asInt64()), row[seq].asInt64(), 0});
        }
        return tx;
    }
};

std::string configString(const nlohmann::json& config, const char* key) {
    auto it = config.find(key);
    return it == config.end() ? std::string() : it->get<std::string>();
}

}// namespace

Pipeline makePipeline(const ProcessorSpec& spec, ControlHook hook) {
    Pipeline pipeline;
    pipeline.id = spec.pipeline;
    auto effects = spec.effectsTable;
    auto createEffects = [effects](StateStore& store) {
        if (!effects.empty() && !store.hasTable(effects)) {
            store.createSortedTable(effects, effectsTableSchema());
        }
    };

    if (spec.pipeline == "access-tally") {
        auto userTable = spec.userTable;
        pipeline.createTables = [userTable, createEffects](StateStore& store) {
            if (!store.hasTable(userTable)) {
                store.createSortedTable(userTable, tallyTableSchema());
            }
            createEffects(store);
        };
        pipeline.mapperFactory = [hook](const nlohmann::json&, StateStore&, const NameTable&, const MapperSpec& mapperSpec) {
            return std::make_unique<AccessTallyMapper>(mapperSpec, hook);
        };
        pipeline.reducerFactory = [hook](const nlohmann::json& config, StateStore& store, const ReducerSpec& reducerSpec) -> IReducerPtr {
            return std::make_unique<AccessTallyReducer>(store, reducerSpec, configString(config, "user_table"),
                                                        configString(config, "effects_table"), hook);
        };
        pipeline.expectedRows = [](const Workload& workload) { return computeAccessOracle(workload, 1).expectedRows; };
        pipeline.shuffleOracle = [](const Workload& workload, int reducerCount) {
            return computeAccessOracle(workload, reducerCount).shuffle;
        };
    } else if (spec.pipeline == "pass-through") {
        pipeline.createTables = createEffects;
        pipeline.mapperFactory = [](const nlohmann::json&, StateStore&, const NameTable&, const MapperSpec& mapperSpec) -> IMapperPtr {
            return std::make_unique<PassThroughMapper>(mapperSpec);
        };
        pipeline.reducerFactory = [](const nlohmann::json& config, StateStore& store, const ReducerSpec& reducerSpec) -> IReducerPtr {
            return std::make_unique<PassThroughReducer>(store, reducerSpec, configString(config, "effects_table"));
        };
        pipeline.expectedRows = [](const Workload& workload) {
            std::set<RowId> rows;
            for (size_t p = 0; p < workload.partitions.size(); ++p) {
                for (const auto& event : workload.partitions[p]) {
                    rows.insert(RowId{static_cast<int>(p), event.seq, 0});
                }
            }
            return rows;
        };
        pipeline.shuffleOracle = [](const Workload& workload, int reducerCount) {
            static const std::vector<std::string> keyColumns{"seq", "timestamp"};
            NameTable names({"seq", "timestamp"});
            ShuffleOracle shuffle(workload.partitions.size());
            for (size_t p = 0; p < workload.partitions.size(); ++p) {
                for (const auto& event : workload.partitions[p]) {
                    Row key{DataValue::int64(event.seq), DataValue::int64(event.timestamp)};
                    shuffle[p].emplace_back(RowId{static_cast<int>(p), event.seq, 0}, hashPartition(names, key, keyColumns, reducerCount));
                }
            }
            return shuffle;
        };
    } else {
        throw ConfigError("field 'pipeline': unknown pipeline '" + spec.pipeline + "'");
    }
    return pipeline;
}

}// namespace streamshuffle
