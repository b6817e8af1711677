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
#include <streamshuffle/reducer.hpp>

#include <coroutine>

namespace streamshuffle {

Blob encodeIndexList(const std::vector<int64_t>& values) {
    Blob out;
    ByteWriter writer(out);
    writer.u32(static_cast<uint32_t>(values.size()));
    for (auto value : values) {
        writer.i64(value);
    }
    return out;
}

std::vector<int64_t> decodeIndexList(std::string_view bytes) {
    ByteReader reader(bytes);
    uint32_t count = reader.u32();
    if (reader.remaining() != static_cast<size_t>(count) * 8) {
        throw MalformedEncoding("index list length does not match its count");
    }
    std::vector<int64_t> values(count);
    for (auto& value : values) {
        value = reader.i64();
    }
    return values;
}

ReducerPersistentState ReducerPersistentState::initial(int64_t reducerIndex, int mapperCount) {
    return ReducerPersistentState{reducerIndex, std::vector<int64_t>(static_cast<size_t>(mapperCount), nothingCommitted)};
}

Row ReducerPersistentState::toRow() const {
    return Row{DataValue::int64(reducerIndex), DataValue::string(encodeIndexList(committedRowIndices))};
}

ReducerPersistentState ReducerPersistentState::fromRow(const Row& row) {
    if (row.size() != 2) {
        throw SchemaMismatch("reducer state row has " + std::to_string(row.size()) + " values, expected 2");
    }
    try {
        return ReducerPersistentState{row[0].asInt64(), decodeIndexList(row[1].asString())};
    } catch (const MalformedEncoding& e) {
        throw SchemaMismatch(std::string("reducer state row: ") + e.what());
    }
}

TableSchema ReducerPersistentState::tableSchema() {
    return TableSchema{NameTable({"reducer_index", "committed_row_indices"}), 1};
}

Row ReducerPersistentState::key(int64_t reducerIndex) {
    return Row{DataValue::int64(reducerIndex)};
}

const char* toString(RpcFailure failure) {
    switch (failure) {
        case RpcFailure::Timeout: return "Timeout";
        case RpcFailure::Unreachable: return "Unreachable";
    }
    return "?";
}

const char* toString(ReducerOutcome outcome) {
    switch (outcome) {
        case ReducerOutcome::Committed: return "Committed";
        case ReducerOutcome::NothingToDo: return "NothingToDo";
        case ReducerOutcome::SplitBrainSkip: return "SplitBrainSkip";
        case ReducerOutcome::TransientError: return "TransientError";
    }
    return "?";
}

namespace {

// Issues every call at once and resumes the awaiting coroutine when the last one completes.
class GatherCalls {
  public:
    GatherCalls(IShuffleChannel& channel, std::vector<std::pair<MapperEndpoint, Blob>> requests)
        : channel(channel), requests(std::move(requests)) {}

    bool await_ready() const noexcept { return requests.empty(); }

    bool await_suspend(std::coroutine_handle<> h) {
        waiter = h;
        results.assign(requests.size(), RpcResult{RpcFailure::Unreachable});
        remaining = requests.size();
        issuing = true;
        for (size_t i = 0; i < requests.size(); ++i) {
            channel.call(requests[i].first, std::move(requests[i].second), [this, i](RpcResult result) {
                results[i] = std::move(result);
                if (--remaining == 0 && !issuing) {
                    waiter.resume();
                }
            });
        }
        issuing = false;
        return remaining != 0;
    }

    void await_resume() const noexcept {}
    std::vector<RpcResult> take() { return std::move(results); }

  private:
    IShuffleChannel& channel;
    std::vector<std::pair<MapperEndpoint, Blob>> requests;
    std::vector<RpcResult> results;
    size_t remaining = 0;
    bool issuing = false;
    std::coroutine_handle<> waiter;
};

// Fills `poll` from a reply. Returns true if the reply carried rows that advance the mapper.
bool absorbReply(MapperPoll& poll, const RpcResult& result, int64_t committed) {
    if (std::holds_alternative<RpcFailure>(result)) {
        poll.failure = std::get<RpcFailure>(result);
        return false;
    }
    try {
        auto frame = decodeFrame(std::get<Blob>(result));
        if (frame.kind == MessageKind::Error) {
            poll.error = decodeErrorFields(frame.fields);
            return false;
        }
        if (frame.kind != MessageKind::GetRowsResponse) {
            poll.malformed = true;
            return false;
        }
        poll.response = decodeResponseFields(frame.fields);
        if (poll.response.rowCount == 0) {
            return false;
        }
        if (frame.attachments.size() != 1) {
            poll.malformed = true;
            return false;
        }
        poll.rows = decodeRowset(frame.attachments[0]);
        if (static_cast<int64_t>(poll.rows.rows.size()) != poll.response.rowCount
            || poll.response.lastShuffleRowIndex <= committed) {
            poll.malformed = true;
            poll.rows = {};
            return false;
        }
        return true;
    } catch (const Error&) {
        poll.malformed = true;
        poll.rows = {};
        return false;
    }
}

}// namespace

ReducerRuntime::ReducerRuntime(ReducerSpec spec, ReducerConfig config, StateStore& store, IShuffleChannel& channel,
                               IReducerPtr reducer, sim::Executor executor)
    : reducerSpec(std::move(spec)), config(config), store(store), channel(channel), reducer(std::move(reducer)),
      executor(std::move(executor)) {
    if (reducerSpec.mapperCount < 1) {
        throw ConfigError("reducer needs at least one mapper");
    }
    if (this->config.maxRowsPerMapperPerRound < 1) {
        throw ConfigError("max_rows_per_mapper_per_round must be positive");
    }
    if (!this->reducer) {
        throw ConfigError("reducer instance is null");
    }
}

ReducerPersistentState ReducerRuntime::fetchState() const {
    auto tx = store.beginTransaction();
    auto row = tx->read(reducerSpec.stateTable, ReducerPersistentState::key(reducerSpec.reducerIndex));
    tx->abort();
    if (!row) {
        return ReducerPersistentState::initial(reducerSpec.reducerIndex, reducerSpec.mapperCount);
    }
    auto state = ReducerPersistentState::fromRow(*row);
    if (static_cast<int>(state.committedRowIndices.size()) != reducerSpec.mapperCount) {
        throw SchemaMismatch("reducer state has " + std::to_string(state.committedRowIndices.size()) + " mapper slots, expected "
                             + std::to_string(reducerSpec.mapperCount));
    }
    return state;
}

std::map<int, MapperEndpoint> ReducerRuntime::chooseEndpoints() {
    std::map<int, std::vector<MapperEndpoint>> byIndex;
    for (auto& endpoint : channel.discoverMappers()) {
        if (endpoint.mapperIndex >= 0 && endpoint.mapperIndex < reducerSpec.mapperCount) {
            byIndex[endpoint.mapperIndex].push_back(std::move(endpoint));
        }
    }
    std::map<int, MapperEndpoint> chosen;
    for (auto& [index, candidates] : byIndex) {
        size_t pick = candidates.size() - 1;
        if (chooser && candidates.size() > 1) {
            pick = chooser(candidates.size()) % candidates.size();
        }
        chosen.emplace(index, std::move(candidates[pick]));
    }
    return chosen;
}

bool ReducerRuntime::stageStateAdvance(Transaction& tx, const ReducerPersistentState& expected, const ReducerPersistentState& next) {
    auto row = tx.read(reducerSpec.stateTable, ReducerPersistentState::key(reducerSpec.reducerIndex));
    auto current = row ? ReducerPersistentState::fromRow(*row)
                       : ReducerPersistentState::initial(reducerSpec.reducerIndex, reducerSpec.mapperCount);
    if (current != expected) {
        return false;
    }
    tx.write(reducerSpec.stateTable, next.toRow());
    return true;
}

sim::Task<ReducerOutcome> ReducerRuntime::step() {
    RoundReport report;
    report.round = ++counters.rounds;
    auto outcome = co_await runRound(report);
    report.outcome = outcome;
    switch (outcome) {
        case ReducerOutcome::Committed: ++counters.commits; break;
        case ReducerOutcome::NothingToDo: ++counters.nothingToDo; break;
        case ReducerOutcome::SplitBrainSkip: ++counters.splitBrainSkips; break;
        case ReducerOutcome::TransientError: ++counters.transientErrors; break;
    }
    if (onRound) {
        onRound(report);
    }
    co_return outcome;
}

sim::Task<ReducerOutcome> ReducerRuntime::runRound(RoundReport& report) {
    try {
        report.before = fetchState();
    } catch (const StateUnavailable&) {
        co_return ReducerOutcome::TransientError;
    }
    report.after = report.before;

    auto endpoints = chooseEndpoints();
    std::vector<std::pair<MapperEndpoint, Blob>> requests;
    report.polls.resize(static_cast<size_t>(reducerSpec.mapperCount));
    for (int m = 0; m < reducerSpec.mapperCount; ++m) {
        auto& poll = report.polls[static_cast<size_t>(m)];
        poll.mapperIndex = m;
        auto it = endpoints.find(m);
        if (it == endpoints.end()) {
            continue;
        }
        poll.discovered = true;
        poll.mapperGuid = it->second.guid;
        GetRowsRequest request{config.maxRowsPerMapperPerRound, reducerSpec.reducerIndex,
                               report.before.committedRowIndices[static_cast<size_t>(m)], it->second.guid};
        requests.emplace_back(it->second, encodeRequestFrame(request));
    }

    GatherCalls gather(channel, std::move(requests));
    co_await gather;
    std::vector<RpcResult> results = gather.take();

    bool anyRows = false;
    size_t next = 0;
    for (auto& poll : report.polls) {
        if (!poll.discovered) {
            continue;
        }
        auto m = static_cast<size_t>(poll.mapperIndex);
        if (absorbReply(poll, results[next++], report.before.committedRowIndices[m])) {
            report.after.committedRowIndices[m] = poll.response.lastShuffleRowIndex;
            anyRows = true;
        }
    }
    if (!anyRows) {
        co_return ReducerOutcome::NothingToDo;
    }

    // Polls are in ascending mapper order and each mapper serves rows in shuffle-index order.
    RowsetBuilder builder;
    size_t rowCount = 0;
    for (const auto& poll : report.polls) {
        if (!poll.rows.rows.empty()) {
            builder.addAll(poll.rows);
            rowCount += poll.rows.rows.size();
        }
    }
    Rowset batch = std::move(builder).build();

    TransactionPtr tx;
    try {
        tx = reducer->reduce(batch);
    } catch (const std::exception&) {
        ++counters.userExceptions;
        co_return ReducerOutcome::TransientError;
    }

    try {
        switch (config.commitOrder) {
            case CommitOrder::Atomic: {
                if (!tx) {
                    tx = store.beginTransaction();
                }
                if (!tx->isOpen()) {
                    co_return ReducerOutcome::TransientError;
                }
                if (!stageStateAdvance(*tx, report.before, report.after)) {
                    tx->abort();
                    co_return ReducerOutcome::SplitBrainSkip;
                }
                if (tx->commit() != CommitResult::Committed) {
                    co_return ReducerOutcome::TransientError;
                }
                break;
            }
            case CommitOrder::StateFirst: {
                auto meta = store.beginTransaction();
                if (!stageStateAdvance(*meta, report.before, report.after)) {
                    meta->abort();
                    if (tx) {
                        tx->abort();
                    }
                    co_return ReducerOutcome::SplitBrainSkip;
                }
                if (meta->commit() != CommitResult::Committed) {
                    co_return ReducerOutcome::TransientError;
                }
                co_await executor.sleep(config.brokenCommitGap);
                if (tx && tx->isOpen()) {
                    tx->commit();
                }
                break;
            }
            case CommitOrder::UserFirst: {
                if (tx && tx->isOpen()) {
                    tx->commit();
                }
                co_await executor.sleep(config.brokenCommitGap);
                auto meta = store.beginTransaction();
                if (!stageStateAdvance(*meta, report.before, report.after)) {
                    meta->abort();
                    co_return ReducerOutcome::SplitBrainSkip;
                }
                if (meta->commit() != CommitResult::Committed) {
                    co_return ReducerOutcome::TransientError;
                }
                break;
            }
        }
    } catch (const StateUnavailable&) {
        if (tx && tx->isOpen()) {
            tx->abort();
        }
        co_return ReducerOutcome::TransientError;
    }
    counters.rowsReduced += rowCount;
    co_return ReducerOutcome::Committed;
}

}// namespace streamshuffle
