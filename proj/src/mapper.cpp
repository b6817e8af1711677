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
#include <streamshuffle/mapper.hpp>

namespace streamshuffle {

const char* toString(IngestionOutcome outcome) {
    switch (outcome) {
        case IngestionOutcome::Appended: return "Appended";
        case IngestionOutcome::Empty: return "Empty";
        case IngestionOutcome::SplitBrainRestart: return "SplitBrainRestart";
        case IngestionOutcome::TransientError: return "TransientError";
    }
    return "Unknown";
}

const char* toString(TrimOutcome outcome) {
    switch (outcome) {
        case TrimOutcome::Advanced: return "Advanced";
        case TrimOutcome::NoProgress: return "NoProgress";
        case TrimOutcome::SplitBrainDetected: return "SplitBrainDetected";
    }
    return "Unknown";
}

// ---- MapperPersistentState ---------------------------------------------------------------------

Row MapperPersistentState::toRow() const {
    return Row{DataValue::int64(mapperIndex), DataValue::int64(inputUnreadRowIndex), DataValue::int64(shuffleUnreadRowIndex),
               DataValue::string(continuationToken)};
}

MapperPersistentState MapperPersistentState::fromRow(const Row& row) {
    if (row.size() != 4) {
        throw SchemaMismatch("mapper state row has " + std::to_string(row.size()) + " values, expected 4");
    }
    return MapperPersistentState{row[0].asInt64(), row[1].asInt64(), row[2].asInt64(), row[3].asString()};
}

TableSchema MapperPersistentState::tableSchema() {
    return TableSchema{NameTable({"mapper_index", "input_unread_row_index", "shuffle_unread_row_index", "continuation_token"}), 1};
}

Row MapperPersistentState::key(int64_t mapperIndex) {
    return Row{DataValue::int64(mapperIndex)};
}

// ---- MapperRuntime -----------------------------------------------------------------------------

MapperRuntime::MapperRuntime(MapperSpec spec, MapperConfig config, StateStore& store, PartitionReaderPtr reader, IMapperPtr mapper)
    : mapperSpec(std::move(spec)), config(std::move(config)), store(store), reader(std::move(reader)), mapper(std::move(mapper)) {
    if (mapperSpec.reducerCount < 1) {
        throw ConfigError("mapper needs at least one reducer");
    }
    if (this->config.maxBatchRows < 1) {
        throw ConfigError("max_batch_rows must be positive");
    }
    buckets.resize(static_cast<size_t>(mapperSpec.reducerCount));
    for (int r = 0; r < mapperSpec.reducerCount; ++r) {
        buckets[static_cast<size_t>(r)].reducerIndex = r;
    }
}

MapperPersistentState MapperRuntime::fetchState(Transaction& tx) const {
    auto row = tx.read(mapperSpec.stateTable, MapperPersistentState::key(mapperSpec.mapperIndex));
    if (!row) {
        return MapperPersistentState{mapperSpec.mapperIndex, 0, 0, {}};
    }
    return MapperPersistentState::fromRow(*row);
}

ContinuationToken MapperRuntime::tokenFrom(const Blob& serialized) const {
    return serialized.empty() ? reader->initialToken() : ContinuationToken::deserialize(serialized);
}

void MapperRuntime::bootstrap() {
    std::lock_guard lock(mutex);
    auto tx = store.beginTransaction();
    auto state = fetchState(*tx);
    tx->abort();

    window.clear();
    for (auto& bucket : buckets) {
        bucket.queue.clear();
        bucket.firstWindowEntryIndex = -1;
    }
    memoryBytes = 0;
    local = state;
    persisted = state;
    inputCurrent = state.inputUnreadRowIndex;
    shuffleCurrent = state.shuffleUnreadRowIndex;
    token = tokenFrom(state.continuationToken);
    pendingReaderTrim.reset();
    bootstrapped = true;
}

bool MapperRuntime::isBootstrapped() const {
    std::lock_guard lock(mutex);
    return bootstrapped;
}

void MapperRuntime::dropState() {
    std::lock_guard lock(mutex);
    dropStateLocked();
}

void MapperRuntime::dropStateLocked() {
    bootstrapped = false;
    firstWindowIndex += static_cast<int64_t>(window.size());
    window.clear();
    for (auto& bucket : buckets) {
        bucket.queue.clear();
        bucket.firstWindowEntryIndex = -1;
    }
    memoryBytes = 0;
    pendingReaderTrim.reset();
    if (onMemoryReleased) {
        onMemoryReleased();
    }
}

WindowEntry& MapperRuntime::entryAt(int64_t absoluteIndex) {
    return window.at(static_cast<size_t>(absoluteIndex - firstWindowIndex));
}

int64_t MapperRuntime::entryContaining(int64_t shuffleIndex, int64_t fromEntry) const {
    for (int64_t a = fromEntry;; ++a) {
        const auto& entry = window.at(static_cast<size_t>(a - firstWindowIndex));
        if (shuffleIndex < entry.shuffleEndIndex) {
            return a;
        }
    }
}

IngestionOutcome MapperRuntime::ingestionStep() {
    std::lock_guard lock(mutex);
    if (!bootstrapped) {
        return IngestionOutcome::TransientError;
    }

    ReadResult batch;
    try {
        batch = reader->read(inputCurrent, inputCurrent + config.maxBatchRows, token);
    } catch (const SourceUnavailable&) {
        ++counters.transientErrors;
        return IngestionOutcome::TransientError;
    }

    MapperPersistentState remote;
    try {
        auto tx = store.beginTransaction();
        remote = fetchState(*tx);
        tx->abort();
    } catch (const StateUnavailable&) {
        ++counters.transientErrors;
        return IngestionOutcome::TransientError;
    }
    if (remote != persisted) {
        // Another instance with our index moved the committed state: we are the stale half of a split brain.
        ++counters.splitBrainDetections;
        dropStateLocked();
        return IngestionOutcome::SplitBrainRestart;
    }

    if (batch.rowset.empty()) {
        return IngestionOutcome::Empty;
    }

    auto inputRows = static_cast<int64_t>(batch.rowset.size());
    PartitionedRowset mapped;
    try {
        mapped = mapper->map(batch.rowset);
        mapped.validate(mapperSpec.reducerCount);
    } catch (const std::exception&) {
        // Nothing was appended; the same batch is read and mapped again on the next step.
        ++counters.transientErrors;
        return IngestionOutcome::TransientError;
    }
    counters.inputBytesIngested += encodedSize(batch.rowset);

    WindowEntry entry;
    entry.inputBeginIndex = inputCurrent;
    entry.inputEndIndex = inputCurrent + inputRows;
    entry.shuffleBeginIndex = shuffleCurrent;
    entry.shuffleEndIndex = shuffleCurrent + static_cast<int64_t>(mapped.rowset.size());
    entry.continuationToken = batch.nextToken;
    entry.memoryBytes = encodedSize(mapped.rowset);
    entry.rowset = std::move(mapped.rowset);
    entry.partitionIndexes = std::move(mapped.partitionIndexes);

    if (config.persistShuffleTable) {
        persistShuffle(entry);
    }

    int64_t entryIndex = firstWindowIndex + static_cast<int64_t>(window.size());
    for (size_t i = 0; i < entry.partitionIndexes.size(); ++i) {
        auto& bucket = buckets[static_cast<size_t>(entry.partitionIndexes[i])];
        if (bucket.queue.empty()) {
            bucket.firstWindowEntryIndex = entryIndex;
            ++entry.bucketPointerCount;
        }
        bucket.queue.push_back(entry.shuffleBeginIndex + static_cast<int64_t>(i));
    }

    memoryBytes += entry.memoryBytes;
    ++counters.batchesAppended;
    counters.inputRowsIngested += static_cast<uint64_t>(inputRows);
    counters.shuffleRowsProduced += entry.partitionIndexes.size();
    bool unpinned = entry.bucketPointerCount == 0;
    window.push_back(std::move(entry));

    inputCurrent = window.back().inputEndIndex;
    shuffleCurrent = window.back().shuffleEndIndex;
    token = window.back().continuationToken;

    // An entry no bucket points into (the map emitted nothing) would otherwise wait for the next GetRows pop.
    if (unpinned) {
        trimWindowEntriesLocked();
    }
    return IngestionOutcome::Appended;
}

void MapperRuntime::persistShuffle(const WindowEntry& entry) {
    auto tx = store.beginTransaction();
    for (size_t i = 0; i < entry.rowset.rows.size(); ++i) {
        Blob encoded;
        ByteWriter writer(encoded);
        encodeRow(writer, entry.rowset.rows[i]);
        tx->write(*config.persistShuffleTable,
                  Row{DataValue::int64(mapperSpec.mapperIndex), DataValue::int64(entry.shuffleBeginIndex + static_cast<int64_t>(i)),
                      DataValue::int64(entry.partitionIndexes[i]), DataValue::string(std::move(encoded))});
    }
    tx->commit();
}

GetRowsReply MapperRuntime::handleGetRows(const GetRowsRequest& request) {
    std::lock_guard lock(mutex);
    if (request.mapperId != mapperSpec.mapperGuid) {
        ++counters.getRowsRejected;
        return GetRowsReply{RpcErrorBody{RpcErrorCode::StaleMapperId,
                                         "request for mapper " + request.mapperId + " reached " + mapperSpec.mapperGuid}};
    }
    if (request.reducerIndex < 0 || request.reducerIndex >= mapperSpec.reducerCount || request.count < 0) {
        ++counters.getRowsRejected;
        return GetRowsReply{RpcErrorBody{RpcErrorCode::InvalidRequest,
                                         "bad reducer index " + std::to_string(request.reducerIndex) + " or count "
                                             + std::to_string(request.count)}};
    }
    ++counters.getRowsServed;
    auto& bucket = buckets[static_cast<size_t>(request.reducerIndex)];

    // Drop everything the reducer has durably committed and move the bucket's window pointer.
    bool popped = false;
    while (!bucket.queue.empty() && bucket.queue.front() <= request.committedRowIndex) {
        bucket.queue.pop_front();
        popped = true;
    }
    bool countHitZero = false;
    if (popped) {
        int64_t oldFirst = bucket.firstWindowEntryIndex;
        int64_t newFirst = bucket.queue.empty() ? -1 : entryContaining(bucket.queue.front(), oldFirst);
        if (newFirst != oldFirst) {
            auto& oldEntry = entryAt(oldFirst);
            --oldEntry.bucketPointerCount;
            countHitZero = oldEntry.bucketPointerCount == 0;
            if (newFirst != -1) {
                ++entryAt(newFirst).bucketPointerCount;
            }
            bucket.firstWindowEntryIndex = newFirst;
        }
    }
    if (countHitZero) {
        trimWindowEntriesLocked();
    }

    // Serve from the head without removing anything; a repeated request sees the same rows.
    RowsetBuilder builder;
    GetRowsResponse response;
    response.lastShuffleRowIndex = request.committedRowIndex;
    int64_t entryIndex = bucket.firstWindowEntryIndex;
    for (auto it = bucket.queue.begin(); it != bucket.queue.end() && response.rowCount < request.count; ++it) {
        entryIndex = entryContaining(*it, entryIndex);
        const auto& entry = entryAt(entryIndex);
        builder.add(entry.rowset.nameTable, entry.rowset.rows[static_cast<size_t>(*it - entry.shuffleBeginIndex)]);
        response.lastShuffleRowIndex = *it;
        ++response.rowCount;
    }
    counters.rowsServed += static_cast<uint64_t>(response.rowCount);
    return GetRowsReply{std::pair{response, std::move(builder).build()}};
}

Blob MapperRuntime::handleGetRowsFrame(std::string_view requestFrame) {
    GetRowsRequest request;
    try {
        auto frame = decodeFrame(requestFrame);
        if (frame.kind != MessageKind::GetRowsRequest) {
            return encodeErrorFrame(RpcErrorBody{RpcErrorCode::InvalidRequest, "expected a GetRows request frame"});
        }
        request = decodeRequestFields(frame.fields);
    } catch (const MalformedEncoding& e) {
        return encodeErrorFrame(RpcErrorBody{RpcErrorCode::InvalidRequest, e.what()});
    }
    auto reply = handleGetRows(request);
    if (reply.isError()) {
        return encodeErrorFrame(reply.error());
    }
    return encodeResponseFrame(reply.response(), encodeRowset(reply.rows()));
}

size_t MapperRuntime::trimWindowEntries() {
    std::lock_guard lock(mutex);
    return trimWindowEntriesLocked();
}

size_t MapperRuntime::trimWindowEntriesLocked() {
    size_t popped = 0;
    while (!window.empty() && window.front().bucketPointerCount == 0) {
        const auto& entry = window.front();
        local.inputUnreadRowIndex = entry.inputEndIndex;
        local.shuffleUnreadRowIndex = entry.shuffleEndIndex;
        local.continuationToken = entry.continuationToken.serialize();
        memoryBytes -= entry.memoryBytes;
        window.pop_front();
        ++firstWindowIndex;
        ++popped;
    }
    counters.windowEntriesTrimmed += popped;
    if (popped > 0 && onMemoryReleased) {
        onMemoryReleased();
    }
    return popped;
}

TrimOutcome MapperRuntime::trimInputRows() {
    std::lock_guard lock(mutex);
    if (!bootstrapped) {
        return TrimOutcome::NoProgress;
    }
    auto trimReader = [this](const MapperPersistentState& state) {
        try {
            reader->trim(state.inputUnreadRowIndex, tokenFrom(state.continuationToken));
            pendingReaderTrim.reset();
        } catch (const SourceUnavailable&) {
            pendingReaderTrim = state;
        }
    };
    if (pendingReaderTrim) {
        trimReader(*pendingReaderTrim);
    }

    try {
        auto tx = store.beginTransaction();
        auto remote = fetchState(*tx);
        if (remote != persisted) {
            ++counters.splitBrainDetections;
            return TrimOutcome::SplitBrainDetected;
        }
        bool ahead = local.inputUnreadRowIndex > remote.inputUnreadRowIndex
                     || local.shuffleUnreadRowIndex > remote.shuffleUnreadRowIndex;
        if (!ahead) {
            return TrimOutcome::NoProgress;
        }
        tx->write(mapperSpec.stateTable, local.toRow());
        if (tx->commit() != CommitResult::Committed) {
            return TrimOutcome::NoProgress;
        }
    } catch (const StateUnavailable&) {
        ++counters.transientErrors;
        return TrimOutcome::NoProgress;
    }
    persisted = local;
    ++counters.stateCommits;
    trimReader(persisted);
    return TrimOutcome::Advanced;
}

bool MapperRuntime::memoryExceeded() const {
    std::lock_guard lock(mutex);
    return memoryBytes > config.memoryLimitBytes;
}

void MapperRuntime::setMemoryReleasedCallback(std::function<void()> callback) {
    std::lock_guard lock(mutex);
    onMemoryReleased = std::move(callback);
}

MapperPersistentState MapperRuntime::localState() const {
    std::lock_guard lock(mutex);
    return local;
}

MapperPersistentState MapperRuntime::persistedState() const {
    std::lock_guard lock(mutex);
    return persisted;
}

int64_t MapperRuntime::inputCurrentRowIndex() const {
    std::lock_guard lock(mutex);
    return inputCurrent;
}

int64_t MapperRuntime::shuffleCurrentRowIndex() const {
    std::lock_guard lock(mutex);
    return shuffleCurrent;
}

ContinuationToken MapperRuntime::currentToken() const {
    std::lock_guard lock(mutex);
    return token;
}

uint64_t MapperRuntime::memoryUsage() const {
    std::lock_guard lock(mutex);
    return memoryBytes;
}

size_t MapperRuntime::windowEntryCount() const {
    std::lock_guard lock(mutex);
    return window.size();
}

int64_t MapperRuntime::firstWindowAbsoluteIndex() const {
    std::lock_guard lock(mutex);
    return firstWindowIndex;
}

WindowEntry MapperRuntime::windowEntry(int64_t absoluteIndex) const {
    std::lock_guard lock(mutex);
    if (absoluteIndex < firstWindowIndex) {
        throw std::out_of_range("window entry " + std::to_string(absoluteIndex) + " was trimmed");
    }
    return window.at(static_cast<size_t>(absoluteIndex - firstWindowIndex));
}

BucketState MapperRuntime::bucket(int reducerIndex) const {
    std::lock_guard lock(mutex);
    return buckets.at(static_cast<size_t>(reducerIndex));
}

MapperStats MapperRuntime::stats() const {
    std::lock_guard lock(mutex);
    return counters;
}

std::optional<std::string> MapperRuntime::checkInvariants() const {
    std::lock_guard lock(mutex);
    std::vector<int> expectedCounts(window.size(), 0);
    uint64_t bytes = 0;
    int64_t previousEnd = window.empty() ? 0 : window.front().shuffleBeginIndex;
    for (const auto& entry : window) {
        if (entry.shuffleEndIndex - entry.shuffleBeginIndex != static_cast<int64_t>(entry.rowset.size())) {
            return "window entry shuffle range does not match its row count";
        }
        if (entry.shuffleBeginIndex != previousEnd) {
            return "window entries are not contiguous in shuffle numbering";
        }
        previousEnd = entry.shuffleEndIndex;
        bytes += entry.memoryBytes;
    }
    if (bytes != memoryBytes) {
        return "memory usage " + std::to_string(memoryBytes) + " != sum of entry sizes " + std::to_string(bytes);
    }
    for (const auto& bucket : buckets) {
        if (bucket.queue.empty()) {
            if (bucket.firstWindowEntryIndex != -1) {
                return "empty bucket " + std::to_string(bucket.reducerIndex) + " still points into the window";
            }
            continue;
        }
        for (size_t i = 1; i < bucket.queue.size(); ++i) {
            if (bucket.queue[i] <= bucket.queue[i - 1]) {
                return "bucket " + std::to_string(bucket.reducerIndex) + " queue is not strictly increasing";
            }
        }
        if (bucket.queue.front() < local.shuffleUnreadRowIndex || bucket.queue.back() >= shuffleCurrent) {
            return "bucket " + std::to_string(bucket.reducerIndex) + " holds an index outside the live window";
        }
        auto offset = bucket.firstWindowEntryIndex - firstWindowIndex;
        if (offset < 0 || offset >= static_cast<int64_t>(window.size())) {
            return "bucket " + std::to_string(bucket.reducerIndex) + " points outside the window";
        }
        const auto& entry = window[static_cast<size_t>(offset)];
        if (bucket.queue.front() < entry.shuffleBeginIndex || bucket.queue.front() >= entry.shuffleEndIndex) {
            return "bucket " + std::to_string(bucket.reducerIndex) + " head is not in its first window entry";
        }
        ++expectedCounts[static_cast<size_t>(offset)];
    }
    for (size_t i = 0; i < window.size(); ++i) {
        if (window[i].bucketPointerCount != expectedCounts[i]) {
            return "window entry " + std::to_string(firstWindowIndex + static_cast<int64_t>(i)) + " has pointer count "
                   + std::to_string(window[i].bucketPointerCount) + ", expected " + std::to_string(expectedCounts[i]);
        }
    }
    if (local.inputUnreadRowIndex < persisted.inputUnreadRowIndex
        || local.shuffleUnreadRowIndex < persisted.shuffleUnreadRowIndex) {
        return "local state is behind the persisted state";
    }
    return std::nullopt;
}

}// namespace streamshuffle
