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

#ifndef STREAMSHUFFLE_MAPPER_HPP_
#define STREAMSHUFFLE_MAPPER_HPP_

#include <streamshuffle/input.hpp>
#include <streamshuffle/state_store.hpp>
#include <streamshuffle/user_api.hpp>
#include <streamshuffle/wire.hpp>

#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace streamshuffle {

/// One row of the mapper state table; mapper_index is the key column.
struct MapperPersistentState {
    int64_t mapperIndex = 0;
    int64_t inputUnreadRowIndex = 0;
    int64_t shuffleUnreadRowIndex = 0;
    /// Serialized ContinuationToken; empty means the reader's initial token.
    Blob continuationToken;

    bool operator==(const MapperPersistentState&) const = default;

    Row toRow() const;
    /// Throws SchemaMismatch on a malformed row.
    static MapperPersistentState fromRow(const Row& row);
    static TableSchema tableSchema();
    static Row key(int64_t mapperIndex);
};

/// One mapped batch kept in memory until every reducer has committed its rows.
struct WindowEntry {
    Rowset rowset;
    std::vector<int> partitionIndexes;
    int64_t inputBeginIndex = 0;
    int64_t inputEndIndex = 0;
    int64_t shuffleBeginIndex = 0;
    int64_t shuffleEndIndex = 0;
    ContinuationToken continuationToken;
    /// Number of buckets whose first queued row lies in this entry.
    int bucketPointerCount = 0;
    uint64_t memoryBytes = 0;
};

/// Per-reducer FIFO of shuffle indexes still owed to that reducer.
struct BucketState {
    int reducerIndex = 0;
    std::deque<int64_t> queue;
    /// Absolute window index of the entry holding queue.front(); -1 when empty.
    int64_t firstWindowEntryIndex = -1;
};

struct MapperConfig {
    /// Read hint: endRowIndex = inputCurrentRowIndex + maxBatchRows.
    int64_t maxBatchRows = 1024;
    /// Encoded window bytes above which ingestion blocks.
    uint64_t memoryLimitBytes = 64ull << 20;
    /// Test-only store-and-forward baseline: persist every mapped row to this table.
    std::optional<std::string> persistShuffleTable;
};

enum class IngestionOutcome { Appended, Empty, SplitBrainRestart, TransientError };
enum class TrimOutcome { Advanced, NoProgress, SplitBrainDetected };

const char* toString(IngestionOutcome outcome);
const char* toString(TrimOutcome outcome);

/// Served rows, or the error body sent back in an Error frame.
struct GetRowsReply {
    std::variant<RpcErrorBody, std::pair<GetRowsResponse, Rowset>> result;

    bool isError() const { return result.index() == 0; }
    const RpcErrorBody& error() const { return std::get<0>(result); }
    const GetRowsResponse& response() const { return std::get<1>(result).first; }
    const Rowset& rows() const { return std::get<1>(result).second; }
};

struct MapperStats {
    uint64_t batchesAppended = 0;
    uint64_t inputRowsIngested = 0;
    uint64_t inputBytesIngested = 0;
    uint64_t shuffleRowsProduced = 0;
    uint64_t getRowsServed = 0;
    uint64_t getRowsRejected = 0;
    uint64_t rowsServed = 0;
    uint64_t windowEntriesTrimmed = 0;
    uint64_t stateCommits = 0;
    uint64_t splitBrainDetections = 0;
    uint64_t transientErrors = 0;
};

/**
 * @brief State and procedures of one mapper instance: ingestion, GetRows serving and the
 * two trimming stages.
 *
 * Every public method is atomic with respect to the others. Waiting (back-off, the memory
 * limit, split-brain delay) is left to the caller, which drives the methods from its loops.
 */
class MapperRuntime {
  public:
    MapperRuntime(MapperSpec spec, MapperConfig config, StateStore& store, PartitionReaderPtr reader, IMapperPtr mapper);

    /// Loads the committed state row (creating the zero state if absent). Throws StateUnavailable.
    void bootstrap();
    bool isBootstrapped() const;
    /// Forgets the window, buckets and both state copies; bootstrap() must run again.
    void dropState();

    /// One ingestion iteration without the waits: read, split-brain check, map, append.
    IngestionOutcome ingestionStep();
    GetRowsReply handleGetRows(const GetRowsRequest& request);
    /// Frame-level entry point used by transports.
    Blob handleGetRowsFrame(std::string_view requestFrame);
    /// Pops zero-count entries from the window front. Returns the number popped.
    size_t trimWindowEntries();
    /// Commits the local state if it moved ahead, then trims the input partition.
    TrimOutcome trimInputRows();

    bool memoryExceeded() const;
    /// Called (under the runtime lock) after trimming released window memory.
    void setMemoryReleasedCallback(std::function<void()> callback);

    const MapperSpec& spec() const { return mapperSpec; }
    MapperPersistentState localState() const;
    MapperPersistentState persistedState() const;
    int64_t inputCurrentRowIndex() const;
    int64_t shuffleCurrentRowIndex() const;
    ContinuationToken currentToken() const;
    uint64_t memoryUsage() const;
    size_t windowEntryCount() const;
    int64_t firstWindowAbsoluteIndex() const;
    /// Copy of the entry at an absolute window index; throws std::out_of_range.
    WindowEntry windowEntry(int64_t absoluteIndex) const;
    BucketState bucket(int reducerIndex) const;
    MapperStats stats() const;
    /// Describes the first violated window/bucket invariant, if any. For tests.
    std::optional<std::string> checkInvariants() const;

  private:
    MapperPersistentState fetchState(Transaction& tx) const;
    ContinuationToken tokenFrom(const Blob& serialized) const;
    WindowEntry& entryAt(int64_t absoluteIndex);
    int64_t entryContaining(int64_t shuffleIndex, int64_t fromEntry) const;
    void persistShuffle(const WindowEntry& entry);
    size_t trimWindowEntriesLocked();
    void dropStateLocked();

    MapperSpec mapperSpec;
    MapperConfig config;
    StateStore& store;
    PartitionReaderPtr reader;
    IMapperPtr mapper;

    mutable std::mutex mutex;
    bool bootstrapped = false;
    std::deque<WindowEntry> window;
    int64_t firstWindowIndex = 0;
    std::vector<BucketState> buckets;
    MapperPersistentState local;
    MapperPersistentState persisted;
    int64_t inputCurrent = 0;
    int64_t shuffleCurrent = 0;
    ContinuationToken token;
    uint64_t memoryBytes = 0;
    std::optional<MapperPersistentState> pendingReaderTrim;
    std::function<void()> onMemoryReleased;
    MapperStats counters;
};

}// namespace streamshuffle

#endif// STREAMSHUFFLE_MAPPER_HPP_
