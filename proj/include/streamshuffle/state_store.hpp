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

#ifndef STREAMSHUFFLE_STATE_STORE_HPP_
#define STREAMSHUFFLE_STATE_STORE_HPP_

#include <streamshuffle/bytes.hpp>
#include <streamshuffle/journal.hpp>
#include <streamshuffle/row.hpp>

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace streamshuffle {

/// Column names of a sorted table; the first `keyColumnCount` columns form the key.
struct TableSchema {
    NameTable columns;
    size_t keyColumnCount = 1;
};

enum class CommitResult { Committed, ConflictAbort };

const char* toString(CommitResult result);

/// One key's change inside a committed transaction, with its before-image.
struct CommittedWrite {
    std::string table;
    Row key;
    std::optional<Row> before;
    std::optional<Row> after;
};

struct CommitRecord {
    uint64_t txSequence = 0;
    uint64_t txId = 0;
    std::vector<CommittedWrite> writes;
};

class StateStore;

/**
 * @brief Optimistic multi-table transaction over sorted tables.
 *
 * Reads record the observed per-key version; commit validates every recorded version
 * and applies the buffered writes atomically, or applies nothing. Reads see the
 * transaction's own buffered writes.
 */
class Transaction {
  public:
    enum class State { Open, Committed, Aborted };

    uint64_t id() const { return txId; }
    State state() const { return currentState; }
    bool isOpen() const { return currentState == State::Open; }

    /// Throws TableNotFound, TransactionClosed, StateUnavailable.
    std::optional<Row> read(std::string_view table, const Row& key);
    /// Buffers a write keyed by the row's key columns. Throws SchemaMismatch if the row doesn't fit the schema.
    void write(std::string_view table, Row row);
    void remove(std::string_view table, const Row& key);

    CommitResult commit();
    void abort();

    size_t readSetSize() const { return readSet.size(); }
    size_t writeSetSize() const { return writeSet.size(); }
    /// Version observed by the first read of (table, key), if any.
    std::optional<uint64_t> observedVersion(std::string_view table, const Row& key) const;

  private:
    friend class StateStore;
    using SlotKey = std::pair<std::string, Blob>;

    struct PendingWrite {
        Row key;
        std::optional<Row> row;
    };

    Transaction(StateStore& store, uint64_t id) : store(store), txId(id) {}
    void checkOpen() const;

    StateStore& store;
    uint64_t txId;
    State currentState = State::Open;
    std::map<SlotKey, uint64_t> readSet;
    std::map<SlotKey, PendingWrite> writeSet;
};

using TransactionPtr = std::shared_ptr<Transaction>;

/**
 * @brief Embedded transactional store: sorted tables (point reads and multi-row atomic
 * transactions) and ordered tables (append, ranged read, trim).
 *
 * Every public method is individually atomic; commit validates and applies under one lock.
 * The commit observer runs under that lock and must not call back into the store.
 */
class StateStore {
  public:
    StateStore() = default;
    StateStore(const StateStore&) = delete;
    StateStore& operator=(const StateStore&) = delete;

    void createSortedTable(const std::string& name, TableSchema schema);
    void createOrderedTable(const std::string& name, NameTable schema = {});
    bool hasTable(std::string_view name) const;

    TransactionPtr beginTransaction();

    /// Latest committed row outside any transaction.
    std::optional<Row> lookup(std::string_view table, const Row& key) const;
    /// 0 for a key that was never written.
    uint64_t version(std::string_view table, const Row& key) const;
    /// Full dump in key order; for verification and tooling.
    std::vector<Row> dumpSortedTable(std::string_view table) const;
    const TableSchema& schema(std::string_view table) const;

    /// Returns the index of the first appended row (the current end for an empty rowset).
    int64_t appendRows(std::string_view table, const Rowset& rowset);
    /// Rows [begin, min(end, endIndex)). Throws TrimmedRange if begin < trimmedUpTo.
    Rowset readRange(std::string_view table, int64_t begin, int64_t end) const;
    /// trimmedUpTo := max(trimmedUpTo, upTo).
    void trimTable(std::string_view table, int64_t upTo);
    int64_t endIndex(std::string_view table) const;
    int64_t trimmedUpTo(std::string_view table) const;

    void enableJournal(std::shared_ptr<Journal> journal);
    std::shared_ptr<Journal> journal() const;

    void setCommitObserver(std::function<void(const CommitRecord&)> observer);
    /// When the hook returns false for a table, transactional access to it raises StateUnavailable.
    void setAvailabilityHook(std::function<bool(std::string_view table)> hook);

    uint64_t committedTransactions() const;
    uint64_t abortedTransactions() const;

  private:
    friend class Transaction;

    struct VersionedRow {
        std::optional<Row> row;
        uint64_t version = 0;
    };

    struct SortedTable {
        TableSchema schema;
        std::map<Blob, VersionedRow> rows;
    };

    struct OrderedTable {
        NameTable schema;
        std::deque<Row> rows;
        int64_t firstStoredIndex = 0;
        int64_t trimmedUpTo = 0;

        int64_t endIndex() const { return firstStoredIndex + static_cast<int64_t>(rows.size()); }
    };

    SortedTable& sortedTable(std::string_view name);
    const SortedTable& sortedTable(std::string_view name) const;
    OrderedTable& orderedTable(std::string_view name);
    const OrderedTable& orderedTable(std::string_view name) const;
    void checkAvailable(std::string_view table) const;

    // Called by Transaction.
    std::pair<std::optional<Row>, uint64_t> readVersioned(std::string_view table, const Row& key);
    Blob checkedKey(std::string_view table, const Row& row, bool fullRow);
    CommitResult commit(Transaction& tx);

    mutable std::mutex mutex;
    std::map<std::string, SortedTable, std::less<>> sortedTables;
    std::map<std::string, OrderedTable, std::less<>> orderedTables;
    uint64_t nextTxId = 1;
    uint64_t nextTxSequence = 1;
    uint64_t commits = 0;
    uint64_t aborts = 0;
    std::shared_ptr<Journal> journalSink;
    std::function<void(const CommitRecord&)> commitObserver;
    std::function<bool(std::string_view)> availabilityHook;
};

/// Encodes key values as a byte string whose order is only used for map placement.
Blob encodeKey(const Row& key);

}// namespace streamshuffle

#endif// STREAMSHUFFLE_STATE_STORE_HPP_
