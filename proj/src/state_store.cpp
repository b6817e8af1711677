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
#include <streamshuffle/state_store.hpp>

namespace streamshuffle {

const char* toString(CommitResult result) {
    return result == CommitResult::Committed ? "Committed" : "ConflictAbort";
}

Blob encodeKey(const Row& key) {
    Blob out;
    ByteWriter writer(out);
    encodeRow(writer, key);
    return out;
}

// ---- Transaction -------------------------------------------------------------------------------

void Transaction::checkOpen() const {
    if (currentState != State::Open) {
        throw TransactionClosed("transaction " + std::to_string(txId) + " is no longer open");
    }
}

std::optional<Row> Transaction::read(std::string_view table, const Row& key) {
    checkOpen();
    SlotKey slot{std::string(table), store.checkedKey(table, key, false)};
    if (auto it = writeSet.find(slot); it != writeSet.end()) {
        return it->second.row;
    }
    auto [row, version] = store.readVersioned(table, key);
    readSet.emplace(std::move(slot), version);
    return row;
}

void Transaction::write(std::string_view table, Row row) {
    checkOpen();
    auto encoded = store.checkedKey(table, row, true);
    const auto& schema = store.schema(table);
    Row key(std::vector<DataValue>(row.values.begin(), row.values.begin() + static_cast<ptrdiff_t>(schema.keyColumnCount)));
    writeSet[SlotKey{std::string(table), std::move(encoded)}] = PendingWrite{std::move(key), std::move(row)};
}

void Transaction::remove(std::string_view table, const Row& key) {
    checkOpen();
    auto encoded = store.checkedKey(table, key, false);
    writeSet[SlotKey{std::string(table), std::move(encoded)}] = PendingWrite{key, std::nullopt};
}

CommitResult Transaction::commit() {
    checkOpen();
    return store.commit(*this);
}

void Transaction::abort() {
    if (currentState == State::Open) {
        currentState = State::Aborted;
    }
}

std::optional<uint64_t> Transaction::observedVersion(std::string_view table, const Row& key) const {
    auto it = readSet.find(SlotKey{std::string(table), encodeKey(key)});
    if (it == readSet.end()) {
        return std::nullopt;
    }
    return it->second;
}

// ---- StateStore --------------------------------------------------------------------------------

void StateStore::createSortedTable(const std::string& name, TableSchema schema) {
    std::lock_guard lock(mutex);
    if (schema.keyColumnCount == 0 || schema.keyColumnCount > schema.columns.size()) {
        throw SchemaMismatch("table " + name + ": key column count must be within [1, column count]");
    }
    if (sortedTables.contains(name) || orderedTables.contains(name)) {
        throw SchemaMismatch("table " + name + " already exists");
    }
    sortedTables.emplace(name, SortedTable{std::move(schema), {}});
}

void StateStore::createOrderedTable(const std::string& name, NameTable schema) {
    std::lock_guard lock(mutex);
    if (sortedTables.contains(name) || orderedTables.contains(name)) {
        throw SchemaMismatch("table " + name + " already exists");
    }
    orderedTables.emplace(name, OrderedTable{std::move(schema), {}, 0, 0});
}

bool StateStore::hasTable(std::string_view name) const {
    std::lock_guard lock(mutex);
    return sortedTables.contains(name) || orderedTables.contains(name);
}

TransactionPtr StateStore::beginTransaction() {
    std::lock_guard lock(mutex);
    return TransactionPtr(new Transaction(*this, nextTxId++));
}

StateStore::SortedTable& StateStore::sortedTable(std::string_view name) {
    auto it = sortedTables.find(name);
    if (it == sortedTables.end()) {
        throw TableNotFound("no sorted table '" + std::string(name) + "'");
    }
    return it->second;
}

const StateStore::SortedTable& StateStore::sortedTable(std::string_view name) const {
    auto it = sortedTables.find(name);
    if (it == sortedTables.end()) {
        throw TableNotFound("no sorted table '" + std::string(name) + "'");
    }
    return it->second;
}

StateStore::OrderedTable& StateStore::orderedTable(std::string_view name) {
    auto it = orderedTables.find(name);
    if (it == orderedTables.end()) {
        throw TableNotFound("no ordered table '" + std::string(name) + "'");
    }
    return it->second;
}

const StateStore::OrderedTable& StateStore::orderedTable(std::string_view name) const {
    auto it = orderedTables.find(name);
    if (it == orderedTables.end()) {
        throw TableNotFound("no ordered table '" + std::string(name) + "'");
    }
    return it->second;
}

void StateStore::checkAvailable(std::string_view table) const {
    if (availabilityHook && !availabilityHook(table)) {
        throw StateUnavailable("table '" + std::string(table) + "' is unavailable");
    }
}

const TableSchema& StateStore::schema(std::string_view table) const {
    std::lock_guard lock(mutex);
    return sortedTable(table).schema;
}

Blob StateStore::checkedKey(std::string_view table, const Row& row, bool fullRow) {
    std::lock_guard lock(mutex);
    const auto& schema = sortedTable(table).schema;
    if (fullRow) {
        if (row.size() < schema.keyColumnCount || row.size() > schema.columns.size()) {
            throw SchemaMismatch("row with " + std::to_string(row.size()) + " values does not fit table '"
                                 + std::string(table) + "' (" + std::to_string(schema.keyColumnCount) + " key columns, "
                                 + std::to_string(schema.columns.size()) + " columns)");
        }
        return encodeKey(Row(std::vector<DataValue>(row.values.begin(),
                                                    row.values.begin() + static_cast<ptrdiff_t>(schema.keyColumnCount))));
    }
    if (row.size() != schema.keyColumnCount) {
        throw SchemaMismatch("key with " + std::to_string(row.size()) + " values for table '" + std::string(table)
                             + "' with " + std::to_string(schema.keyColumnCount) + " key columns");
    }
    return encodeKey(row);
}

std::pair<std::optional<Row>, uint64_t> StateStore::readVersioned(std::string_view table, const Row& key) {
    std::lock_guard lock(mutex);
    auto& t = sortedTable(table);
    checkAvailable(table);
    auto it = t.rows.find(encodeKey(key));
    if (it == t.rows.end()) {
        return {std::nullopt, 0};
    }
    return {it->second.row, it->second.version};
}

CommitResult StateStore::commit(Transaction& tx) {
    std::lock_guard lock(mutex);
    for (const auto& [slot, version] : tx.readSet) {
        checkAvailable(slot.first);
    }
    for (const auto& [slot, write] : tx.writeSet) {
        checkAvailable(slot.first);
    }
    for (const auto& [slot, observed] : tx.readSet) {
        const auto& rows = sortedTable(slot.first).rows;
        auto it = rows.find(slot.second);
        uint64_t current = it == rows.end() ? 0 : it->second.version;
        if (current != observed) {
            tx.currentState = Transaction::State::Aborted;
            ++aborts;
            return CommitResult::ConflictAbort;
        }
    }

    tx.currentState = Transaction::State::Committed;
    ++commits;
    if (tx.writeSet.empty()) {
        return CommitResult::Committed;
    }

    CommitRecord record;
    record.txSequence = nextTxSequence++;
    record.txId = tx.txId;
    JournalRecord journalRecord{record.txSequence, {}};
    for (auto& [slot, write] : tx.writeSet) {
        auto& versioned = sortedTable(slot.first).rows[slot.second];
        record.writes.push_back(CommittedWrite{slot.first, write.key, versioned.row, write.row});
        if (journalSink) {
            journalRecord.entries.push_back(JournalEntry{slot.first, write.key, write.row});
        }
        versioned.row = write.row;
        ++versioned.version;
    }
    if (journalSink) {
        journalSink->append(journalRecord);
    }
    if (commitObserver) {
        commitObserver(record);
    }
    return CommitResult::Committed;
}

std::optional<Row> StateStore::lookup(std::string_view table, const Row& key) const {
    std::lock_guard lock(mutex);
    const auto& rows = sortedTable(table).rows;
    auto it = rows.find(encodeKey(key));
    return it == rows.end() ? std::nullopt : it->second.row;
}

uint64_t StateStore::version(std::string_view table, const Row& key) const {
    std::lock_guard lock(mutex);
    const auto& rows = sortedTable(table).rows;
    auto it = rows.find(encodeKey(key));
    return it == rows.end() ? 0 : it->second.version;
}

std::vector<Row> StateStore::dumpSortedTable(std::string_view table) const {
    std::lock_guard lock(mutex);
    std::vector<Row> out;
    for (const auto& [key, versioned] : sortedTable(table).rows) {
        if (versioned.row) {
            out.push_back(*versioned.row);
        }
    }
    return out;
}

int64_t StateStore::appendRows(std::string_view table, const Rowset& rowset) {
    std::lock_guard lock(mutex);
    auto& t = orderedTable(table);
    int64_t first = t.endIndex();
    if (rowset.rows.empty()) {
        return first;
    }
    std::vector<size_t> mapping;
    mapping.reserve(rowset.nameTable.size());
    bool identity = true;
    for (size_t i = 0; i < rowset.nameTable.size(); ++i) {
        mapping.push_back(t.schema.registerName(rowset.nameTable.nameAt(i)));
        identity = identity && mapping.back() == i;
    }
    for (const auto& row : rowset.rows) {
        if (identity) {
            t.rows.push_back(row);
            continue;
        }
        Row remapped;
        for (size_t i = 0; i < row.size(); ++i) {
            if (remapped.values.size() <= mapping[i]) {
                remapped.values.resize(mapping[i] + 1);
            }
            remapped.values[mapping[i]] = row.values[i];
        }
        t.rows.push_back(std::move(remapped));
    }
    // Rows appended below an earlier over-the-end trim are dropped on arrival.
    while (t.firstStoredIndex < t.trimmedUpTo && !t.rows.empty()) {
        t.rows.pop_front();
        ++t.firstStoredIndex;
    }
    return first;
}

Rowset StateStore::readRange(std::string_view table, int64_t begin, int64_t end) const {
    std::lock_guard lock(mutex);
    const auto& t = orderedTable(table);
    if (begin > end) {
        throw std::invalid_argument("readRange: begin " + std::to_string(begin) + " > end " + std::to_string(end));
    }
    if (begin < t.trimmedUpTo) {
        throw TrimmedRange("table '" + std::string(table) + "': read from " + std::to_string(begin)
                           + " but trimmed up to " + std::to_string(t.trimmedUpTo));
    }
    Rowset result;
    result.nameTable = t.schema;
    int64_t stop = std::min(end, t.endIndex());
    for (int64_t i = begin; i < stop; ++i) {
        result.rows.push_back(t.rows[static_cast<size_t>(i - t.firstStoredIndex)]);
    }
    return result;
}

void StateStore::trimTable(std::string_view table, int64_t upTo) {
    std::lock_guard lock(mutex);
    auto& t = orderedTable(table);
    t.trimmedUpTo = std::max(t.trimmedUpTo, upTo);
    while (t.firstStoredIndex < t.trimmedUpTo && !t.rows.empty()) {
        t.rows.pop_front();
        ++t.firstStoredIndex;
    }
}

int64_t StateStore::endIndex(std::string_view table) const {
    std::lock_guard lock(mutex);
    return orderedTable(table).endIndex();
}

int64_t StateStore::trimmedUpTo(std::string_view table) const {
    std::lock_guard lock(mutex);
    return orderedTable(table).trimmedUpTo;
}

void StateStore::enableJournal(std::shared_ptr<Journal> journal) {
    std::lock_guard lock(mutex);
    journalSink = std::move(journal);
}

std::shared_ptr<Journal> StateStore::journal() const {
    std::lock_guard lock(mutex);
    return journalSink;
}

void StateStore::setCommitObserver(std::function<void(const CommitRecord&)> observer) {
    std::lock_guard lock(mutex);
    commitObserver = std::move(observer);
}

void StateStore::setAvailabilityHook(std::function<bool(std::string_view)> hook) {
    std::lock_guard lock(mutex);
    availabilityHook = std::move(hook);
}

uint64_t StateStore::committedTransactions() const {
    std::lock_guard lock(mutex);
    return commits;
}

uint64_t StateStore::abortedTransactions() const {
    std::lock_guard lock(mutex);
    return aborts;
}

}// namespace streamshuffle
