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
#include <streamshuffle/reducer.hpp>
#include <streamshuffle/verify.hpp>

#include <algorithm>

namespace streamshuffle {

namespace {

constexpr size_t maxSamples = 8;

RowId effectId(const Row& row) {
    return RowId{static_cast<int>(row[0].asInt64()), row[1].asInt64(), static_cast<int>(row[2].asInt64())};
}

}// namespace

ExactlyOnceVerdict verifyExactlyOnce(const std::vector<Row>& effectRows, const std::set<RowId>& expectedRows,
                                     const std::vector<Row>* tallyRows, const std::map<TallyKey, TallyValue>* oracleTally) {
    ExactlyOnceVerdict verdict;
    auto sample = [&](std::string text) {
        if (verdict.samples.size() < maxSamples) {
            verdict.samples.push_back(std::move(text));
        }
    };

    std::set<RowId> seen;
    for (const auto& row : effectRows) {
        auto id = effectId(row);
        int64_t count = row[3].asInt64();
        seen.insert(id);
        if (!expectedRows.count(id)) {
            ++verdict.unexpected;
            sample("unexpected effect for row " + id.debugString());
        } else if (count > 1) {
            verdict.duplicates += count - 1;
            sample("row " + id.debugString() + " applied " + std::to_string(count) + " times");
        } else if (count < 1) {
            ++verdict.losses;
            sample("row " + id.debugString() + " has count " + std::to_string(count));
        }
    }
    for (const auto& id : expectedRows) {
        if (!seen.count(id)) {
            ++verdict.losses;
            sample("row " + id.debugString() + " never applied");
        }
    }

    if (oracleTally) {
        std::map<TallyKey, TallyValue> actual;
        if (tallyRows) {
            for (const auto& row : *tallyRows) {
                actual[{row[0].asString(), row[1].asString()}] = TallyValue{row[2].asInt64(), row[3].asInt64()};
            }
        }
        for (const auto& [key, value] : *oracleTally) {
            auto it = actual.find(key);
            if (it == actual.end()) {
                ++verdict.tableMismatches;
                sample("missing tally " + key.first + "@" + key.second);
            } else if (!(it->second == value)) {
                ++verdict.tableMismatches;
                sample("tally " + key.first + "@" + key.second + " is " + std::to_string(it->second.tally) + "/"
                       + std::to_string(it->second.lastAccess) + ", expected " + std::to_string(value.tally) + "/"
                       + std::to_string(value.lastAccess));
            }
        }
        for (const auto& [key, value] : actual) {
            if (!oracleTally->count(key)) {
                ++verdict.tableMismatches;
                sample("unexpected tally " + key.first + "@" + key.second);
            }
        }
    }

    verdict.pass = verdict.duplicates == 0 && verdict.losses == 0 && verdict.unexpected == 0 && verdict.tableMismatches == 0;
    return verdict;
}

// ---- AtomicSnapshotChecker ---------------------------------------------------------------------

AtomicSnapshotChecker::AtomicSnapshotChecker(std::string reducerStateTable, std::string effectsTable, ShuffleOracle shuffle,
                                             int mapperCount)
    : reducerStateTable(std::move(reducerStateTable)), effectsTable(std::move(effectsTable)), shuffle(std::move(shuffle)),
      mapperCount(mapperCount) {}

void AtomicSnapshotChecker::violation(std::string what) {
    ++violationCount;
    if (violationSamples.size() < maxSamples) {
        violationSamples.push_back(std::move(what));
    }
}

void AtomicSnapshotChecker::observe(const CommitRecord& record) {
    const CommittedWrite* stateWrite = nullptr;
    std::set<RowId> written;
    for (const auto& write : record.writes) {
        if (write.table == reducerStateTable) {
            if (stateWrite) {
                violation("commit " + std::to_string(record.txSequence) + " writes two reducer state rows");
            }
            stateWrite = &write;
        } else if (write.table == effectsTable) {
            written.insert(effectId(write.key));
        }
    }
    if (!stateWrite && written.empty()) {
        return;
    }
    ++checked;
    if (!stateWrite) {
        violation("commit " + std::to_string(record.txSequence) + " applies " + std::to_string(written.size())
                  + " row effects without advancing reducer state");
        return;
    }
    if (!stateWrite->after) {
        violation("commit " + std::to_string(record.txSequence) + " deletes reducer state");
        return;
    }
    auto after = ReducerPersistentState::fromRow(*stateWrite->after);
    auto before = stateWrite->before ? ReducerPersistentState::fromRow(*stateWrite->before)
                                     : ReducerPersistentState::initial(after.reducerIndex, mapperCount);
    int reducer = static_cast<int>(after.reducerIndex);

    std::set<RowId> owed;
    for (int m = 0; m < mapperCount && m < static_cast<int>(shuffle.size()); ++m) {
        int64_t from = before.committedRowIndices[static_cast<size_t>(m)];
        int64_t to = after.committedRowIndices[static_cast<size_t>(m)];
        if (to < from) {
            violation("commit " + std::to_string(record.txSequence) + " moves reducer " + std::to_string(reducer) + " backwards on mapper "
                      + std::to_string(m));
            continue;
        }
        const auto& numbered = shuffle[static_cast<size_t>(m)];
        for (int64_t s = from + 1; s <= to && s < static_cast<int64_t>(numbered.size()); ++s) {
            if (numbered[static_cast<size_t>(s)].second == reducer) {
                owed.insert(numbered[static_cast<size_t>(s)].first);
            }
        }
    }
    if (effectsTable.empty()) {
        return;
    }
    if (owed != written) {
        std::vector<RowId> missing, extra;
        std::set_difference(owed.begin(), owed.end(), written.begin(), written.end(), std::back_inserter(missing));
        std::set_difference(written.begin(), written.end(), owed.begin(), owed.end(), std::back_inserter(extra));
        violation("commit " + std::to_string(record.txSequence) + " of reducer " + std::to_string(reducer) + ": "
                  + std::to_string(missing.size()) + " owed rows missing, " + std::to_string(extra.size()) + " rows outside the snapshot");
    }
}

// ---- Write amplification -----------------------------------------------------------------------

void ByteRange::add(uint64_t value) {
    if (count == 0) {
        min = max = value;
    } else {
        min = std::min(min, value);
        max = std::max(max, value);
    }
    ++count;
}

WriteAmplification measureWriteAmplification(const std::vector<JournalRecord>& records, const TableRoles& roles, uint64_t payloadBytes) {
    WriteAmplification result;
    result.payloadBytes = payloadBytes;
    for (const auto& record : records) {
        uint64_t mapperBytes = 0, reducerBytes = 0;
        bool mapperTouched = false, reducerTouched = false;
        for (const auto& entry : record.entries) {
            uint64_t size = encodedEntrySize(entry);
            if (entry.table == roles.mapperStateTable) {
                mapperBytes += size;
                mapperTouched = true;
                result.metaBytes += size;
            } else if (entry.table == roles.reducerStateTable) {
                reducerBytes += size;
                reducerTouched = true;
                result.metaBytes += size;
            } else if (!roles.shuffleTable.empty() && entry.table == roles.shuffleTable) {
                result.shuffleBytes += size;
            } else {
                result.userBytes += size;
            }
        }
        if (mapperTouched) {
            result.mapperMetaPerCommit.add(mapperBytes);
        }
        if (reducerTouched) {
            result.reducerMetaPerCommit.add(reducerBytes);
        }
    }
    if (payloadBytes > 0) {
        result.ratio = static_cast<double>(result.metaBytes + result.shuffleBytes) / static_cast<double>(payloadBytes);
    }
    return result;
}

WriteAmplification measureWriteAmplification(const StateStore& store, const TableRoles& roles, uint64_t payloadBytes) {
    auto journal = store.journal();
    if (!journal) {
        throw JournalDisabled("the state store has no journal");
    }
    return measureWriteAmplification(readJournal(journal->bytes()), roles, payloadBytes);
}

}// namespace streamshuffle
