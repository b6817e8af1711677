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

#ifndef STREAMSHUFFLE_VERIFY_HPP_
#define STREAMSHUFFLE_VERIFY_HPP_

#include <streamshuffle/journal.hpp>
#include <streamshuffle/pipelines.hpp>
#include <streamshuffle/state_store.hpp>
#include <streamshuffle/workload.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace streamshuffle {

struct ExactlyOnceVerdict {
    bool pass = true;
    /// Effects applied more than once, summed over rows (count - 1 each).
    int64_t duplicates = 0;
    /// Expected rows with no recorded effect.
    int64_t losses = 0;
    /// Effects for rows the input never produced.
    int64_t unexpected = 0;
    /// Keys whose user-table value differs from the oracle, or that only one side has.
    int64_t tableMismatches = 0;
    /// A few human-readable differences.
    std::vector<std::string> samples;
};

/**
 * @brief Compares the drained processor against the oracle.
 *
 * `effectRows` use the effects table layout. `tallyRows` and `oracleTally` are compared
 * only when `oracleTally` is given.
 */
ExactlyOnceVerdict verifyExactlyOnce(const std::vector<Row>& effectRows, const std::set<RowId>& expectedRows,
                                     const std::vector<Row>* tallyRows = nullptr,
                                     const std::map<TallyKey, TallyValue>* oracleTally = nullptr);

/**
 * @brief Checks every commit that touches reducer state or effect counters: the effect rows
 * written by a commit must be exactly the rows owed to that reducer between the old and new
 * committed_row_indices. Feed it from the store's commit observer.
 */
class AtomicSnapshotChecker {
  public:
    AtomicSnapshotChecker(std::string reducerStateTable, std::string effectsTable, ShuffleOracle shuffle, int mapperCount);

    void observe(const CommitRecord& record);

    uint64_t commitsChecked() const { return checked; }
    uint64_t violations() const { return violationCount; }
    const std::vector<std::string>& samples() const { return violationSamples; }

  private:
    void violation(std::string what);

    std::string reducerStateTable;
    std::string effectsTable;
    ShuffleOracle shuffle;
    int mapperCount;
    uint64_t checked = 0;
    uint64_t violationCount = 0;
    std::vector<std::string> violationSamples;
};

struct ByteRange {
    uint64_t min = 0;
    uint64_t max = 0;
    uint64_t count = 0;

    void add(uint64_t value);
};

struct WriteAmplification {
    uint64_t payloadBytes = 0;
    uint64_t metaBytes = 0;
    uint64_t shuffleBytes = 0;
    uint64_t userBytes = 0;
    /// Per commit, the journal bytes of its mapper (reducer) state entries.
    ByteRange mapperMetaPerCommit;
    ByteRange reducerMetaPerCommit;
    /// (meta + persisted shuffle) / payload; 0 when no payload was ingested.
    double ratio = 0.0;
};

struct TableRoles {
    std::string mapperStateTable;
    std::string reducerStateTable;
    std::string shuffleTable;
};

/// Attributes every journaled byte to a table role. Throws JournalDisabled without a journal.
WriteAmplification measureWriteAmplification(const StateStore& store, const TableRoles& roles, uint64_t payloadBytes);
WriteAmplification measureWriteAmplification(const std::vector<JournalRecord>& records, const TableRoles& roles, uint64_t payloadBytes);

}// namespace streamshuffle

#endif// STREAMSHUFFLE_VERIFY_HPP_
