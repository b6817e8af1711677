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

#ifndef STREAMSHUFFLE_JOURNAL_HPP_
#define STREAMSHUFFLE_JOURNAL_HPP_

#include <streamshuffle/bytes.hpp>
#include <streamshuffle/row.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace streamshuffle {

struct JournalEntry {
    std::string table;
    Row key;
    /// Absent for deletes.
    std::optional<Row> row;

    bool operator==(const JournalEntry&) const = default;
};

struct JournalRecord {
    uint64_t txSequence = 0;
    std::vector<JournalEntry> entries;

    bool operator==(const JournalRecord&) const = default;
};

/*
 * Journal format, one record per committed transaction, little-endian:
 *
 *   u32 recordLength            bytes that follow in this record
 *   u64 txSequence
 *   u32 entryCount
 *   entryCount x {
 *     u16 tableNameLength, bytes
 *     key row                   (u16 valueCount + values, row encoding)
 *     u8 marker                 0 = row follows, 1 = delete
 *     row                       (only when marker == 0)
 *   }
 */
Blob encodeJournalRecord(const JournalRecord& record);
/// Size of the entry inside a record, excluding the record header.
size_t encodedEntrySize(const JournalEntry& entry);
/// Parses a whole journal. Throws MalformedEncoding on a torn or corrupt record.
std::vector<JournalRecord> readJournal(std::string_view bytes);
std::vector<JournalRecord> readJournalFile(const std::string& path);

/**
 * @brief Append-only journal of committed write sets. Keeps the bytes in memory and
 * optionally mirrors them to a file.
 */
class Journal {
  public:
    Journal() = default;
    /// Opens (truncates) `path` for appending.
    explicit Journal(const std::string& path);

    void append(const JournalRecord& record);

    const Blob& bytes() const { return data; }
    uint64_t totalBytes() const { return data.size(); }
    uint64_t recordCount() const { return records; }

  private:
    Blob data;
    uint64_t records = 0;
    std::optional<std::ofstream> file;
};

}// namespace streamshuffle

#endif// STREAMSHUFFLE_JOURNAL_HPP_
