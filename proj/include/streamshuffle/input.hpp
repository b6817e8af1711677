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

#ifndef STREAMSHUFFLE_INPUT_HPP_
#define STREAMSHUFFLE_INPUT_HPP_

#include <streamshuffle/bytes.hpp>
#include <streamshuffle/row.hpp>
#include <streamshuffle/state_store.hpp>

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace streamshuffle {

enum class TokenKind : uint8_t { Index = 0, Offset = 1 };

/**
 * @brief Source-specific stream position, persisted inside the mapper state.
 *
 * Wire form: u8 kind tag, then u64 next index (Index) or u32 count + u64 next offset per
 * sub-stream (Offset).
 */
class ContinuationToken {
  public:
    ContinuationToken() : ContinuationToken(index(0)) {}

    static ContinuationToken index(int64_t nextIndex);
    static ContinuationToken offsets(std::vector<uint64_t> nextOffsets);

    TokenKind kind() const { return static_cast<TokenKind>(position.index()); }
    /// Throws InvalidToken on a kind mismatch.
    int64_t nextIndex() const;
    const std::vector<uint64_t>& nextOffsets() const;

    Blob serialize() const;
    /// Throws InvalidToken on unknown tags, truncation or trailing bytes.
    static ContinuationToken deserialize(std::string_view bytes);

    std::string debugString() const;
    bool operator==(const ContinuationToken&) const = default;

  private:
    using Position = std::variant<int64_t, std::vector<uint64_t>>;
    explicit ContinuationToken(Position p) : position(std::move(p)) {}

    Position position;
};

struct ReadResult {
    Rowset rowset;
    ContinuationToken nextToken;
};

/// Runs deferred trim actions; the default runs them inline.
using TrimScheduler = std::function<void(std::function<void()>)>;

/**
 * @brief Reader over a single input partition.
 *
 * read() must return rows in a deterministic order for a given token; the returned rows
 * take input indexes starting at beginRowIndex, and endRowIndex is only a size hint.
 * trim() marks everything before the token as committed; it is idempotent and may act later.
 */
class IPartitionReader {
  public:
    virtual ~IPartitionReader() = default;

    virtual ReadResult read(int64_t beginRowIndex, int64_t endRowIndex, const ContinuationToken& token) = 0;
    virtual void trim(int64_t rowIndex, const ContinuationToken& token) = 0;
    virtual ContinuationToken initialToken() const = 0;
};

using PartitionReaderPtr = std::shared_ptr<IPartitionReader>;

/// Reads one ordered table by absolute row index; the token is the next index to read.
class OrderedTableReader final : public IPartitionReader {
  public:
    OrderedTableReader(StateStore& store, std::string table, TrimScheduler scheduler = {});

    ReadResult read(int64_t beginRowIndex, int64_t endRowIndex, const ContinuationToken& token) override;
    /// The token is authoritative; rowIndex is advisory for this source.
    void trim(int64_t rowIndex, const ContinuationToken& token) override;
    ContinuationToken initialToken() const override;

  private:
    StateStore& store;
    std::string table;
    TrimScheduler scheduler;
};

/**
 * @brief Partition made of several sub-streams whose offsets grow monotonically but with
 * gaps, in the style of a message broker topic partition replicated across clusters.
 *
 * Reads merge the sub-streams in global append order, so a read from a given position
 * only ever gains a longer suffix as data arrives; earlier rows never reorder.
 */
class OffsetLog {
  public:
    /// Offsets advance by a random step in [1, maxOffsetStep] drawn from `seed`.
    OffsetLog(size_t subStreamCount, NameTable schema, uint64_t seed, uint64_t maxOffsetStep = 3);

    /// Appends with a generated offset, which is returned.
    uint64_t append(size_t subStream, Row row);
    /// Appends at an explicit offset; throws std::invalid_argument unless it exceeds the last one.
    void appendAt(size_t subStream, uint64_t offset, Row row);

    struct Slice {
        std::vector<Row> rows;
        std::vector<uint64_t> nextOffsets;
    };
    /// Up to maxRows entries at or after `from`, in global append order. Throws TrimmedRange.
    Slice read(const std::vector<uint64_t>& from, size_t maxRows) const;
    /// Drops entries below upTo per sub-stream; monotone and idempotent.
    void trim(const std::vector<uint64_t>& upTo);

    std::vector<uint64_t> trimWatermarks() const;
    size_t subStreamCount() const { return streams.size(); }
    const NameTable& schema() const { return nameTable; }
    uint64_t appendedCount() const;
    uint64_t storedCount() const;

  private:
    struct Entry {
        uint64_t globalSequence;
        uint64_t offset;
        Row row;
    };
    struct SubStream {
        std::deque<Entry> entries;
        uint64_t nextOffset = 0;
        uint64_t trimmedUpTo = 0;
        bool any = false;
    };

    void appendLocked(size_t subStream, uint64_t offset, Row row);

    mutable std::mutex mutex;
    NameTable nameTable;
    std::vector<SubStream> streams;
    std::mt19937_64 rng;
    uint64_t maxOffsetStep;
    uint64_t nextGlobalSequence = 0;
};

class OffsetLogReader final : public IPartitionReader {
  public:
    explicit OffsetLogReader(std::shared_ptr<OffsetLog> log, TrimScheduler scheduler = {});

    ReadResult read(int64_t beginRowIndex, int64_t endRowIndex, const ContinuationToken& token) override;
    void trim(int64_t rowIndex, const ContinuationToken& token) override;
    ContinuationToken initialToken() const override;

  private:
    void checkToken(const ContinuationToken& token) const;

    std::shared_ptr<OffsetLog> log;
    TrimScheduler scheduler;
};

/// Decorator that raises SourceUnavailable whenever `available` returns false.
class UnreliableReader final : public IPartitionReader {
  public:
    UnreliableReader(PartitionReaderPtr inner, std::function<bool()> available)
        : inner(std::move(inner)), available(std::move(available)) {}

    ReadResult read(int64_t beginRowIndex, int64_t endRowIndex, const ContinuationToken& token) override;
    void trim(int64_t rowIndex, const ContinuationToken& token) override;
    ContinuationToken initialToken() const override { return inner->initialToken(); }

  private:
    PartitionReaderPtr inner;
    std::function<bool()> available;
};

}// namespace streamshuffle

#endif// STREAMSHUFFLE_INPUT_HPP_
