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

#include <streamshuffle/input.hpp>

#include <algorithm>
#include <sstream>

namespace streamshuffle {

// ---- ContinuationToken -------------------------------------------------------------------------

ContinuationToken ContinuationToken::index(int64_t nextIndex) {
    if (nextIndex < 0) {
        throw InvalidToken("negative row index " + std::to_string(nextIndex));
    }
    return ContinuationToken(Position(std::in_place_index<0>, nextIndex));
}

ContinuationToken ContinuationToken::offsets(std::vector<uint64_t> nextOffsets) {
    return ContinuationToken(Position(std::in_place_index<1>, std::move(nextOffsets)));
}

int64_t ContinuationToken::nextIndex() const {
    if (auto* v = std::get_if<int64_t>(&position)) {
        return *v;
    }
    throw InvalidToken("expected an index token, got an offset token");
}

const std::vector<uint64_t>& ContinuationToken::nextOffsets() const {
    if (auto* v = std::get_if<std::vector<uint64_t>>(&position)) {
        return *v;
    }
    throw InvalidToken("expected an offset token, got an index token");
}

Blob ContinuationToken::serialize() const {
    Blob out;
    ByteWriter writer(out);
    writer.u8(static_cast<uint8_t>(kind()));
    if (kind() == TokenKind::Index) {
        writer.u64(static_cast<uint64_t>(nextIndex()));
    } else {
        const auto& offsets = nextOffsets();
        writer.u32(static_cast<uint32_t>(offsets.size()));
        for (uint64_t offset : offsets) {
            writer.u64(offset);
        }
    }
    return out;
}

ContinuationToken ContinuationToken::deserialize(std::string_view bytes) {
    try {
        ByteReader reader(bytes);
        uint8_t tag = reader.u8();
        ContinuationToken token;
        if (tag == static_cast<uint8_t>(TokenKind::Index)) {
            uint64_t next = reader.u64();
            if (next > static_cast<uint64_t>(INT64_MAX)) {
                throw InvalidToken("index out of range");
            }
            token = index(static_cast<int64_t>(next));
        } else if (tag == static_cast<uint8_t>(TokenKind::Offset)) {
            uint32_t count = reader.u32();
            if (count > reader.remaining() / 8) {
                throw InvalidToken("sub-stream count " + std::to_string(count) + " overruns the token");
            }
            std::vector<uint64_t> next(count);
            for (auto& offset : next) {
                offset = reader.u64();
            }
            token = offsets(std::move(next));
        } else {
            throw InvalidToken("unknown token kind tag " + std::to_string(tag));
        }
        if (!reader.atEnd()) {
            throw InvalidToken("trailing bytes in token");
        }
        return token;
    } catch (const MalformedEncoding& e) {
        throw InvalidToken(e.what());
    }
}

std::string ContinuationToken::debugString() const {
    std::ostringstream out;
    if (kind() == TokenKind::Index) {
        out << "index:" << nextIndex();
    } else {
        out << "offsets:[";
        const auto& offsets = nextOffsets();
        for (size_t i = 0; i < offsets.size(); ++i) {
            out << (i ? "," : "") << offsets[i];
        }
        out << "]";
    }
    return out.str();
}

// ---- OrderedTableReader ------------------------------------------------------------------------

OrderedTableReader::OrderedTableReader(StateStore& store, std::string table, TrimScheduler scheduler)
    : store(store), table(std::move(table)), scheduler(std::move(scheduler)) {}

ReadResult OrderedTableReader::read(int64_t beginRowIndex, int64_t endRowIndex, const ContinuationToken& token) {
    if (beginRowIndex > endRowIndex) {
        throw std::invalid_argument("read: beginRowIndex > endRowIndex");
    }
    int64_t position = token.nextIndex();
    auto rows = store.readRange(table, position, position + (endRowIndex - beginRowIndex));
    auto next = ContinuationToken::index(position + static_cast<int64_t>(rows.size()));
    return ReadResult{std::move(rows), std::move(next)};
}

void OrderedTableReader::trim(int64_t /*rowIndex*/, const ContinuationToken& token) {
    int64_t upTo = token.nextIndex();
    auto action = [&store = store, table = table, upTo] { store.trimTable(table, upTo); };
    if (scheduler) {
        scheduler(std::move(action));
    } else {
        action();
    }
}

ContinuationToken OrderedTableReader::initialToken() const {
    return ContinuationToken::index(store.trimmedUpTo(table));
}

// ---- OffsetLog ---------------------------------------------------------------------------------

OffsetLog::OffsetLog(size_t subStreamCount, NameTable schema, uint64_t seed, uint64_t maxOffsetStep)
    : nameTable(std::move(schema)), streams(subStreamCount), rng(seed), maxOffsetStep(std::max<uint64_t>(1, maxOffsetStep)) {
    if (subStreamCount == 0) {
        throw ConfigError("offset log needs at least one sub-stream");
    }
}

void OffsetLog::appendLocked(size_t subStream, uint64_t offset, Row row) {
    auto& stream = streams.at(subStream);
    stream.any = true;
    stream.nextOffset = offset + 1;
    if (offset < stream.trimmedUpTo) {
        ++nextGlobalSequence;
        return;
    }
    stream.entries.push_back(Entry{nextGlobalSequence++, offset, std::move(row)});
}

uint64_t OffsetLog::append(size_t subStream, Row row) {
    std::lock_guard lock(mutex);
    auto& stream = streams.at(subStream);
    uint64_t step = std::uniform_int_distribution<uint64_t>(1, maxOffsetStep)(rng);
    uint64_t offset = stream.any ? stream.nextOffset - 1 + step : step - 1;
    appendLocked(subStream, offset, std::move(row));
    return offset;
}

void OffsetLog::appendAt(size_t subStream, uint64_t offset, Row row) {
    std::lock_guard lock(mutex);
    auto& stream = streams.at(subStream);
    if (stream.any && offset < stream.nextOffset) {
        throw std::invalid_argument("offset " + std::to_string(offset) + " does not advance sub-stream "
                                    + std::to_string(subStream));
    }
    appendLocked(subStream, offset, std::move(row));
}

OffsetLog::Slice OffsetLog::read(const std::vector<uint64_t>& from, size_t maxRows) const {
    std::lock_guard lock(mutex);
    if (from.size() != streams.size()) {
        throw InvalidToken("token has " + std::to_string(from.size()) + " sub-streams, log has "
                           + std::to_string(streams.size()));
    }
    std::vector<size_t> cursor(streams.size());
    for (size_t s = 0; s < streams.size(); ++s) {
        if (from[s] < streams[s].trimmedUpTo) {
            throw TrimmedRange("sub-stream " + std::to_string(s) + ": read from offset " + std::to_string(from[s])
                               + " but trimmed up to " + std::to_string(streams[s].trimmedUpTo));
        }
        const auto& entries = streams[s].entries;
        auto it = std::lower_bound(entries.begin(), entries.end(), from[s],
                                   [](const Entry& e, uint64_t offset) { return e.offset < offset; });
        cursor[s] = static_cast<size_t>(it - entries.begin());
    }
    Slice slice;
    slice.nextOffsets = from;
    while (slice.rows.size() < maxRows) {
        size_t best = streams.size();
        for (size_t s = 0; s < streams.size(); ++s) {
            if (cursor[s] < streams[s].entries.size()
                && (best == streams.size()
                    || streams[s].entries[cursor[s]].globalSequence < streams[best].entries[cursor[best]].globalSequence)) {
                best = s;
            }
        }
        if (best == streams.size()) {
            break;
        }
        const auto& entry = streams[best].entries[cursor[best]++];
        slice.rows.push_back(entry.row);
        slice.nextOffsets[best] = entry.offset + 1;
    }
    return slice;
}

void OffsetLog::trim(const std::vector<uint64_t>& upTo) {
    std::lock_guard lock(mutex);
    if (upTo.size() != streams.size()) {
        throw InvalidToken("trim token has " + std::to_string(upTo.size()) + " sub-streams, log has "
                           + std::to_string(streams.size()));
    }
    for (size_t s = 0; s < streams.size(); ++s) {
        auto& stream = streams[s];
        stream.trimmedUpTo = std::max(stream.trimmedUpTo, upTo[s]);
        while (!stream.entries.empty() && stream.entries.front().offset < stream.trimmedUpTo) {
            stream.entries.pop_front();
        }
    }
}

std::vector<uint64_t> OffsetLog::trimWatermarks() const {
    std::lock_guard lock(mutex);
    std::vector<uint64_t> out;
    for (const auto& stream : streams) {
        out.push_back(stream.trimmedUpTo);
    }
    return out;
}

uint64_t OffsetLog::appendedCount() const {
    std::lock_guard lock(mutex);
    return nextGlobalSequence;
}

uint64_t OffsetLog::storedCount() const {
    std::lock_guard lock(mutex);
    uint64_t n = 0;
    for (const auto& stream : streams) {
        n += stream.entries.size();
    }
    return n;
}

// ---- OffsetLogReader ---------------------------------------------------------------------------

OffsetLogReader::OffsetLogReader(std::shared_ptr<OffsetLog> log, TrimScheduler scheduler)
    : log(std::move(log)), scheduler(std::move(scheduler)) {}

void OffsetLogReader::checkToken(const ContinuationToken& token) const {
    if (token.nextOffsets().size() != log->subStreamCount()) {
        throw InvalidToken("token has " + std::to_string(token.nextOffsets().size()) + " sub-streams, expected "
                           + std::to_string(log->subStreamCount()));
    }
}

ReadResult OffsetLogReader::read(int64_t beginRowIndex, int64_t endRowIndex, const ContinuationToken& token) {
    if (beginRowIndex > endRowIndex) {
        throw std::invalid_argument("read: beginRowIndex > endRowIndex");
    }
    checkToken(token);
    auto slice = log->read(token.nextOffsets(), static_cast<size_t>(endRowIndex - beginRowIndex));
    Rowset rowset{log->schema(), std::move(slice.rows)};
    return ReadResult{std::move(rowset), ContinuationToken::offsets(std::move(slice.nextOffsets))};
}

void OffsetLogReader::trim(int64_t /*rowIndex*/, const ContinuationToken& token) {
    checkToken(token);
    auto action = [log = log, upTo = token.nextOffsets()] { log->trim(upTo); };
    if (scheduler) {
        scheduler(std::move(action));
    } else {
        action();
    }
}

ContinuationToken OffsetLogReader::initialToken() const {
    return ContinuationToken::offsets(log->trimWatermarks());
}

// ---- UnreliableReader --------------------------------------------------------------------------

ReadResult UnreliableReader::read(int64_t beginRowIndex, int64_t endRowIndex, const ContinuationToken& token) {
    if (!available()) {
        throw SourceUnavailable("partition temporarily unavailable");
    }
    return inner->read(beginRowIndex, endRowIndex, token);
}

void UnreliableReader::trim(int64_t rowIndex, const ContinuationToken& token) {
    if (!available()) {
        throw SourceUnavailable("partition temporarily unavailable");
    }
    inner->trim(rowIndex, token);
}

}// namespace streamshuffle
