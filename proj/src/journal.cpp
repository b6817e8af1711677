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
#include <streamshuffle/journal.hpp>

#include <iterator>

namespace streamshuffle {

namespace {

constexpr uint8_t rowMarker = 0;
constexpr uint8_t deleteMarker = 1;

void encodeEntry(ByteWriter& out, const JournalEntry& entry) {
    if (entry.table.size() > 0xffff) {
        throw SchemaMismatch("table name too long for the journal");
    }
    out.u16(static_cast<uint16_t>(entry.table.size()));
    out.raw(entry.table);
    encodeRow(out, entry.key);
    if (entry.row) {
        out.u8(rowMarker);
        encodeRow(out, *entry.row);
    } else {
        out.u8(deleteMarker);
    }
}

}// namespace

size_t encodedEntrySize(const JournalEntry& entry) {
    return 2 + entry.table.size() + encodedSize(entry.key) + 1 + (entry.row ? encodedSize(*entry.row) : 0);
}

Blob encodeJournalRecord(const JournalRecord& record) {
    Blob body;
    ByteWriter writer(body);
    writer.u64(record.txSequence);
    writer.u32(static_cast<uint32_t>(record.entries.size()));
    for (const auto& entry : record.entries) {
        encodeEntry(writer, entry);
    }
    Blob out;
    ByteWriter framed(out);
    framed.u32(static_cast<uint32_t>(body.size()));
    framed.raw(body);
    return out;
}

std::vector<JournalRecord> readJournal(std::string_view bytes) {
    std::vector<JournalRecord> records;
    ByteReader reader(bytes);
    while (!reader.atEnd()) {
        uint32_t length = reader.u32();
        ByteReader body(reader.raw(length));
        JournalRecord record;
        record.txSequence = body.u64();
        uint32_t entryCount = body.u32();
        for (uint32_t i = 0; i < entryCount; ++i) {
            JournalEntry entry;
            uint16_t nameLength = body.u16();
            entry.table = std::string(body.raw(nameLength));
            entry.key = decodeRow(body);
            uint8_t marker = body.u8();
            if (marker == rowMarker) {
                entry.row = decodeRow(body);
            } else if (marker != deleteMarker) {
                throw MalformedEncoding("unknown journal entry marker " + std::to_string(marker));
            }
            record.entries.push_back(std::move(entry));
        }
        if (!body.atEnd()) {
            throw MalformedEncoding("journal record has trailing bytes");
        }
        records.push_back(std::move(record));
    }
    return records;
}

std::vector<JournalRecord> readJournalFile(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open journal file " + path);
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return readJournal(bytes);
}

Journal::Journal(const std::string& path) {
    file.emplace(path, std::ios::binary | std::ios::trunc);
    if (!*file) {
        throw ConfigError("cannot open journal file " + path + " for writing");
    }
}

void Journal::append(const JournalRecord& record) {
    auto encoded = encodeJournalRecord(record);
    data += encoded;
    ++records;
    if (file) {
        file->write(encoded.data(), static_cast<std::streamsize>(encoded.size()));
        file->flush();
    }
}

}// namespace streamshuffle
