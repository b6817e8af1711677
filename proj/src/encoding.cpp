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

#include <limits>

namespace streamshuffle {

namespace {

constexpr size_t maxShortLength = std::numeric_limits<uint16_t>::max();

void checkShort(size_t length, const char* what) {
    if (length > maxShortLength) {
        throw SchemaMismatch(std::string(what) + " length " + std::to_string(length) + " exceeds 65535");
    }
}

size_t valueSize(const DataValue& value) {
    switch (value.kind()) {
        case ValueKind::Null: return 1;
        case ValueKind::Int64:
        case ValueKind::Uint64:
        case ValueKind::Double: return 1 + 8;
        case ValueKind::Boolean: return 1 + 1;
        case ValueKind::String: return 1 + 4 + value.asString().size();
    }
    return 1;
}

}// namespace

void encodeValue(ByteWriter& out, const DataValue& value) {
    out.u8(static_cast<uint8_t>(value.kind()));
    switch (value.kind()) {
        case ValueKind::Null: break;
        case ValueKind::Int64: out.i64(value.asInt64()); break;
        case ValueKind::Uint64: out.u64(value.asUint64()); break;
        case ValueKind::Double: out.f64(value.asDouble()); break;
        case ValueKind::Boolean: out.u8(value.asBoolean() ? 1 : 0); break;
        case ValueKind::String: {
            const auto& s = value.asString();
            if (s.size() > std::numeric_limits<uint32_t>::max()) {
                throw SchemaMismatch("string value exceeds 4 GiB");
            }
            out.u32(static_cast<uint32_t>(s.size()));
            out.raw(s);
            break;
        }
    }
}

DataValue decodeValue(ByteReader& in) {
    uint8_t tag = in.u8();
    switch (static_cast<ValueKind>(tag)) {
        case ValueKind::Null: return DataValue::null();
        case ValueKind::Int64: return DataValue::int64(in.i64());
        case ValueKind::Uint64: return DataValue::uint64(in.u64());
        case ValueKind::Double: return DataValue::float64(in.f64());
        case ValueKind::Boolean: {
            uint8_t b = in.u8();
            if (b > 1) {
                throw MalformedEncoding("boolean byte " + std::to_string(b));
            }
            return DataValue::boolean(b == 1);
        }
        case ValueKind::String: {
            uint32_t length = in.u32();
            return DataValue::string(std::string(in.raw(length)));
        }
    }
    throw MalformedEncoding("unknown value kind tag " + std::to_string(tag));
}

void encodeRow(ByteWriter& out, const Row& row) {
    checkShort(row.size(), "row value count");
    out.u16(static_cast<uint16_t>(row.size()));
    for (const auto& value : row.values) {
        encodeValue(out, value);
    }
}

Row decodeRow(ByteReader& in) {
    uint16_t count = in.u16();
    Row row;
    row.values.reserve(count);
    for (uint16_t i = 0; i < count; ++i) {
        row.values.push_back(decodeValue(in));
    }
    return row;
}

Blob encodeRowset(const Rowset& rowset) {
    Blob out;
    out.reserve(encodedSize(rowset));
    ByteWriter writer(out);
    writer.u32(static_cast<uint32_t>(rowset.nameTable.size()));
    for (const auto& name : rowset.nameTable.names()) {
        checkShort(name.size(), "column name");
        writer.u16(static_cast<uint16_t>(name.size()));
        writer.raw(name);
    }
    writer.u32(static_cast<uint32_t>(rowset.rows.size()));
    for (const auto& row : rowset.rows) {
        encodeRow(writer, row);
    }
    return out;
}

Rowset decodeRowset(std::string_view bytes) {
    ByteReader reader(bytes);
    Rowset rowset;
    uint32_t nameCount = reader.u32();
    for (uint32_t i = 0; i < nameCount; ++i) {
        uint16_t length = reader.u16();
        auto name = reader.raw(length);
        if (rowset.nameTable.find(name)) {
            throw MalformedEncoding("duplicate column name '" + std::string(name) + "'");
        }
        rowset.nameTable.registerName(name);
    }
    uint32_t rowCount = reader.u32();
    // Every row costs at least two bytes; reject absurd counts before reserving.
    if (rowCount > reader.remaining() / 2) {
        throw MalformedEncoding("row count " + std::to_string(rowCount) + " overruns the buffer");
    }
    rowset.rows.reserve(rowCount);
    for (uint32_t i = 0; i < rowCount; ++i) {
        auto row = decodeRow(reader);
        if (row.size() > nameCount) {
            throw MalformedEncoding("row " + std::to_string(i) + " is wider than the name table");
        }
        rowset.rows.push_back(std::move(row));
    }
    if (!reader.atEnd()) {
        throw MalformedEncoding(std::to_string(reader.remaining()) + " trailing bytes after rowset");
    }
    return rowset;
}

size_t encodedSize(const Row& row) {
    size_t size = 2;
    for (const auto& value : row.values) {
        size += valueSize(value);
    }
    return size;
}

size_t encodedSize(const Rowset& rowset) {
    size_t size = 4 + 4;
    for (const auto& name : rowset.nameTable.names()) {
        size += 2 + name.size();
    }
    for (const auto& row : rowset.rows) {
        size += encodedSize(row);
    }
    return size;
}

}// namespace streamshuffle
