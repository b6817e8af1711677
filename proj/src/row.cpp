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
#include <streamshuffle/row.hpp>

#include <bit>
#include <sstream>

namespace streamshuffle {

const char* toString(ValueKind kind) {
    switch (kind) {
        case ValueKind::Null: return "Null";
        case ValueKind::Int64: return "Int64";
        case ValueKind::Uint64: return "Uint64";
        case ValueKind::Double: return "Double";
        case ValueKind::Boolean: return "Boolean";
        case ValueKind::String: return "String";
    }
    return "Unknown";
}

namespace {

[[noreturn]] void kindMismatch(ValueKind expected, ValueKind actual) {
    throw SchemaMismatch(std::string("expected ") + toString(expected) + " value, got " + toString(actual));
}

}// namespace

int64_t DataValue::asInt64() const {
    if (auto* v = std::get_if<int64_t>(&payload)) {
        return *v;
    }
    kindMismatch(ValueKind::Int64, kind());
}

uint64_t DataValue::asUint64() const {
    if (auto* v = std::get_if<uint64_t>(&payload)) {
        return *v;
    }
    kindMismatch(ValueKind::Uint64, kind());
}

double DataValue::asDouble() const {
    if (auto* v = std::get_if<double>(&payload)) {
        return *v;
    }
    kindMismatch(ValueKind::Double, kind());
}

bool DataValue::asBoolean() const {
    if (auto* v = std::get_if<bool>(&payload)) {
        return *v;
    }
    kindMismatch(ValueKind::Boolean, kind());
}

const std::string& DataValue::asString() const {
    if (auto* v = std::get_if<std::string>(&payload)) {
        return *v;
    }
    kindMismatch(ValueKind::String, kind());
}

bool DataValue::operator==(const DataValue& other) const {
    if (payload.index() != other.payload.index()) {
        return false;
    }
    if (kind() == ValueKind::Double) {
        return std::bit_cast<uint64_t>(std::get<double>(payload)) == std::bit_cast<uint64_t>(std::get<double>(other.payload));
    }
    return payload == other.payload;
}

std::string DataValue::debugString() const {
    std::ostringstream out;
    switch (kind()) {
        case ValueKind::Null: out << "null"; break;
        case ValueKind::Int64: out << asInt64(); break;
        case ValueKind::Uint64: out << asUint64() << "u"; break;
        case ValueKind::Double: out << asDouble(); break;
        case ValueKind::Boolean: out << (asBoolean() ? "%true" : "%false"); break;
        case ValueKind::String: out << '"' << asString() << '"'; break;
    }
    return out.str();
}

NameTable::NameTable(std::vector<std::string> names) {
    for (auto& name : names) {
        if (find(name)) {
            throw SchemaMismatch("duplicate column name '" + name + "'");
        }
        registerName(name);
    }
}

size_t NameTable::registerName(std::string_view name) {
    if (auto it = positions.find(name); it != positions.end()) {
        return it->second;
    }
    size_t id = columnNames.size();
    columnNames.emplace_back(name);
    positions.emplace(std::string(name), id);
    return id;
}

std::optional<size_t> NameTable::find(std::string_view name) const {
    if (auto it = positions.find(name); it != positions.end()) {
        return it->second;
    }
    return std::nullopt;
}

size_t NameTable::idOf(std::string_view name) const {
    if (auto id = find(name)) {
        return *id;
    }
    throw MissingKeyColumn("column '" + std::string(name) + "' is not in the name table");
}

const DataValue& Row::operator[](size_t i) const {
    static const DataValue nullValue;
    return i < values.size() ? values[i] : nullValue;
}

void Rowset::validate() const {
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() > nameTable.size()) {
            throw SchemaMismatch("row " + std::to_string(i) + " has " + std::to_string(rows[i].size())
                                 + " values but the name table has " + std::to_string(nameTable.size()) + " columns");
        }
    }
}

void PartitionedRowset::validate(int reducerCount) const {
    rowset.validate();
    if (partitionIndexes.size() != rowset.rows.size()) {
        throw SchemaMismatch("partition index vector has " + std::to_string(partitionIndexes.size())
                             + " entries for " + std::to_string(rowset.rows.size()) + " rows");
    }
    for (int index : partitionIndexes) {
        if (index < 0 || index >= reducerCount) {
            throw SchemaMismatch("partition index " + std::to_string(index) + " outside [0, "
                                 + std::to_string(reducerCount) + ")");
        }
    }
}

std::vector<size_t> RowsetBuilder::mappingFor(const NameTable& source) {
    std::vector<size_t> mapping;
    mapping.reserve(source.size());
    for (const auto& name : source.names()) {
        mapping.push_back(result.nameTable.registerName(name));
    }
    return mapping;
}

Row RowsetBuilder::remap(const std::vector<size_t>& mapping, const Row& row) const {
    bool identity = true;
    for (size_t i = 0; i < row.size() && identity; ++i) {
        identity = mapping[i] == i;
    }
    if (identity) {
        return row;
    }
    Row out;
    for (size_t i = 0; i < row.size(); ++i) {
        size_t target = mapping[i];
        if (out.values.size() <= target) {
            out.values.resize(target + 1);
        }
        out.values[target] = row.values[i];
    }
    return out;
}

void RowsetBuilder::add(const NameTable& source, const Row& row) {
    result.rows.push_back(remap(mappingFor(source), row));
}

void RowsetBuilder::addAll(const Rowset& rowset) {
    auto mapping = mappingFor(rowset.nameTable);
    result.rows.reserve(result.rows.size() + rowset.rows.size());
    for (const auto& row : rowset.rows) {
        result.rows.push_back(remap(mapping, row));
    }
}

}// namespace streamshuffle
