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

#ifndef STREAMSHUFFLE_ROW_HPP_
#define STREAMSHUFFLE_ROW_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace streamshuffle {

/// Wire tags of the six value kinds. The numeric values are part of the canonical encoding.
enum class ValueKind : uint8_t { Null = 0, Int64 = 1, Uint64 = 2, Double = 3, Boolean = 4, String = 5 };

const char* toString(ValueKind kind);

/**
 * @brief A strictly typed scalar. String payloads are arbitrary bytes.
 *
 * Equality is structural; doubles compare by bit pattern so that equal values always
 * encode to equal bytes (NaN == NaN, -0.0 != 0.0).
 */
class DataValue {
  public:
    DataValue() = default;

    static DataValue null() { return {}; }
    static DataValue int64(int64_t v) { return DataValue(Payload(std::in_place_index<1>, v)); }
    static DataValue uint64(uint64_t v) { return DataValue(Payload(std::in_place_index<2>, v)); }
    static DataValue float64(double v) { return DataValue(Payload(std::in_place_index<3>, v)); }
    static DataValue boolean(bool v) { return DataValue(Payload(std::in_place_index<4>, v)); }
    static DataValue string(std::string v) { return DataValue(Payload(std::in_place_index<5>, std::move(v))); }

    ValueKind kind() const { return static_cast<ValueKind>(payload.index()); }
    bool isNull() const { return kind() == ValueKind::Null; }

    // Accessors throw SchemaMismatch on a kind mismatch.
    int64_t asInt64() const;
    uint64_t asUint64() const;
    double asDouble() const;
    bool asBoolean() const;
    const std::string& asString() const;

    bool operator==(const DataValue& other) const;

    std::string debugString() const;

  private:
    using Payload = std::variant<std::monostate, int64_t, uint64_t, double, bool, std::string>;
    explicit DataValue(Payload p) : payload(std::move(p)) {}

    Payload payload;
};

/**
 * @brief Ordered list of unique column names with a reverse index.
 * A name keeps its position for the lifetime of the table.
 */
class NameTable {
  public:
    NameTable() = default;
    /// Throws SchemaMismatch on duplicate names.
    explicit NameTable(std::vector<std::string> names);

    /// Returns the position of `name`, appending it if absent.
    size_t registerName(std::string_view name);
    std::optional<size_t> find(std::string_view name) const;
    /// Throws MissingKeyColumn when absent.
    size_t idOf(std::string_view name) const;
    const std::string& nameAt(size_t id) const { return columnNames.at(id); }
    const std::vector<std::string>& names() const { return columnNames; }
    size_t size() const { return columnNames.size(); }

    bool operator==(const NameTable& other) const { return columnNames == other.columnNames; }

  private:
    std::vector<std::string> columnNames;
    std::map<std::string, size_t, std::less<>> positions;
};

/// Values positionally aligned with a NameTable. Trailing absent columns read as Null.
struct Row {
    std::vector<DataValue> values;

    Row() = default;
    Row(std::initializer_list<DataValue> init) : values(init) {}
    explicit Row(std::vector<DataValue> v) : values(std::move(v)) {}

    const DataValue& operator[](size_t i) const;
    size_t size() const { return values.size(); }

    bool operator==(const Row& other) const = default;
};

struct Rowset {
    NameTable nameTable;
    std::vector<Row> rows;

    size_t size() const { return rows.size(); }
    bool empty() const { return rows.empty(); }
    /// Throws SchemaMismatch if a row is wider than the name table.
    void validate() const;

    bool operator==(const Rowset& other) const = default;
};

/// Output of a user Map call: the mapped rows plus the reducer index of each.
struct PartitionedRowset {
    Rowset rowset;
    std::vector<int> partitionIndexes;

    /// Throws SchemaMismatch on a length mismatch or an index outside [0, reducerCount).
    void validate(int reducerCount) const;
};

/**
 * @brief Concatenates rows that may come from rowsets with different name tables,
 * remapping each value by column name.
 */
class RowsetBuilder {
  public:
    RowsetBuilder() = default;
    explicit RowsetBuilder(NameTable schema) { result.nameTable = std::move(schema); }

    void add(const NameTable& source, const Row& row);
    void addAll(const Rowset& rowset);
    void reserve(size_t n) { result.rows.reserve(n); }

    size_t size() const { return result.rows.size(); }
    Rowset build() && { return std::move(result); }

  private:
    std::vector<size_t> mappingFor(const NameTable& source);
    Row remap(const std::vector<size_t>& mapping, const Row& row) const;

    Rowset result;
};

}// namespace streamshuffle

#endif// STREAMSHUFFLE_ROW_HPP_
