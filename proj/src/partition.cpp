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
#include <streamshuffle/partition.hpp>

namespace streamshuffle {

uint64_t fnv1a64(std::string_view bytes, uint64_t state) {
    for (char c : bytes) {
        state ^= static_cast<uint8_t>(c);
        state *= 1099511628211ull;
    }
    return state;
}

uint64_t hashKey(const NameTable& nameTable, const Row& row, std::span<const std::string> keyColumns) {
    Blob keyBytes;
    ByteWriter writer(keyBytes);
    for (const auto& column : keyColumns) {
        encodeValue(writer, row[nameTable.idOf(column)]);
    }
    return fnv1a64(keyBytes);
}

int hashPartition(const NameTable& nameTable, const Row& row, std::span<const std::string> keyColumns, int reducerCount) {
    if (reducerCount < 1) {
        throw ConfigError("reducer count must be positive, got " + std::to_string(reducerCount));
    }
    return static_cast<int>(hashKey(nameTable, row, keyColumns) % static_cast<uint64_t>(reducerCount));
}

}// namespace streamshuffle
