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

#ifndef STREAMSHUFFLE_PARTITION_HPP_
#define STREAMSHUFFLE_PARTITION_HPP_

#include <streamshuffle/row.hpp>

#include <cstdint>
#include <span>
#include <string>

namespace streamshuffle {

/**
 * @brief 64-bit FNV-1a over the canonical encoding of the key values.
 *
 * Each key value contributes its kind tag byte followed by its payload exactly as
 * encodeValue writes it, so Null keys hash as the single byte 0x00. The hash is seedless
 * and stable across runs, processes and languages.
 */
uint64_t hashKey(const NameTable& nameTable, const Row& row, std::span<const std::string> keyColumns);

/// FNV-1a 64 of raw bytes; exposed for tests and tools.
uint64_t fnv1a64(std::string_view bytes, uint64_t state = 14695981039346656037ull);

/// hashKey(...) % reducerCount. Throws MissingKeyColumn if a key column is not in the name table.
int hashPartition(const NameTable& nameTable, const Row& row, std::span<const std::string> keyColumns, int reducerCount);

}// namespace streamshuffle

#endif// STREAMSHUFFLE_PARTITION_HPP_
