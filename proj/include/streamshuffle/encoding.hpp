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

#ifndef STREAMSHUFFLE_ENCODING_HPP_
#define STREAMSHUFFLE_ENCODING_HPP_

#include <streamshuffle/bytes.hpp>
#include <streamshuffle/row.hpp>

#include <string_view>

namespace streamshuffle {

/*
 * Canonical rowset encoding, all integers little-endian:
 *
 *   u32 nameCount
 *   nameCount x { u16 length, bytes }
 *   u32 rowCount
 *   rowCount x { u16 valueCount, valueCount x value }
 *
 *   value := u8 kind tag, then
 *            Int64/Uint64/Double: 8 bytes
 *            Boolean:             1 byte (0 or 1)
 *            String:              u32 length, bytes
 *            Null:                nothing
 *
 * Equal rowsets always produce identical bytes.
 */
Blob encodeRowset(const Rowset& rowset);

/// Throws MalformedEncoding on truncation, unknown kind tags, length overruns or trailing bytes.
Rowset decodeRowset(std::string_view bytes);

void encodeValue(ByteWriter& out, const DataValue& value);
DataValue decodeValue(ByteReader& in);

/// A single row: u16 valueCount followed by the values.
void encodeRow(ByteWriter& out, const Row& row);
Row decodeRow(ByteReader& in);

/// Size in bytes of encodeRowset(rowset), computed without encoding.
size_t encodedSize(const Rowset& rowset);
size_t encodedSize(const Row& row);

}// namespace streamshuffle

#endif// STREAMSHUFFLE_ENCODING_HPP_
