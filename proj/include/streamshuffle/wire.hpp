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

#ifndef STREAMSHUFFLE_WIRE_HPP_
#define STREAMSHUFFLE_WIRE_HPP_

#include <streamshuffle/bytes.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace streamshuffle {

/// Reducer-side "nothing committed yet" value of committed_row_index.
inline constexpr int64_t nothingCommitted = -1;

/*
 * Shuffle RPC messages. Field bodies use protobuf wire encoding, so they parse as
 *
 *   message TReqGetRows { optional int64 count = 1; optional int64 reducer_index = 2;
 *                         optional int64 committed_row_index = 3; optional string mapper_id = 4; }
 *   message TRspGetRows { optional int64 row_count = 1; optional int64 last_shuffle_row_index = 2; }
 *
 * Rows travel as a separate attachment in the canonical rowset encoding.
 */
struct GetRowsRequest {
    int64_t count = 0;
    int64_t reducerIndex = 0;
    int64_t committedRowIndex = nothingCommitted;
    std::string mapperId;

    bool operator==(const GetRowsRequest&) const = default;
};

struct GetRowsResponse {
    int64_t rowCount = 0;
    int64_t lastShuffleRowIndex = nothingCommitted;

    bool operator==(const GetRowsResponse&) const = default;
};

enum class RpcErrorCode : int64_t {
    StaleMapperId = 1,
    InvalidRequest = 2,
    Unavailable = 3,
};

/// Error body: { optional int64 code = 1; optional string message = 2; }
struct RpcErrorBody {
    RpcErrorCode code = RpcErrorCode::InvalidRequest;
    std::string message;

    bool operator==(const RpcErrorBody&) const = default;
};

Blob encodeFields(const GetRowsRequest& request);
Blob encodeFields(const GetRowsResponse& response);
Blob encodeFields(const RpcErrorBody& error);
/// Unknown fields are skipped as protobuf parsers do. Throws MalformedEncoding.
GetRowsRequest decodeRequestFields(std::string_view bytes);
GetRowsResponse decodeResponseFields(std::string_view bytes);
RpcErrorBody decodeErrorFields(std::string_view bytes);

enum class MessageKind : uint8_t { GetRowsRequest = 0, GetRowsResponse = 1, Error = 2 };

/*
 * Frame layout, little-endian:
 *
 *   u32 frameLength        bytes that follow
 *   u8  kind               MessageKind
 *   u32 fieldsLength, fields (protobuf wire encoding)
 *   u32 attachmentCount
 *   attachmentCount x { u32 length, bytes }
 */
struct Frame {
    MessageKind kind = MessageKind::Error;
    Blob fields;
    std::vector<Blob> attachments;

    bool operator==(const Frame&) const = default;
};

Blob encodeFrame(const Frame& frame);
/// Decodes exactly one frame. Throws MalformedEncoding.
Frame decodeFrame(std::string_view bytes);

Blob encodeRequestFrame(const GetRowsRequest& request);
Blob encodeResponseFrame(const GetRowsResponse& response, Blob rowsetAttachment);
Blob encodeErrorFrame(const RpcErrorBody& error);

}// namespace streamshuffle

#endif// STREAMSHUFFLE_WIRE_HPP_
