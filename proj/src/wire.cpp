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

#include <streamshuffle/wire.hpp>

#include <functional>

namespace streamshuffle {

namespace {

constexpr uint8_t wireVarint = 0;
constexpr uint8_t wireFixed64 = 1;
constexpr uint8_t wireLengthDelimited = 2;
constexpr uint8_t wireFixed32 = 5;

void putInt64(ByteWriter& out, uint32_t field, int64_t value) {
    out.varint((static_cast<uint64_t>(field) << 3) | wireVarint);
    out.varint(static_cast<uint64_t>(value));
}

void putString(ByteWriter& out, uint32_t field, std::string_view value) {
    out.varint((static_cast<uint64_t>(field) << 3) | wireLengthDelimited);
    out.varint(value.size());
    out.raw(value);
}

using FieldVisitor = std::function<void(uint32_t field, uint8_t wireType, ByteReader& in)>;

void visitFields(std::string_view bytes, const FieldVisitor& visit) {
    ByteReader in(bytes);
    while (!in.atEnd()) {
        uint64_t key = in.varint();
        auto field = static_cast<uint32_t>(key >> 3);
        auto wireType = static_cast<uint8_t>(key & 7);
        if (field == 0) {
            throw MalformedEncoding("field number 0");
        }
        visit(field, wireType, in);
    }
}

void skipField(uint8_t wireType, ByteReader& in) {
    switch (wireType) {
        case wireVarint: in.varint(); break;
        case wireFixed64: in.raw(8); break;
        case wireLengthDelimited: in.raw(in.varint()); break;
        case wireFixed32: in.raw(4); break;
        default: throw MalformedEncoding("unsupported wire type " + std::to_string(wireType));
    }
}

int64_t takeInt64(uint8_t wireType, ByteReader& in) {
    if (wireType != wireVarint) {
        throw MalformedEncoding("expected a varint field, got wire type " + std::to_string(wireType));
    }
    return static_cast<int64_t>(in.varint());
}

std::string takeString(uint8_t wireType, ByteReader& in) {
    if (wireType != wireLengthDelimited) {
        throw MalformedEncoding("expected a length-delimited field, got wire type " + std::to_string(wireType));
    }
    return std::string(in.raw(in.varint()));
}

}// namespace

Blob encodeFields(const GetRowsRequest& request) {
    Blob out;
    ByteWriter writer(out);
    putInt64(writer, 1, request.count);
    putInt64(writer, 2, request.reducerIndex);
    putInt64(writer, 3, request.committedRowIndex);
    putString(writer, 4, request.mapperId);
    return out;
}

Blob encodeFields(const GetRowsResponse& response) {
    Blob out;
    ByteWriter writer(out);
    putInt64(writer, 1, response.rowCount);
    putInt64(writer, 2, response.lastShuffleRowIndex);
    return out;
}

Blob encodeFields(const RpcErrorBody& error) {
    Blob out;
    ByteWriter writer(out);
    putInt64(writer, 1, static_cast<int64_t>(error.code));
    putString(writer, 2, error.message);
    return out;
}

GetRowsRequest decodeRequestFields(std::string_view bytes) {
    GetRowsRequest request;
    visitFields(bytes, [&](uint32_t field, uint8_t wireType, ByteReader& in) {
        switch (field) {
            case 1: request.count = takeInt64(wireType, in); break;
            case 2: request.reducerIndex = takeInt64(wireType, in); break;
            case 3: request.committedRowIndex = takeInt64(wireType, in); break;
            case 4: request.mapperId = takeString(wireType, in); break;
            default: skipField(wireType, in);
        }
    });
    return request;
}

GetRowsResponse decodeResponseFields(std::string_view bytes) {
    GetRowsResponse response;
    visitFields(bytes, [&](uint32_t field, uint8_t wireType, ByteReader& in) {
        switch (field) {
            case 1: response.rowCount = takeInt64(wireType, in); break;
            case 2: response.lastShuffleRowIndex = takeInt64(wireType, in); break;
            default: skipField(wireType, in);
        }
    });
    return response;
}

RpcErrorBody decodeErrorFields(std::string_view bytes) {
    RpcErrorBody error;
    visitFields(bytes, [&](uint32_t field, uint8_t wireType, ByteReader& in) {
        switch (field) {
            case 1: error.code = static_cast<RpcErrorCode>(takeInt64(wireType, in)); break;
            case 2: error.message = takeString(wireType, in); break;
            default: skipField(wireType, in);
        }
    });
    return error;
}

Blob encodeFrame(const Frame& frame) {
    Blob body;
    ByteWriter writer(body);
    writer.u8(static_cast<uint8_t>(frame.kind));
    writer.u32(static_cast<uint32_t>(frame.fields.size()));
    writer.raw(frame.fields);
    writer.u32(static_cast<uint32_t>(frame.attachments.size()));
    for (const auto& attachment : frame.attachments) {
        writer.u32(static_cast<uint32_t>(attachment.size()));
        writer.raw(attachment);
    }
    Blob out;
    ByteWriter framed(out);
    framed.u32(static_cast<uint32_t>(body.size()));
    framed.raw(body);
    return out;
}

Frame decodeFrame(std::string_view bytes) {
    ByteReader outer(bytes);
    uint32_t length = outer.u32();
    ByteReader in(outer.raw(length));
    if (!outer.atEnd()) {
        throw MalformedEncoding("bytes after the frame");
    }
    Frame frame;
    uint8_t kind = in.u8();
    if (kind > static_cast<uint8_t>(MessageKind::Error)) {
        throw MalformedEncoding("unknown message kind " + std::to_string(kind));
    }
    frame.kind = static_cast<MessageKind>(kind);
    frame.fields = std::string(in.raw(in.u32()));
    uint32_t attachmentCount = in.u32();
    if (attachmentCount > in.remaining() / 4) {
        throw MalformedEncoding("attachment count overruns the frame");
    }
    for (uint32_t i = 0; i < attachmentCount; ++i) {
        frame.attachments.emplace_back(in.raw(in.u32()));
    }
    if (!in.atEnd()) {
        throw MalformedEncoding("trailing bytes inside the frame");
    }
    return frame;
}

Blob encodeRequestFrame(const GetRowsRequest& request) {
    return encodeFrame(Frame{MessageKind::GetRowsRequest, encodeFields(request), {}});
}

Blob encodeResponseFrame(const GetRowsResponse& response, Blob rowsetAttachment) {
    return encodeFrame(Frame{MessageKind::GetRowsResponse, encodeFields(response), {std::move(rowsetAttachment)}});
}

Blob encodeErrorFrame(const RpcErrorBody& error) {
    return encodeFrame(Frame{MessageKind::Error, encodeFields(error), {}});
}

}// namespace streamshuffle
