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

#ifndef STREAMSHUFFLE_BYTES_HPP_
#define STREAMSHUFFLE_BYTES_HPP_

#include <streamshuffle/errors.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

namespace streamshuffle {

/// Byte buffers are plain strings: arbitrary bytes, cheap to move, easy to compare.
using Blob = std::string;

/**
 * @brief Little-endian append-only writer over a Blob.
 */
class ByteWriter {
  public:
    explicit ByteWriter(Blob& out) : out(out) {}

    void u8(uint8_t v) { out.push_back(static_cast<char>(v)); }
    void u16(uint16_t v) { fixed(v); }
    void u32(uint32_t v) { fixed(v); }
    void u64(uint64_t v) { fixed(v); }
    void i64(int64_t v) { fixed(static_cast<uint64_t>(v)); }
    void f64(double v) { fixed(std::bit_cast<uint64_t>(v)); }

    void raw(std::string_view bytes) { out.append(bytes); }

    /// Unsigned LEB128, as protobuf uses for varint fields.
    void varint(uint64_t v) {
        while (v >= 0x80) {
            u8(static_cast<uint8_t>(v) | 0x80);
            v >>= 7;
        }
        u8(static_cast<uint8_t>(v));
    }

    size_t size() const { return out.size(); }

  private:
    template<typename T>
    void fixed(T v) {
        for (size_t i = 0; i < sizeof(T); ++i) {
            out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
        }
    }

    Blob& out;
};

/**
 * @brief Bounds-checked little-endian reader. Every overrun raises MalformedEncoding.
 */
class ByteReader {
  public:
    explicit ByteReader(std::string_view in) : in(in) {}

    uint8_t u8() { return static_cast<uint8_t>(take(1)[0]); }
    uint16_t u16() { return fixed<uint16_t>(); }
    uint32_t u32() { return fixed<uint32_t>(); }
    uint64_t u64() { return fixed<uint64_t>(); }
    int64_t i64() { return static_cast<int64_t>(fixed<uint64_t>()); }
    double f64() { return std::bit_cast<double>(fixed<uint64_t>()); }

    std::string_view raw(size_t n) { return take(n); }

    uint64_t varint() {
        uint64_t result = 0;
        for (int shift = 0; shift < 64; shift += 7) {
            uint8_t byte = u8();
            result |= static_cast<uint64_t>(byte & 0x7f) << shift;
            if ((byte & 0x80) == 0) {
                return result;
            }
        }
        throw MalformedEncoding("varint longer than 10 bytes");
    }

    size_t remaining() const { return in.size() - pos; }
    bool atEnd() const { return pos == in.size(); }
    size_t position() const { return pos; }

  private:
    std::string_view take(size_t n) {
        if (n > remaining()) {
            throw MalformedEncoding("truncated input: need " + std::to_string(n) + " bytes at offset "
                                    + std::to_string(pos) + ", have " + std::to_string(remaining()));
        }
        auto view = in.substr(pos, n);
        pos += n;
        return view;
    }

    template<typename T>
    T fixed() {
        auto bytes = take(sizeof(T));
        T v = 0;
        for (size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<T>(static_cast<uint8_t>(bytes[i])) << (8 * i);
        }
        return v;
    }

    std::string_view in;
    size_t pos = 0;
};

}// namespace streamshuffle

#endif// STREAMSHUFFLE_BYTES_HPP_
