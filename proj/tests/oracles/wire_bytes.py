# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Independent reference bytes for the encodings frozen in the C++ tests."""

import struct


def varint(v: int) -> bytes:
    v &= (1 << 64) - 1
    out = bytearray()
    while v >= 0x80:
        out.append((v & 0x7F) | 0x80)
        v >>= 7
    out.append(v)
    return bytes(out)


def pb_int(field: int, v: int) -> bytes:
    return varint(field << 3) + varint(v)


def pb_str(field: int, s: bytes) -> bytes:
    return varint((field << 3) | 2) + varint(len(s)) + s


def rowset(names, rows) -> bytes:
    out = struct.pack("<I", len(names))
    for n in names:
        out += struct.pack("<H", len(n)) + n.encode()
    out += struct.pack("<I", len(rows))
    for row in rows:
        out += struct.pack("<H", len(row))
        for kind, v in row:
            out += bytes([kind])
            if kind == 1:
                out += struct.pack("<q", v)
            elif kind == 2:
                out += struct.pack("<Q", v)
            elif kind == 3:
                out += struct.pack("<d", v)
            elif kind == 4:
                out += bytes([1 if v else 0])
            elif kind == 5:
                out += struct.pack("<I", len(v)) + v
    return out


def frame(kind: int, fields: bytes, attachments) -> bytes:
    body = bytes([kind]) + struct.pack("<I", len(fields)) + fields + struct.pack("<I", len(attachments))
    for a in attachments:
        body += struct.pack("<I", len(a)) + a
    return struct.pack("<I", len(body)) + body


def show(label: str, data: bytes) -> None:
    print(label, data.hex())


def main() -> None:
    show("rowset k=[Int64 7]:", rowset(["k"], [[(1, 7)]]))
    show("rowset empty:", rowset([], []))
    show("rowset mixed:", rowset(["a", "b"], [[(0, None), (5, b"xy")], [(3, 1.5), (4, True)], [(2, 3)]]))
    req = pb_int(1, 2) + pb_int(2, 1) + pb_int(3, -1) + pb_str(4, b"m-1")
    show("request fields {2,1,-1,'m-1'}:", req)
    rsp = pb_int(1, 3) + pb_int(2, 12)
    show("response fields {3,12}:", rsp)
    show("response frame with attachment 'ab':", frame(1, rsp, [b"ab"]))
    show("index token 6:", bytes([0]) + struct.pack("<Q", 6))
    show("offset token [18, 0, 5]:", bytes([1]) + struct.pack("<I", 3) + b"".join(struct.pack("<Q", v) for v in (18, 0, 5)))
    show("index list [12, -1]:", struct.pack("<I", 2) + struct.pack("<q", 12) + struct.pack("<q", -1))


if __name__ == "__main__":
    main()
