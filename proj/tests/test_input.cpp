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

#include "test_support.hpp"

#include <streamshuffle/errors.hpp>
#include <streamshuffle/input.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace streamshuffle;
using streamshuffle::testing::toHex;

namespace {

NameTable schema() {
    return NameTable({"v"});
}

Row row(int64_t v) {
    return Row{DataValue::int64(v)};
}

std::vector<int64_t> values(const Rowset& rowset) {
    std::vector<int64_t> out;
    for (const auto& r : rowset.rows) {
        out.push_back(r[0].asInt64());
    }
    return out;
}

void fill(StateStore& store, const std::string& table, int64_t n) {
    Rowset rowset;
    rowset.nameTable = schema();
    for (int64_t i = 0; i < n; ++i) {
        rowset.rows.push_back(row(i));
    }
    store.appendRows(table, rowset);
}

}// namespace

TEST(ContinuationToken, WireFormMatchesReference) {
    EXPECT_EQ(toHex(ContinuationToken::index(6).serialize()), "000600000000000000");
    EXPECT_EQ(toHex(ContinuationToken::offsets({18, 0, 5}).serialize()), "0103000000120000000000000000000000000000000500000000000000");
}

TEST(ContinuationToken, RoundTripsAndRejectsGarbage) {
    for (const auto& token : {ContinuationToken::index(0), ContinuationToken::index(1234567), ContinuationToken::offsets({}),
                              ContinuationToken::offsets({1, 2, 3})}) {
        EXPECT_EQ(ContinuationToken::deserialize(token.serialize()), token);
    }
    EXPECT_THROW(ContinuationToken::deserialize(""), InvalidToken);
    EXPECT_THROW(ContinuationToken::deserialize(std::string("\x07", 1)), InvalidToken);
    auto bytes = ContinuationToken::index(5).serialize();
    EXPECT_THROW(ContinuationToken::deserialize(bytes.substr(0, 4)), InvalidToken);
    EXPECT_THROW(ContinuationToken::deserialize(bytes + "x"), InvalidToken);
    EXPECT_THROW(ContinuationToken::index(1).nextOffsets(), InvalidToken);
    EXPECT_THROW(ContinuationToken::offsets({1}).nextIndex(), InvalidToken);
}

TEST(OrderedTableReader, EmptyPartitionKeepsToken) {
    StateStore store;
    store.createOrderedTable("p", schema());
    OrderedTableReader reader(store, "p");
    auto token = reader.initialToken();
    EXPECT_EQ(token, ContinuationToken::index(0));
    auto result = reader.read(0, 10, token);
    EXPECT_TRUE(result.rowset.empty());
    EXPECT_EQ(result.nextToken, token);
}

TEST(OrderedTableReader, ReadsByAbsoluteIndex) {
    StateStore store;
    store.createOrderedTable("p", schema());
    fill(store, "p", 10);
    OrderedTableReader reader(store, "p");
    auto result = reader.read(3, 6, ContinuationToken::index(3));
    EXPECT_EQ(values(result.rowset), (std::vector<int64_t>{3, 4, 5}));
    EXPECT_EQ(result.nextToken, ContinuationToken::index(6));
    EXPECT_EQ(values(reader.read(0, 1, reader.initialToken()).rowset), (std::vector<int64_t>{0}));
}

TEST(OrderedTableReader, RejectsOffsetTokens) {
    StateStore store;
    store.createOrderedTable("p", schema());
    OrderedTableReader reader(store, "p");
    EXPECT_THROW(reader.read(0, 1, ContinuationToken::offsets({0})), InvalidToken);
    EXPECT_THROW(reader.trim(0, ContinuationToken::offsets({0})), InvalidToken);
}

TEST(OrderedTableReader, TrimIsIdempotentAndKeepsSuffix) {
    StateStore store;
    store.createOrderedTable("p", schema());
    fill(store, "p", 10);
    OrderedTableReader reader(store, "p");
    reader.trim(0, reader.initialToken());
    EXPECT_EQ(store.trimmedUpTo("p"), 0);
    reader.trim(4, ContinuationToken::index(4));
    reader.trim(4, ContinuationToken::index(4));
    EXPECT_EQ(store.trimmedUpTo("p"), 4);
    EXPECT_EQ(reader.initialToken(), ContinuationToken::index(4));
    EXPECT_EQ(values(reader.read(4, 100, ContinuationToken::index(4)).rowset), (std::vector<int64_t>{4, 5, 6, 7, 8, 9}));
    EXPECT_THROW(reader.read(2, 4, ContinuationToken::index(2)), TrimmedRange);
}

TEST(OrderedTableReader, TrimCanBeDeferred) {
    StateStore store;
    store.createOrderedTable("p", schema());
    fill(store, "p", 5);
    std::vector<std::function<void()>> pending;
    OrderedTableReader reader(store, "p", [&](std::function<void()> fn) { pending.push_back(std::move(fn)); });
    reader.trim(3, ContinuationToken::index(3));
    EXPECT_EQ(store.trimmedUpTo("p"), 0);
    ASSERT_EQ(pending.size(), 1u);
    pending[0]();
    EXPECT_EQ(store.trimmedUpTo("p"), 3);
}

TEST(OffsetLogReader, GappedOffsetsReplayIdentically) {
    auto log = std::make_shared<OffsetLog>(1, schema(), 1);
    log->appendAt(0, 10, row(10));
    log->appendAt(0, 12, row(12));
    log->appendAt(0, 17, row(17));
    OffsetLogReader reader(log);
    auto token = ContinuationToken::offsets({11});
    auto first = reader.read(0, 10, token);
    EXPECT_EQ(values(first.rowset), (std::vector<int64_t>{12, 17}));
    EXPECT_EQ(first.nextToken, ContinuationToken::offsets({18}));
    auto replay = reader.read(0, 10, ContinuationToken::deserialize(token.serialize()));
    EXPECT_EQ(replay.rowset, first.rowset);
    EXPECT_EQ(replay.nextToken, first.nextToken);
    EXPECT_THROW(log->appendAt(0, 17, row(0)), std::invalid_argument);
}

TEST(OffsetLogReader, OffsetsAreGappedButMonotone) {
    OffsetLog log(2, schema(), 3, 3);
    std::vector<uint64_t> last(2, 0);
    bool sawGap = false;
    for (int i = 0; i < 200; ++i) {
        size_t s = static_cast<size_t>(i % 2);
        uint64_t offset = log.append(s, row(i));
        if (i >= 2) {
            EXPECT_GT(offset, last[s]);
            sawGap = sawGap || offset > last[s] + 1;
        }
        last[s] = offset;
    }
    EXPECT_TRUE(sawGap);
}

TEST(OffsetLogReader, RejectsIndexTokensAndWrongWidth) {
    auto log = std::make_shared<OffsetLog>(2, schema(), 1);
    OffsetLogReader reader(log);
    EXPECT_THROW(reader.read(0, 1, ContinuationToken::index(0)), InvalidToken);
    EXPECT_THROW(reader.read(0, 1, ContinuationToken::offsets({0})), InvalidToken);
}

TEST(OffsetLogReader, ReadsArePrefixStableUnderAppends) {
    auto log = std::make_shared<OffsetLog>(3, schema(), 9);
    OffsetLogReader reader(log);
    std::mt19937_64 rng(4);
    auto token = reader.initialToken();
    std::vector<Row> previous;
    for (int i = 0; i < 300; ++i) {
        log->append(rng() % 3, row(i));
        auto now = reader.read(0, 1000, token).rowset.rows;
        ASSERT_GE(now.size(), previous.size());
        ASSERT_TRUE(std::equal(previous.begin(), previous.end(), now.begin()));
        previous = now;
    }
    // Global append order regardless of sub-stream.
    for (size_t i = 0; i < previous.size(); ++i) {
        EXPECT_EQ(previous[i][0].asInt64(), static_cast<int64_t>(i));
    }
}

TEST(OffsetLogReader, TrimKeepsSuffixAgainstShadowCopy) {
    auto log = std::make_shared<OffsetLog>(3, schema(), 2);
    OffsetLogReader reader(log);
    std::mt19937_64 rng(8);
    for (int i = 0; i < 100; ++i) {
        log->append(rng() % 3, row(i));
    }
    auto shadow = reader.read(0, 1000, reader.initialToken()).rowset.rows;
    auto head = reader.read(0, 40, reader.initialToken());
    reader.trim(40, head.nextToken);
    reader.trim(40, head.nextToken);
    EXPECT_EQ(log->storedCount(), 60u);
    auto suffix = reader.read(40, 1000, head.nextToken).rowset.rows;
    EXPECT_EQ(suffix, std::vector<Row>(shadow.begin() + 40, shadow.end()));
    auto fromStart = reader.read(0, 1000, reader.initialToken()).rowset.rows;
    EXPECT_EQ(fromStart, suffix);
    EXPECT_THROW(reader.read(0, 10, ContinuationToken::offsets({0, 0, 0})), TrimmedRange);
}

TEST(OffsetLogReader, TrimWithInitialTokenIsNoop) {
    auto log = std::make_shared<OffsetLog>(2, schema(), 2);
    OffsetLogReader reader(log);
    log->append(0, row(1));
    log->append(1, row(2));
    reader.trim(0, reader.initialToken());
    EXPECT_EQ(log->storedCount(), 2u);
}

TEST(UnreliableReader, SurfacesTransientUnavailability) {
    StateStore store;
    store.createOrderedTable("p", schema());
    fill(store, "p", 3);
    bool up = false;
    UnreliableReader reader(std::make_shared<OrderedTableReader>(store, "p"), [&] { return up; });
    EXPECT_THROW(reader.read(0, 3, reader.initialToken()), SourceUnavailable);
    up = true;
    EXPECT_EQ(reader.read(0, 3, reader.initialToken()).rowset.size(), 3u);
}
