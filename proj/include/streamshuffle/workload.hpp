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

#ifndef STREAMSHUFFLE_WORKLOAD_HPP_
#define STREAMSHUFFLE_WORKLOAD_HPP_

#include <streamshuffle/row.hpp>
#include <streamshuffle/scenario.hpp>

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace streamshuffle {

/// Identifies one access entry of one input row: the unit whose effect must apply exactly once.
struct RowId {
    int partition = 0;
    int64_t seq = 0;
    int entry = 0;

    auto operator<=>(const RowId&) const = default;
    std::string debugString() const;
};

struct AccessEntry {
    /// Empty when the log line has no user field.
    std::string user;
    std::string cluster;
};

struct InputEvent {
    int64_t seq = 0;
    int64_t timestamp = 0;
    std::vector<AccessEntry> entries;
    std::string directive;
    std::string payload;
};

struct Workload {
    std::vector<std::vector<InputEvent>> partitions;

    size_t totalEvents() const;
};

/// Rows are dealt round-robin: global row g goes to partition g % partitions as seq g / partitions.
Workload generateWorkload(const InputSpec& input, int partitions, uint64_t seed, const std::vector<ControlRow>& controls = {});

/// Input columns: seq, timestamp, body, payload.
NameTable sourceSchema();
Row toSourceRow(const InputEvent& event);
/// Log-line form of the entries, e.g. "@@crash-reducer;u=user-3,c=cluster-1;c=cluster-0".
std::string encodeBody(const InputEvent& event);

struct TallyValue {
    int64_t tally = 0;
    int64_t lastAccess = 0;

    bool operator==(const TallyValue&) const = default;
};

using TallyKey = std::pair<std::string, std::string>;

/// Expected outcome of the access-tally pipeline, computed directly from the generated events.
struct AccessOracle {
    std::map<TallyKey, TallyValue> tally;
    std::set<RowId> expectedRows;
    /// shuffle[m][s]: the entry mapper m numbers s, and its reducer.
    std::vector<std::vector<std::pair<RowId, int>>> shuffle;
};

AccessOracle computeAccessOracle(const Workload& workload, int reducerCount);

/// Reducer of a (user, cluster) key, computed the way the demo mapper partitions.
int reducerForKey(const std::string& user, const std::string& cluster, int reducerCount);

}// namespace streamshuffle

#endif// STREAMSHUFFLE_WORKLOAD_HPP_
