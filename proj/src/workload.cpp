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

#include <streamshuffle/partition.hpp>
#include <streamshuffle/workload.hpp>

#include <algorithm>
#include <random>

namespace streamshuffle {

std::string RowId::debugString() const {
    return std::to_string(partition) + "/" + std::to_string(seq) + "/" + std::to_string(entry);
}

size_t Workload::totalEvents() const {
    size_t total = 0;
    for (const auto& p : partitions) {
        total += p.size();
    }
    return total;
}

Workload generateWorkload(const InputSpec& input, int partitions, uint64_t seed, const std::vector<ControlRow>& controls) {
    std::mt19937_64 rng(seed ^ 0x5deece66dull);
    std::uniform_int_distribution<int> entryCount(1, 3);
    std::uniform_int_distribution<int> userPick(0, input.users - 1);
    std::uniform_int_distribution<int> clusterPick(0, input.clusters - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::map<std::pair<int, int64_t>, std::string> directives;
    for (const auto& c : controls) {
        directives[{c.partition, c.seq}] = c.directive;
    }

    Workload workload;
    workload.partitions.resize(static_cast<size_t>(partitions));
    for (int64_t g = 0; g < input.rows; ++g) {
        int p = static_cast<int>(g % partitions);
        InputEvent event;
        event.seq = g / partitions;
        event.timestamp = 1'600'000'000'000 + g * 7;
        int n = entryCount(rng);
        for (int i = 0; i < n; ++i) {
            AccessEntry entry;
            bool missing = unit(rng) < input.missingUserFraction;
            int user = userPick(rng);
            entry.cluster = "cluster-" + std::to_string(clusterPick(rng));
            if (!missing) {
                entry.user = "user-" + std::to_string(user);
            }
            event.entries.push_back(std::move(entry));
        }
        if (auto it = directives.find({p, event.seq}); it != directives.end()) {
            event.directive = it->second;
        }
        event.payload.resize(static_cast<size_t>(input.payloadBytes));
        for (size_t i = 0; i < event.payload.size(); ++i) {
            event.payload[i] = static_cast<char>('a' + (g + static_cast<int64_t>(i)) % 26);
        }
        workload.partitions[static_cast<size_t>(p)].push_back(std::move(event));
    }
    return workload;
}

NameTable sourceSchema() {
    return NameTable({"seq", "timestamp", "body", "payload"});
}

std::string encodeBody(const InputEvent& event) {
    std::string body;
    if (!event.directive.empty()) {
        body += "@@" + event.directive;
    }
    for (const auto& entry : event.entries) {
        if (!body.empty()) {
            body += ';';
        }
        if (!entry.user.empty()) {
            body += "u=" + entry.user + ",";
        }
        body += "c=" + entry.cluster;
    }
    return body;
}

Row toSourceRow(const InputEvent& event) {
    return Row{DataValue::int64(event.seq), DataValue::int64(event.timestamp), DataValue::string(encodeBody(event)),
               DataValue::string(event.payload)};
}

int reducerForKey(const std::string& user, const std::string& cluster, int reducerCount) {
    static const NameTable names({"user", "cluster"});
    static const std::vector<std::string> keys{"user", "cluster"};
    return hashPartition(names, Row{DataValue::string(user), DataValue::string(cluster)}, keys, reducerCount);
}

AccessOracle computeAccessOracle(const Workload& workload, int reducerCount) {
    AccessOracle oracle;
    oracle.shuffle.resize(workload.partitions.size());
    for (size_t p = 0; p < workload.partitions.size(); ++p) {
        for (const auto& event : workload.partitions[p]) {
            for (size_t i = 0; i < event.entries.size(); ++i) {
                const auto& entry = event.entries[i];
                if (entry.user.empty()) {
                    continue;
                }
                RowId id{static_cast<int>(p), event.seq, static_cast<int>(i)};
                auto& value = oracle.tally[{entry.user, entry.cluster}];
                value.tally += 1;
                value.lastAccess = std::max(value.lastAccess, event.timestamp);
                oracle.expectedRows.insert(id);
                oracle.shuffle[p].emplace_back(id, reducerForKey(entry.user, entry.cluster, reducerCount));
            }
        }
    }
    return oracle;
}

}// namespace streamshuffle
