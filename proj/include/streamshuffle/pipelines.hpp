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

#ifndef STREAMSHUFFLE_PIPELINES_HPP_
#define STREAMSHUFFLE_PIPELINES_HPP_

#include <streamshuffle/scenario.hpp>
#include <streamshuffle/transport.hpp>
#include <streamshuffle/user_api.hpp>
#include <streamshuffle/workload.hpp>

#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace streamshuffle {

/// A directive found in a row by user code. row.entry is -1: directives apply to whole input rows.
struct ControlSignal {
    WorkerKind kind = WorkerKind::Mapper;
    int workerIndex = 0;
    std::string directive;
    RowId row;
};

/// Returns true when the directive should take effect, which the harness allows once per row.
using ControlHook = std::function<bool(const ControlSignal&)>;

/// Thrown by user code to simulate a crash in the middle of Map or Reduce.
class InjectedCrash : public std::runtime_error {
  public:
    explicit InjectedCrash(const std::string& what) : std::runtime_error("InjectedCrash: " + what) {}
};

using ShuffleOracle = std::vector<std::vector<std::pair<RowId, int>>>;

struct Pipeline {
    std::string id;
    std::function<void(StateStore&)> createTables;
    MapperFactory mapperFactory;
    ReducerFactory reducerFactory;
    /// Rows whose effect must be applied exactly once.
    std::function<std::set<RowId>(const Workload&)> expectedRows;
    /// Expected shuffle numbering per mapper, with the reducer of every row.
    std::function<ShuffleOracle(const Workload&, int reducerCount)> shuffleOracle;
};

/// Known ids: "access-tally", "pass-through". Throws ConfigError for others.
Pipeline makePipeline(const ProcessorSpec& spec, ControlHook hook);
std::vector<std::string> pipelineIds();

/// Effects table layout: source_partition, source_seq, entry_index (key) and count.
TableSchema effectsTableSchema();
/// Tally table layout: user, cluster (key), tally and last_access.
TableSchema tallyTableSchema();

}// namespace streamshuffle

#endif// STREAMSHUFFLE_PIPELINES_HPP_
