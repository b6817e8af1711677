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

#ifndef STREAMSHUFFLE_USER_API_HPP_
#define STREAMSHUFFLE_USER_API_HPP_

#include <streamshuffle/row.hpp>
#include <streamshuffle/state_store.hpp>

#include <json.hpp>

#include <functional>
#include <memory>
#include <string>

namespace streamshuffle {

/// System-generated description of one mapper within a streaming processor.
struct MapperSpec {
    std::string processorGuid;
    std::string stateTable;
    int mapperIndex = 0;
    std::string mapperGuid;
    int reducerCount = 1;
};

struct ReducerSpec {
    std::string processorGuid;
    std::string stateTable;
    int reducerIndex = 0;
    std::string reducerGuid;
    int mapperCount = 1;
};

/**
 * @brief User map function. Receives one input batch and returns the mapped rows (any schema,
 * any count, including zero) with a reducer index for each. Must be deterministic: a re-read
 * batch has to map to exactly the same rows in the same order.
 */
class IMapper {
  public:
    virtual ~IMapper() = default;
    virtual PartitionedRowset map(const Rowset& rows) = 0;
};

/**
 * @brief User reduce function. May open a transaction, buffer writes into it and return it
 * uncommitted; the runtime adds its own meta-state to that transaction and commits both
 * together. Returning nullptr lets the runtime open the transaction itself.
 */
class IReducer {
  public:
    virtual ~IReducer() = default;
    virtual TransactionPtr reduce(const Rowset& rows) = 0;
};

using IMapperPtr = std::unique_ptr<IMapper>;
using IReducerPtr = std::unique_ptr<IReducer>;

using MapperFactory =
    std::function<IMapperPtr(const nlohmann::json& config, StateStore& client, const NameTable& schema, const MapperSpec& spec)>;
using ReducerFactory = std::function<IReducerPtr(const nlohmann::json& config, StateStore& client, const ReducerSpec& spec)>;

}// namespace streamshuffle

#endif// STREAMSHUFFLE_USER_API_HPP_
