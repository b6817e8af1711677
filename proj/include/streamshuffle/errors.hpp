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

#ifndef STREAMSHUFFLE_ERRORS_HPP_
#define STREAMSHUFFLE_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace streamshuffle {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

#define STREAMSHUFFLE_DEFINE_ERROR(Name)                                                                                     \
    class Name : public Error {                                                                                              \
      public:                                                                                                                \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {}                                                 \
    }

/// Transport or storage corruption detected while decoding bytes.
STREAMSHUFFLE_DEFINE_ERROR(MalformedEncoding);
STREAMSHUFFLE_DEFINE_ERROR(MissingKeyColumn);
STREAMSHUFFLE_DEFINE_ERROR(TableNotFound);
STREAMSHUFFLE_DEFINE_ERROR(SchemaMismatch);
/// A reader asked for rows that were already trimmed. In this system that is an exactly-once violation.
STREAMSHUFFLE_DEFINE_ERROR(TrimmedRange);
STREAMSHUFFLE_DEFINE_ERROR(InvalidToken);
/// Transient input failure; the caller retries on its next iteration.
STREAMSHUFFLE_DEFINE_ERROR(SourceUnavailable);
/// Transient state-store failure; the caller retries on its next iteration.
STREAMSHUFFLE_DEFINE_ERROR(StateUnavailable);
STREAMSHUFFLE_DEFINE_ERROR(TransactionClosed);
STREAMSHUFFLE_DEFINE_ERROR(JournalDisabled);
STREAMSHUFFLE_DEFINE_ERROR(ConfigError);
/// Virtual time kept advancing without protocol progress.
STREAMSHUFFLE_DEFINE_ERROR(Deadlock);

#undef STREAMSHUFFLE_DEFINE_ERROR

}// namespace streamshuffle

#endif// STREAMSHUFFLE_ERRORS_HPP_
