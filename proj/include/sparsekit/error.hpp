/**
 * Copyright 2026 The sparsekit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef SPARSEKIT_ERROR_HPP
#define SPARSEKIT_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace sparsekit {

enum class ErrorKind {
  kDimension,
  kUnsupportedLayer,
  kNumeric,
  kArgument,
  kIo,
  kFormat,       // malformed manifest / tensor file
  kByteCount,
  kDuplicateName,
  kUnknownKind,
  kStructural,
  kName,
  kConfig,
  kData,
  kGeneration,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Process exit code for an error kind (0 is reserved for success).
int exit_code(ErrorKind kind);

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

}  // namespace sparsekit

#endif  // SPARSEKIT_ERROR_HPP
