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
#include "sparsekit/error.hpp"

namespace sparsekit {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension error";
    case ErrorKind::kUnsupportedLayer: return "unsupported layer";
    case ErrorKind::kNumeric: return "numeric error";
    case ErrorKind::kArgument: return "argument error";
    case ErrorKind::kIo: return "i/o error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kByteCount: return "byte-count error";
    case ErrorKind::kDuplicateName: return "duplicate layer name";
    case ErrorKind::kUnknownKind: return "unknown layer kind";
    case ErrorKind::kStructural: return "structural error";
    case ErrorKind::kName: return "name error";
    case ErrorKind::kConfig: return "configuration error";
    case ErrorKind::kData: return "data error";
    case ErrorKind::kGeneration: return "generation error";
  }
  return "error";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kArgument:
    case ErrorKind::kName:
      return 2;
    case ErrorKind::kIo:
    case ErrorKind::kFormat:
    case ErrorKind::kByteCount:
    case ErrorKind::kDuplicateName:
    case ErrorKind::kUnknownKind:
    case ErrorKind::kData:
      return 3;
    case ErrorKind::kNumeric:
    case ErrorKind::kGeneration:
      return 4;
    case ErrorKind::kDimension:
    case ErrorKind::kUnsupportedLayer:
    case ErrorKind::kStructural:
      return 5;
  }
  return 1;
}

}  // namespace sparsekit
