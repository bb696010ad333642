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
#ifndef SPARSEKIT_PARALLEL_HPP
#define SPARSEKIT_PARALLEL_HPP

#include <cstddef>
#include <exception>
#include <functional>

namespace sparsekit {

/// Worker count: SPARSEKIT_THREADS if set and positive, else hardware concurrency.
std::size_t worker_threads();

/// Runs fn(i) for i in [0, n). Work items must write disjoint outputs; callers
/// that reduce do so afterwards in index order, so results never depend on
/// the thread count. The first exception thrown by any item is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace sparsekit

#endif  // SPARSEKIT_PARALLEL_HPP
