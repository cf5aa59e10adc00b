// Copyright 2026 The refusal-forge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>
#include <optional>

namespace rforge {

/// Worker count: `requested` if given, else $REFUSAL_FORGE_JOBS, else the
/// number of logical cores. Never less than 1.
unsigned resolve_jobs(std::optional<unsigned> requested = std::nullopt);

/// Runs fn(0) .. fn(n-1) on up to `jobs` threads. The first exception thrown
/// by any task is rethrown after all workers have stopped.
void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn);

} // namespace rforge
