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

#include <stdexcept>
#include <string>

namespace rforge {

/// Base of every error thrown by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Violated mathematical precondition (shape, rank, degenerate input).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Malformed on-disk artifact: NPY header, manifest, sidecar JSON.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Filesystem failure. The message always carries the offending path.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace rforge
