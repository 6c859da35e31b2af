// Copyright (c) 2026 The dunet Authors
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

#ifndef DUNET_ERRORS_HPP_
#define DUNET_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace dunet {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or extent mismatch between operands.
struct DimensionError : Error {
  using Error::Error;
};

// Row/column index outside the valid range.
struct IndexError : Error {
  using Error::Error;
};

// Bad argument value (counts, ranges, missing labels, ...).
struct ArgumentError : Error {
  using Error::Error;
};

// An API precondition was violated (non-scalar loss, non-monotone profile).
struct ContractError : Error {
  using Error::Error;
};

// A neighborhood came out empty.
struct DegenerateNeighborhoodError : Error {
  using Error::Error;
};

// Batch statistics requested on fewer than two rows.
struct InsufficientBatchError : Error {
  using Error::Error;
};

// Explicit diffusion step size violates the stability bound.
struct StabilityError : Error {
  using Error::Error;
};

// Malformed file contents; message carries the line number.
struct ParseError : Error {
  using Error::Error;
};

// Invalid layer or model specification.
struct SpecError : Error {
  using Error::Error;
};

// Unknown registry or layer path.
struct LookupError : Error {
  using Error::Error;
};

// Non-finite values encountered during training.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace dunet

#endif  // DUNET_ERRORS_HPP_
