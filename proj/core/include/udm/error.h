// Copyright 2026 The udmetric Authors. All Rights Reserved.
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

#ifndef UDM_ERROR_H_
#define UDM_ERROR_H_

#include <stdexcept>
#include <string>

namespace udm {

// Base of all errors raised by the library. Each subclass maps to one
// failure family so that front ends can translate them into exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values (dimensions, fractions, margins).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Arguments that violate an operation's preconditions.
class InputError : public Error {
 public:
  using Error::Error;
};

// Non-finite values encountered during training or optimization.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed files and failed reads/writes.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace udm

#endif  // UDM_ERROR_H_
