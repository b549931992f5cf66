// Copyright 2026 The Resus Authors. All Rights Reserved.
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

#ifndef RESUS_ERROR_HPP_
#define RESUS_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace resus {

// Error categories; values double as process exit codes.
enum class ErrorCode {
  kInvariant = 1,     // violated precondition or internal invariant
  kMissingInput = 2,  // absent/unreadable file or empty required input
  kNumeric = 3,       // NaN/Inf or other numeric failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
  throw Error(code, msg);
}

inline void check(bool cond, ErrorCode code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

}  // namespace resus

#endif  // RESUS_ERROR_HPP_
