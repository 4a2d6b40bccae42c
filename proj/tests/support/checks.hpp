// Copyright 2026 The twinclip Authors
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

#include "doctest.h"
#include "support/oracles.hpp"

// Checks that `expr` raises twinclip::Error with the given code.
#define CHECK_ERROR_CODE(expr, expected)                                                \
  do {                                                                                  \
    auto caught_ = ::twinclip::testing::capture_error([&] { (void)(expr); });           \
    if (caught_) {                                                                      \
      CHECK_MESSAGE(caught_->code() == (expected), "raised ",                           \
                    ::twinclip::to_string(caught_->code()), ": ", caught_->detail());   \
    } else {                                                                            \
      FAIL_CHECK("expected ", ::twinclip::to_string(expected), " from " #expr);         \
    }                                                                                   \
  } while (false)
