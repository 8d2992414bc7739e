// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>

namespace exdn {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace exdn
