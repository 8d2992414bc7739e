// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

TEST_SUITE("metrics") {}
