// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace exdn {

/// Number of workers used when a caller passes threads <= 0.
int default_thread_count();

/// Runs fn(begin, end) over a blocked partition of [0, n) on a persistent
/// pool. Blocks are fixed-size so the work decomposition is identical for
/// every worker count; fn must write only to per-index outputs (or otherwise
/// be safe under any block-to-thread assignment).
void parallel_for(std::size_t n, std::size_t block,
                  const std::function<void(std::size_t, std::size_t)>& fn, int threads);

}  // namespace exdn
