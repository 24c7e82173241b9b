#pragma once

#include <cstddef>
#include <functional>

namespace cforge {

/// Worker count: COARSE_FORGE_THREADS when set and positive, otherwise the
/// hardware concurrency (0 or unset means auto).
std::size_t worker_count();

/// Overrides the environment for the current process (0 restores auto).
void set_worker_count(std::size_t n);

/// Runs body(begin, end) over contiguous chunks of [0, n). Chunk boundaries
/// depend only on n, so per-index results are independent of the worker
/// count. The first exception thrown by any chunk (lowest chunk index) is
/// rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace cforge
