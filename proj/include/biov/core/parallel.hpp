#pragma once

#include <cstddef>
#include <functional>

namespace biov {

/// Worker-pool size: BIOV_THREADS if set to a positive integer, otherwise the
/// machine's hardware concurrency (at least 1).
std::size_t worker_count();

/// Runs body(i) for i in [0, n). Work is split into contiguous index ranges;
/// callers write results into per-index slots, so output never depends on the
/// number of workers. The first exception thrown by any worker is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace biov
