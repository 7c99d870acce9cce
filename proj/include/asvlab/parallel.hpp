// Deterministic fan-out over independent work items.
#pragma once

#include <cstddef>
#include <functional>

namespace asvlab {

/// Worker count: ASVLAB_THREADS when set (>= 1), else hardware concurrency.
std::size_t worker_count();

/// Calls fn(i) for i in [0, n). Items are assigned in contiguous blocks;
/// callers write results into per-item slots, so output never depends on
/// scheduling. The first exception thrown by any item is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t max_workers = 0);

}  // namespace asvlab
