#pragma once

#include <cstddef>
#include <functional>

namespace thz {

// Worker count: THZDIFF_THREADS if set and positive, otherwise hardware concurrency.
std::size_t worker_count();

// Runs fn(i) for i in [0, n). Items are statically partitioned; callers write results into
// per-index slots and reduce in index order so results never depend on the worker count.
// The first exception thrown by any item is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace thz
