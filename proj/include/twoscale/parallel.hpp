#pragma once

#include <cstdint>
#include <functional>

namespace twoscale {

// Worker count: hardware concurrency capped by GAMMA_MAX_WORKERS when set.
int worker_count();

// Runs fn(i) for i in [0, n) on up to worker_count() threads. Exceptions are rethrown on the caller.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

}  // namespace twoscale
