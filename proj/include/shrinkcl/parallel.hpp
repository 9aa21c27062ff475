#pragma once

#include <cstddef>
#include <functional>

namespace shrinkcl {

/// Worker-thread cap: hardware concurrency, overridable with the
/// SHRINKCL_THREADS environment variable (values < 1 are rejected).
int worker_threads();

/// Runs fn(i) for i in [0, n) on up to worker_threads() threads. Work
/// items must be independent and should write results into pre-sized
/// slots so the outcome does not depend on scheduling order.
void parallel_runs(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace shrinkcl
