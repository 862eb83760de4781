#pragma once

#include <cstddef>
#include <functional>

namespace nlrspirit {

/// Worker count used by parallel_for. Defaults to $NLRSPIRIT_THREADS, else the
/// hardware concurrency. Values below 1 are clamped to 1.
std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Runs body(i) for i in [0, n). Indices are split into contiguous chunks, one per
/// worker; body must only write state owned by index i, which keeps results
/// independent of the worker count. The first exception thrown is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace nlrspirit
