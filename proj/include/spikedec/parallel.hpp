#pragma once

#include <cstddef>
#include <functional>

namespace spikedec {

/// Worker count: hardware concurrency, capped by SPIKEDEC_THREADS when set.
std::size_t worker_count();

/// Runs body(i) for i in [0, n) on up to worker_count() threads. Callers write
/// results into per-index slots and reduce them afterwards in index order, so
/// the outcome does not depend on the number of workers.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace spikedec
