#pragma once

#include <cstddef>
#include <functional>

namespace snco {

// Worker cap: SNCO_PARALLELISM env var when set, else hardware concurrency.
std::size_t parallelism();

// Runs fn(0..n-1) across up to parallelism() threads in contiguous chunks.
// Workers must not touch shared mutable state; callers own any reduction and
// must reduce in index order to keep results deterministic.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace snco
