#pragma once

#include <cstddef>
#include <functional>

namespace mfeit {

/// Worker count: MFEIT_THREADS if set and positive, else hardware concurrency.
std::size_t thread_budget();

/// Runs body(i) for i in [0, count) on up to thread_budget() workers.
/// Iterations must be independent; the first exception thrown is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace mfeit
