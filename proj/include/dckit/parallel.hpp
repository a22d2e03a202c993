#pragma once

#include <cstddef>
#include <functional>

namespace dckit {

// Worker count: min(hardware_concurrency, DCKIT_THREADS), at least 1.
std::size_t thread_cap();

// Runs body(begin, end) over a partition of [0, n). Each range is disjoint,
// so results are identical to the sequential order as long as the body only
// writes elements of its own range. Runs inline for small n or cap 1.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

} // namespace dckit
