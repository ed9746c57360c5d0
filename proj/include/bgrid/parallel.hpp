#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>

namespace bgrid {

// Process-wide worker cap for data-parallel loops. Defaults to the
// hardware concurrency; the BGRID_THREADS environment variable or the
// CLI --threads flag override it. Results are bit-identical for any
// value because parallel loops only ever write disjoint output ranges.
void set_thread_count(unsigned n);
unsigned thread_count();

// Runs fn(begin, end) over a static partition of [0, n).
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace bgrid
