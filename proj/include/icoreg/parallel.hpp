#pragma once

#include <cstddef>
#include <functional>

namespace icoreg {

// Thread count: explicit override, else ICOREG_THREADS, else hardware.
std::size_t thread_count();
void set_thread_count(std::size_t n);  // 0 restores the default lookup

// Runs body(i) for i in [0, n) over static contiguous chunks. Results must be
// written to per-index slots so scheduling never affects output. The first
// exception thrown by any worker is rethrown on the calling thread. Calls made
// from inside a worker run serially on that worker.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace icoreg
