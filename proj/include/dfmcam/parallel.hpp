#pragma once

#include <cstddef>
#include <functional>

namespace dfmcam {

/// Process-wide cap on worker threads. 0 selects hardware concurrency.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Runs body(begin, end) over contiguous chunks of [0, n). Chunk boundaries
/// depend only on n and the grain, never on the thread count, so any
/// per-chunk reduction is reproducible across thread settings.
void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& body);

/// Convenience form: one call per index.
void parallel_for_each(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace dfmcam
