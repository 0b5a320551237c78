#pragma once

#include <cstddef>
#include <functional>

namespace cytofuse {

// Resolves a requested worker count; 0 means one per hardware thread.
unsigned resolve_threads(unsigned requested);

// Reads CYTO_FUSE_THREADS (0 or unset = auto). Non-numeric values are ignored.
unsigned threads_from_env();

// Runs body(i) for i in [0, count) on up to `threads` workers. Work items must
// be independent; results are therefore identical for every thread count.
// If any items throw, the exception from the lowest failing index is rethrown
// after all workers have joined.
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace cytofuse
