#pragma once
// Deterministic chunked parallel loop.  Work is split into fixed chunks that
// depend only on the item count, so per-chunk results can be merged in chunk
// order and outputs do not depend on the thread count.

#include <cstddef>
#include <functional>

namespace ergolab {

struct ChunkRange {
  std::size_t index;
  std::size_t begin;
  std::size_t end;
};

std::size_t chunk_count(std::size_t items, std::size_t chunk_size);

// Calls body once per chunk, possibly concurrently.  threads == 0 uses the
// hardware concurrency.  The first exception thrown by any chunk is rethrown.
void parallel_chunks(std::size_t items, std::size_t chunk_size, unsigned threads,
                     const std::function<void(const ChunkRange&)>& body);

unsigned resolve_threads(unsigned requested);

}  // namespace ergolab
