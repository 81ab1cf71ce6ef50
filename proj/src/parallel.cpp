#include "ergolab/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ergolab {

std::size_t chunk_count(std::size_t items, std::size_t chunk_size) {
  return chunk_size == 0 ? 0 : (items + chunk_size - 1) / chunk_size;
}

unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

void parallel_chunks(std::size_t items, std::size_t chunk_size, unsigned threads,
                     const std::function<void(const ChunkRange&)>& body) {
  const std::size_t chunks = chunk_count(items, chunk_size);
  auto range = [&](std::size_t c) {
    return ChunkRange{c, c * chunk_size, std::min(items, (c + 1) * chunk_size)};
  };
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(resolve_threads(threads), chunks));
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) body(range(c));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      std::size_t c = next.fetch_add(1);
      if (c >= chunks) return;
      try {
        body(range(c));
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = chunks;
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace ergolab
