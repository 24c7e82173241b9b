#include "coarse_forge/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace cforge {

namespace {

std::atomic<std::size_t> g_override{0};

constexpr std::size_t kChunks = 64;

}  // namespace

std::size_t worker_count() {
  if (const std::size_t o = g_override.load()) return o;
  if (const char* env = std::getenv("COARSE_FORGE_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      // fall through to auto
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void set_worker_count(std::size_t n) { g_override.store(n); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  const std::size_t chunks = std::min(n, kChunks);
  const std::size_t workers = std::min(worker_count(), chunks);
  auto chunk_range = [&](std::size_t c, std::size_t& b, std::size_t& e) {
    b = n * c / chunks;
    e = n * (c + 1) / chunks;
  };
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) {
      std::size_t b, e;
      chunk_range(c, b, e);
      body(b, e);
    }
    return;
  }

  std::vector<std::exception_ptr> errors(chunks);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c; (c = next.fetch_add(1)) < chunks;) {
      std::size_t b, e;
      chunk_range(c, b, e);
      try {
        body(b, e);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace cforge
