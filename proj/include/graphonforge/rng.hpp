#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace graphonforge {

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based generator. Draw number c of stream s under seed k is a pure
// function of (k, s, c), so work can be split across threads in any way.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t sub = 0)
      : key_(mix64(mix64(seed) ^ mix64(stream * 0xd1342543de82ef95ULL + 1) ^
                   mix64(sub + 0x632be59bd9b4e019ULL))) {}

  std::uint64_t bits() { return mix64(key_ ^ mix64(counter_++ + 0x2545f4914f6cdd1dULL)); }

  // Uniform double in [0,1) built from the top 53 bits.
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t r;
    do {
      r = bits();
    } while (r >= limit);
    return r % n;
  }

  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Worker count: GRAPHONFORGE_THREADS if set to a positive integer, else the
// hardware concurrency.
inline unsigned thread_count() {
  if (const char* env = std::getenv("GRAPHONFORGE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<unsigned>(std::min<long>(v, 1024));
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Runs fn(i) for i in [0, n). Tasks are claimed dynamically; callers must make
// each task's result depend only on i and reduce in index order.
template <class F>
void parallel_for(std::size_t n, F&& fn) {
  const std::size_t workers = std::min<std::size_t>(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(body);
  body();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

struct Estimate {
  double value = 0.0;
  double sigma = 0.0;  // standard error; 0 for exact results
};

// Running sums for a sample mean and its standard error.
struct MeanAccumulator {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::uint64_t count = 0;

  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++count;
  }
  void merge(const MeanAccumulator& o) {
    sum += o.sum;
    sum_sq += o.sum_sq;
    count += o.count;
  }
  Estimate estimate() const {
    if (count == 0) return {};
    const double n = static_cast<double>(count);
    const double mean = sum / n;
    double var = (sum_sq / n - mean * mean);
    if (var < 0) var = 0;
    const double se = count > 1 ? std::sqrt(var * n / (n - 1) / n) : 0.0;
    return {mean, se};
  }
};

inline constexpr std::uint64_t kChunkSize = 4096;

// Monte Carlo mean of sample(stream) over `samples` draws. Draws are grouped
// in fixed chunks, each with its own stream, and merged in chunk order, so the
// result is identical for every thread count.
template <class Sampler>
Estimate monte_carlo(std::uint64_t samples, std::uint64_t seed, std::uint64_t stream,
                     Sampler&& sample) {
  const std::uint64_t chunks = (samples + kChunkSize - 1) / kChunkSize;
  std::vector<MeanAccumulator> parts(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    RandomStream rng(seed, stream, c);
    const std::uint64_t begin = c * kChunkSize;
    const std::uint64_t end = std::min(samples, begin + kChunkSize);
    MeanAccumulator acc;
    for (std::uint64_t i = begin; i < end; ++i) acc.add(sample(rng));
    parts[c] = acc;
  });
  MeanAccumulator total;
  for (const auto& p : parts) total.merge(p);
  return total.estimate();
}

}  // namespace graphonforge
