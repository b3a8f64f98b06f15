#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <random>
#include <thread>
#include <vector>

namespace pomc {

/// Independent random stream for replicate `stream` of a run seeded with
/// `seed`. Streams depend only on (seed, stream), so results do not depend
/// on how replicates are scheduled.
class ReplicateRng {
 public:
  ReplicateRng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Exp(rate) by inversion; rate > 0.
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  /// Index k with probability weights[k] / total.
  template <class Range>
  std::size_t categorical(const Range& weights, double total) {
    const double x = uniform() * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    std::size_t k = 0;
    for (double w : weights) {
      if (w > 0.0) {
        acc += w;
        last_positive = k;
        if (x < acc) return k;
      }
      ++k;
    }
    return last_positive;
  }

 private:
  std::mt19937_64 engine_;
};

/// Worker count from the POMC_DEFAULT_THREADS environment variable, or 1.
inline std::size_t default_thread_count() {
  if (const char* env = std::getenv("POMC_DEFAULT_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

/// Runs fn(k) for k in [0, n) on up to `threads` workers with a static
/// block partition. Rethrows the exception of the lowest failing block.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t k = 0; k < n; ++k) fn(k);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        const std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
        for (std::size_t k = lo; k < hi; ++k) fn(k);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Pairwise (cascade) summation in fixed order.
template <class Range>
double pairwise_sum(const Range& values) {
  const std::size_t n = std::size(values);
  auto rec = [&](auto&& self, std::size_t lo, std::size_t hi) -> double {
    if (hi - lo <= 8) {
      double s = 0.0;
      for (std::size_t k = lo; k < hi; ++k) s += values[k];
      return s;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    return self(self, lo, mid) + self(self, mid, hi);
  };
  return n == 0 ? 0.0 : rec(rec, 0, n);
}

}  // namespace pomc
