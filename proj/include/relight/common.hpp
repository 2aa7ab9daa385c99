// Copyright (c) 2026 the relight authors.
// The relight source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef RELIGHT_COMMON_HPP
#define RELIGHT_COMMON_HPP

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace relight {

// Malformed or truncated input files (PFM headers, manifests, light sets).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Inconsistent data passed between pipeline stages (shape mismatches,
// out-of-bounds windows, missing manifest entries).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values where the pipeline requires finite ones (NaN loss,
// singular systems outside the flagged-invalid path).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline std::atomic<int>& thread_override() {
  static std::atomic<int> n{0};
  return n;
}
}  // namespace detail

// 0 restores automatic selection (RELIGHT_THREADS env var, then hardware).
inline void set_thread_count(int n) { detail::thread_override() = n; }

inline int thread_count() {
  int n = detail::thread_override();
  if (n > 0) return n;
  if (const char* env = std::getenv("RELIGHT_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc ? static_cast<int>(hc) : 1;
}

// Static contiguous chunking; fn(i) must write disjoint state so the result
// is identical for any thread count.
template <class F>
void parallel_for(int begin, int end, F&& fn) {
  const int count = end - begin;
  if (count <= 0) return;
  int nt = std::min(thread_count(), count);
  if (nt <= 1) {
    for (int i = begin; i < end; ++i) fn(i);
    return;
  }
  const int chunk = (count + nt - 1) / nt;
  std::vector<std::thread> workers;
  workers.reserve(nt);
  for (int t = 0; t < nt; ++t) {
    const int lo = begin + t * chunk;
    const int hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back([lo, hi, &fn] {
      for (int i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& w : workers) w.join();
}

}  // namespace relight

#endif  // RELIGHT_COMMON_HPP
