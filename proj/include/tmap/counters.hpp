#pragma once

#include <atomic>
#include <cstdint>

namespace tmap {

//! Global counter of multivariate basis function evaluations.
//! This is the hardware-insensitive cost metric reported per assimilation
//! step; every component evaluation adds its term count in bulk.
class BasisCounter {
public:
  static BasisCounter& instance() {
    static BasisCounter c;
    return c;
  }

  void add(std::uint64_t n) { count_.fetch_add(n, std::memory_order_relaxed); }
  std::uint64_t value() const { return count_.load(std::memory_order_relaxed); }
  void reset() { count_.store(0, std::memory_order_relaxed); }

private:
  std::atomic<std::uint64_t> count_{0};
};

//! Counter of forward-model calls; the online phase must never touch it.
class ModelCallCounter {
public:
  static ModelCallCounter& instance() {
    static ModelCallCounter c;
    return c;
  }

  void add(std::uint64_t n) { count_.fetch_add(n, std::memory_order_relaxed); }
  std::uint64_t value() const { return count_.load(std::memory_order_relaxed); }
  void reset() { count_.store(0, std::memory_order_relaxed); }

private:
  std::atomic<std::uint64_t> count_{0};
};

} // namespace tmap
