#pragma once

#include <map>
#include <mutex>
#include <string>

namespace dotinv {

// Cost accounting for full-order linear solves. One "solve" is one
// right-hand-side column passed through a factorization of K(omega; p)
// or its transpose; factorizations themselves are not counted.
class SolveLedger {
public:
  SolveLedger() = default;
  // The mutex is per-instance state, not data: copies and moves transfer
  // the counts only.
  SolveLedger(const SolveLedger &other) {
    std::lock_guard<std::mutex> lock(other.mutex_);
    counts_ = other.counts_;
    total_ = other.total_;
  }
  SolveLedger &operator=(const SolveLedger &other) {
    if (this != &other) {
      std::scoped_lock lock(mutex_, other.mutex_);
      counts_ = other.counts_;
      total_ = other.total_;
    }
    return *this;
  }

  void charge(const std::string &context, long n) {
    std::lock_guard<std::mutex> lock(mutex_);
    counts_[context] += n;
    total_ += n;
  }

  long total() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return total_;
  }

  long count(const std::string &context) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = counts_.find(context);
    return (it == counts_.end()) ? 0 : it->second;
  }

  std::map<std::string, long> by_context() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return counts_;
  }

  // Solves excluding the reusable offline basis construction.
  long amortized() const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = counts_.find("offline");
    return total_ - ((it == counts_.end()) ? 0 : it->second);
  }

  void reset() {
    std::lock_guard<std::mutex> lock(mutex_);
    counts_.clear();
    total_ = 0;
  }

private:
  mutable std::mutex mutex_;
  std::map<std::string, long> counts_;
  long total_ = 0;
};

namespace context {
inline constexpr const char *function_eval = "function-eval";
inline constexpr const char *jacobian = "jacobian";
inline constexpr const char *estimate = "estimate";
inline constexpr const char *basis_update = "basis-update";
inline constexpr const char *offline = "offline";
inline constexpr const char *audit = "audit";
} // namespace context

} // namespace dotinv
