#pragma once

#include <omp.h>

#include <cstddef>
#include <exception>
#include <mutex>
#include <optional>
#include <vector>

namespace vtagent {

// Runs work(i) for i in [0, n) on up to `threads` OpenMP threads and hands
// results to emit(i, result) strictly in index order, as soon as the prefix
// is complete. emit runs under a lock, so it may write to a single sink.
// An exception from work(i) stops further emits and is rethrown after the
// loop (lowest index wins).
template <typename Result, typename Work, typename Emit>
void for_each_ordered(std::size_t n, int threads, Work&& work, Emit&& emit) {
  std::vector<std::optional<Result>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::mutex mu;
  std::size_t next = 0;
  bool halted = false;

  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads > 0 ? threads : 1)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    std::optional<Result> result;
    std::exception_ptr err;
    try {
      result.emplace(work(idx));
    } catch (...) {
      err = std::current_exception();
    }
    std::lock_guard lock(mu);
    if (err) {
      errors[idx] = err;
      halted = true;
      continue;
    }
    slots[idx] = std::move(result);
    while (!halted && next < n && slots[next]) {
      try {
        emit(next, std::move(*slots[next]));
      } catch (...) {
        errors[next] = std::current_exception();
        halted = true;
        break;
      }
      slots[next].reset();
      ++next;
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace vtagent
