#pragma once

#include <chrono>
#include <functional>
#include <thread>

#include "protocol/error.hpp"

namespace bprun {

struct RetryPolicy {
    int max_retries = 2;
    int backoff_base_ms = 200;
    bool zero_delay = false;  // deterministic-test mode

    // Delay between attempt n and n+1 (n is 0-based): base * 2^n.
    std::chrono::milliseconds backoff(int n) const {
        if (zero_delay) return std::chrono::milliseconds(0);
        return std::chrono::milliseconds(static_cast<long long>(backoff_base_ms) << n);
    }
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline void real_sleep(std::chrono::milliseconds d) {
    if (d.count() > 0) std::this_thread::sleep_for(d);
}

// Runs `op` up to max_retries + 1 times. Only transient EngineErrors are
// retried; anything else propagates immediately. `on_failure(attempt, info)`
// is called for every failed attempt (1-based). The last transient error is
// rethrown when attempts run out.
template <typename Op, typename OnFailure>
auto with_retry(Op&& op, const RetryPolicy& policy, OnFailure&& on_failure, const Sleeper& sleep = real_sleep)
    -> decltype(op()) {
    if (policy.max_retries < 0) throw ValidationError("max_retries must be >= 0");
    for (int attempt = 1;; ++attempt) {
        try {
            return op();
        } catch (const EngineError& e) {
            on_failure(attempt, e.info());
            if (!e.info().retryable() || attempt > policy.max_retries) throw;
            sleep(policy.backoff(attempt - 1));
        }
    }
}

}  // namespace bprun
