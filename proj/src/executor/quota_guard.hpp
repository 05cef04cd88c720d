#pragma once

#include <chrono>
#include <condition_variable>
#include <mutex>
#include <optional>
#include <thread>

#include "sandbox/quota.hpp"
#include "sandbox/sandbox.hpp"

namespace bprun {

// Samples CPU and memory of a sandbox's process tree and enforces the
// wall-clock deadline. On breach it kills the tree and remembers which limit
// tripped. Talks to the serve loop only through breached()/usage().
class QuotaGuard {
public:
    using Clock = std::chrono::steady_clock;

    QuotaGuard(SandboxProcess& process, QuotaSpec spec, std::chrono::milliseconds interval);
    ~QuotaGuard();

    QuotaGuard(const QuotaGuard&) = delete;
    QuotaGuard& operator=(const QuotaGuard&) = delete;

    void start();
    void stop();

    // Time spent waiting for a human does not count against the wall clock.
    void pause_wall();
    void resume_wall();

    // Records a breach detected elsewhere (frame budget) and kills the tree.
    void trip(QuotaDimension dim);

    std::optional<QuotaDimension> breached() const;
    QuotaUsage usage() const;

private:
    void loop();
    void sample_locked();
    double wall_seconds_locked(Clock::time_point now) const;

    SandboxProcess& process_;
    QuotaSpec spec_;
    std::chrono::milliseconds interval_;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    bool stop_ = false;
    std::thread thread_;
    Clock::time_point started_;
    Clock::duration paused_total_{0};
    std::optional<Clock::time_point> paused_since_;
    std::optional<QuotaDimension> breach_;
    QuotaUsage usage_;
};

}  // namespace bprun
