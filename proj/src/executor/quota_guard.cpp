#include "executor/quota_guard.hpp"

#include <algorithm>

#include "sandbox/proc_stats.hpp"

namespace bprun {

QuotaGuard::QuotaGuard(SandboxProcess& process, QuotaSpec spec, std::chrono::milliseconds interval)
    : process_(process), spec_(spec), interval_(interval) {}

QuotaGuard::~QuotaGuard() { stop(); }

void QuotaGuard::start() {
    std::lock_guard lock(mu_);
    started_ = Clock::now();
    thread_ = std::thread([this] { loop(); });
}

void QuotaGuard::stop() {
    {
        std::lock_guard lock(mu_);
        if (stop_) return;
        stop_ = true;
        if (!started_.time_since_epoch().count()) started_ = Clock::now();
        usage_.wall_seconds = wall_seconds_locked(Clock::now());
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
}

void QuotaGuard::pause_wall() {
    std::lock_guard lock(mu_);
    if (!paused_since_) paused_since_ = Clock::now();
}

void QuotaGuard::resume_wall() {
    std::lock_guard lock(mu_);
    if (paused_since_) {
        paused_total_ += Clock::now() - *paused_since_;
        paused_since_.reset();
    }
    cv_.notify_all();
}

void QuotaGuard::trip(QuotaDimension dim) {
    {
        std::lock_guard lock(mu_);
        if (!breach_) breach_ = dim;
    }
    process_.kill_tree();
}

std::optional<QuotaDimension> QuotaGuard::breached() const {
    std::lock_guard lock(mu_);
    return breach_;
}

QuotaUsage QuotaGuard::usage() const {
    std::lock_guard lock(mu_);
    return usage_;
}

double QuotaGuard::wall_seconds_locked(Clock::time_point now) const {
    auto paused = paused_total_;
    if (paused_since_) paused += now - *paused_since_;
    return std::chrono::duration<double>(now - started_ - paused).count();
}

void QuotaGuard::sample_locked() {
    const auto s = sample_sandbox(process_.pid(), process_.pgid(), process_.owned_uid());
    usage_.cpu_seconds = std::max(usage_.cpu_seconds, s.cpu_seconds);
    usage_.memory_bytes = std::max(usage_.memory_bytes, s.rss_bytes);
    usage_.wall_seconds = wall_seconds_locked(Clock::now());
}

void QuotaGuard::loop() {
    std::unique_lock lock(mu_);
    while (!stop_) {
        sample_locked();
        if (!breach_) {
            std::optional<QuotaDimension> hit;
            if (usage_.memory_bytes > spec_.memory_bytes) hit = QuotaDimension::memory;
            else if (usage_.cpu_seconds > spec_.cpu_seconds) hit = QuotaDimension::cpu;
            else if (usage_.wall_seconds >= spec_.wall_clock_seconds) hit = QuotaDimension::wall_clock;
            if (hit) {
                breach_ = hit;
                lock.unlock();
                process_.kill_tree();
                lock.lock();
                continue;
            }
        }
        auto wait = interval_;
        if (!breach_ && !paused_since_) {
            const double left = spec_.wall_clock_seconds - usage_.wall_seconds;
            const auto left_ms = std::chrono::milliseconds(static_cast<long long>(left * 1000.0) + 1);
            wait = std::max(std::chrono::milliseconds(1), std::min(wait, left_ms));
        }
        cv_.wait_for(lock, wait, [this] { return stop_; });
    }
}

}  // namespace bprun
