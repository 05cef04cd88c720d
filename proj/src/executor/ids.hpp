#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <random>
#include <string>

namespace bprun {

// True when AGENT_DETERMINISTIC=1 is set in the environment.
bool deterministic_mode_from_env();

// ULID-style identifiers: 10 Crockford base32 chars of millisecond time then
// 16 chars of randomness, so ids sort by creation time. In deterministic mode
// a seeded counter replaces the clock and the random part is zero.
class IdGenerator {
public:
    explicit IdGenerator(bool deterministic, std::uint64_t seed = 0);

    std::string next();
    bool deterministic() const { return deterministic_; }

private:
    bool deterministic_;
    std::atomic<std::uint64_t> counter_;
    std::mutex mu_;
    std::mt19937_64 rng_;
    std::uint64_t last_ms_ = 0;
};

// RFC 3339 UTC timestamp with millisecond precision.
std::string utc_timestamp();

}  // namespace bprun
