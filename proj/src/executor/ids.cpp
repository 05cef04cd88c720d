#include "executor/ids.hpp"

#include <chrono>
#include <cstdlib>
#include <cstring>
#include <ctime>

namespace bprun {

namespace {

constexpr char kCrockford[] = "0123456789ABCDEFGHJKMNPQRSTVWXYZ";

void append_base32(std::string& out, std::uint64_t value, int chars) {
    std::string tmp(static_cast<std::size_t>(chars), '0');
    for (int i = chars - 1; i >= 0; --i) {
        tmp[static_cast<std::size_t>(i)] = kCrockford[value & 31];
        value >>= 5;
    }
    out += tmp;
}

}  // namespace

bool deterministic_mode_from_env() {
    const char* v = std::getenv("AGENT_DETERMINISTIC");
    return v != nullptr && std::strcmp(v, "1") == 0;
}

IdGenerator::IdGenerator(bool deterministic, std::uint64_t seed)
    : deterministic_(deterministic), counter_(seed), rng_(deterministic ? seed : std::random_device{}()) {}

std::string IdGenerator::next() {
    std::string id;
    id.reserve(26);
    if (deterministic_) {
        append_base32(id, ++counter_, 10);
        append_base32(id, 0, 16);
        return id;
    }
    std::lock_guard lock(mu_);
    auto ms = static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                             std::chrono::system_clock::now().time_since_epoch())
                                             .count());
    // Keep ids strictly ordered when several are minted within one millisecond.
    if (ms <= last_ms_) ms = last_ms_ + 1;
    last_ms_ = ms;
    append_base32(id, ms, 10);
    append_base32(id, rng_(), 13);
    append_base32(id, rng_() & 0x7fff, 3);
    return id;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    ::gmtime_r(&secs, &tm);
    char buf[40];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof(out), "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

}  // namespace bprun
