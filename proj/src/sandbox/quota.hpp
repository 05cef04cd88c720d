#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

namespace bprun {

struct QuotaSpec {
    double cpu_seconds = 30.0;
    std::uint64_t memory_bytes = 512ull * 1024 * 1024;
    double wall_clock_seconds = 120.0;
    std::uint64_t max_protocol_frames = 10'000;
    std::uint64_t max_stdout_bytes = 1024 * 1024;

    // Throws ValidationError unless every limit is positive.
    void validate() const;
};

enum class QuotaDimension { cpu, memory, wall_clock, frames };

std::string_view to_string(QuotaDimension dim);

struct QuotaUsage {
    double cpu_seconds = 0.0;
    std::uint64_t memory_bytes = 0;  // peak resident set size observed
    double wall_seconds = 0.0;
    std::uint64_t frames = 0;
};

nlohmann::json to_json(const QuotaSpec& spec);
nlohmann::json to_json(const QuotaUsage& usage);
// Missing keys keep their defaults.
QuotaSpec quota_spec_from_json(const nlohmann::json& doc);

}  // namespace bprun
