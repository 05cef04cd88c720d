#include "sandbox/quota.hpp"

#include "protocol/error.hpp"

namespace bprun {

void QuotaSpec::validate() const {
    if (!(cpu_seconds > 0)) throw ValidationError("limits.cpu_seconds must be > 0");
    if (memory_bytes == 0) throw ValidationError("limits.memory_bytes must be > 0");
    if (!(wall_clock_seconds > 0)) throw ValidationError("limits.wall_clock_seconds must be > 0");
    if (max_protocol_frames == 0) throw ValidationError("limits.max_protocol_frames must be > 0");
    if (max_stdout_bytes == 0) throw ValidationError("limits.max_stdout_bytes must be > 0");
}

std::string_view to_string(QuotaDimension dim) {
    switch (dim) {
        case QuotaDimension::cpu: return "cpu";
        case QuotaDimension::memory: return "memory";
        case QuotaDimension::wall_clock: return "wall_clock";
        case QuotaDimension::frames: return "frames";
    }
    return "wall_clock";
}

nlohmann::json to_json(const QuotaSpec& spec) {
    return {{"cpu_seconds", spec.cpu_seconds},
            {"memory_bytes", spec.memory_bytes},
            {"wall_clock_seconds", spec.wall_clock_seconds},
            {"max_protocol_frames", spec.max_protocol_frames},
            {"max_stdout_bytes", spec.max_stdout_bytes}};
}

nlohmann::json to_json(const QuotaUsage& usage) {
    return {{"cpu_seconds", usage.cpu_seconds},
            {"memory_bytes", usage.memory_bytes},
            {"wall_seconds", usage.wall_seconds},
            {"frames", usage.frames}};
}

QuotaSpec quota_spec_from_json(const nlohmann::json& doc) {
    QuotaSpec spec;
    if (doc.is_null()) return spec;
    if (!doc.is_object()) throw ValidationError("limits must be an object");
    try {
        spec.cpu_seconds = doc.value("cpu_seconds", spec.cpu_seconds);
        spec.memory_bytes = doc.value("memory_bytes", spec.memory_bytes);
        spec.wall_clock_seconds = doc.value("wall_clock_seconds", spec.wall_clock_seconds);
        spec.max_protocol_frames = doc.value("max_protocol_frames", spec.max_protocol_frames);
        spec.max_stdout_bytes = doc.value("max_stdout_bytes", spec.max_stdout_bytes);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("limits: ") + e.what());
    }
    spec.validate();
    return spec;
}

}  // namespace bprun
