#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace bprun {

struct SchemaViolation {
    std::string path;  // "order_id", "items[1].item_id"; empty for the root
    std::string message;
};

// Validates `value` against the subset of JSON Schema used by tool specs:
// type, properties, required, enum, items, additionalProperties (bool),
// minimum/maximum, minItems. Returns every violation found.
std::vector<SchemaViolation> validate_schema(const nlohmann::json& schema, const nlohmann::json& value);

std::string describe(const std::vector<SchemaViolation>& violations);

}  // namespace bprun
