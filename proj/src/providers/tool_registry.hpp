#pragma once

#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "protocol/messages.hpp"

namespace bprun {

// Thrown by builtin tool functions for domain-level refusals ("order is not
// delivered"). These become {"ok":false,"error":...} tool results, not engine
// errors.
class ToolFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using BuiltinTool = std::function<nlohmann::json(const nlohmann::json& args)>;

struct ToolBinding {
    enum class Kind { builtin, remote };
    Kind kind = Kind::builtin;
    std::string target;  // builtin function id or remote endpoint URL
};

// MCP-shaped registry: spec + schema + dispatch. Arguments are validated before
// any binding sees them.
class ToolRegistry {
public:
    // Throws ValidationError on a bad name or a duplicate registration.
    void register_builtin(ToolSpec spec, BuiltinTool fn);
    void register_remote(ToolSpec spec, std::string endpoint, int timeout_ms = 5000);

    // Result document: {"ok":true,"value":...} or {"ok":false,"error":"..."}.
    // Unknown tools and schema mismatches throw ValidationError; remote
    // timeouts throw a transient EngineError.
    nlohmann::json dispatch(const std::string& name, const nlohmann::json& args) const;

    bool contains(const std::string& name) const { return tools_.count(name) != 0; }
    std::vector<ToolSpec> specs() const;
    const ToolBinding& binding(const std::string& name) const;

private:
    struct Entry {
        ToolSpec spec;
        ToolBinding binding;
        BuiltinTool fn;
        int timeout_ms = 5000;
    };

    void check_new(const ToolSpec& spec) const;
    nlohmann::json call_remote(const Entry& entry, const nlohmann::json& args) const;

    std::map<std::string, Entry> tools_;
};

}  // namespace bprun
