#include "providers/tool_registry.hpp"

#include <httplib.h>

#include "protocol/error.hpp"
#include "providers/schema.hpp"

namespace bprun {

void ToolRegistry::check_new(const ToolSpec& spec) const {
    if (!is_valid_tool_name(spec.name)) {
        throw ValidationError("tool name '" + spec.name + "' must be snake_case and at most 64 chars");
    }
    if (tools_.count(spec.name)) throw ValidationError("duplicate tool '" + spec.name + "'");
}

void ToolRegistry::register_builtin(ToolSpec spec, BuiltinTool fn) {
    check_new(spec);
    auto name = spec.name;
    tools_[name] = Entry{std::move(spec), {ToolBinding::Kind::builtin, name}, std::move(fn), 0};
}

void ToolRegistry::register_remote(ToolSpec spec, std::string endpoint, int timeout_ms) {
    check_new(spec);
    auto name = spec.name;
    tools_[name] = Entry{std::move(spec), {ToolBinding::Kind::remote, std::move(endpoint)}, {}, timeout_ms};
}

std::vector<ToolSpec> ToolRegistry::specs() const {
    std::vector<ToolSpec> out;
    for (const auto& [_, e] : tools_) out.push_back(e.spec);
    return out;
}

const ToolBinding& ToolRegistry::binding(const std::string& name) const {
    auto it = tools_.find(name);
    if (it == tools_.end()) throw ValidationError("unknown_tool: " + name);
    return it->second.binding;
}

nlohmann::json ToolRegistry::dispatch(const std::string& name, const nlohmann::json& args) const {
    auto it = tools_.find(name);
    if (it == tools_.end()) throw ValidationError("unknown_tool: " + name);
    const auto& entry = it->second;

    auto violations = validate_schema(entry.spec.parameters, args);
    if (!violations.empty()) {
        throw EngineError(classify_error({FailureSource::tool_arguments, "schema",
                                          "invalid arguments for " + name + ": " + describe(violations)}));
    }

    if (entry.binding.kind == ToolBinding::Kind::remote) return call_remote(entry, args);

    try {
        return {{"ok", true}, {"value", entry.fn(args)}};
    } catch (const ToolFailure& e) {
        return {{"ok", false}, {"error", e.what()}};
    }
}

nlohmann::json ToolRegistry::call_remote(const Entry& entry, const nlohmann::json& args) const {
    const auto& url = entry.binding.target;
    const auto scheme_end = url.find("://");
    const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    const std::string host = path_start == std::string::npos ? url : url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(host);
    const auto timeout = std::chrono::milliseconds(entry.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    const nlohmann::json body{{"name", entry.spec.name}, {"args", args}};
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res) {
        const auto err = res.error();
        const char* code = (err == httplib::Error::Read || err == httplib::Error::Write) ? "timeout"
                                                                                         : "connection_refused";
        throw EngineError(classify_error({FailureSource::provider, code,
                                          "remote tool " + entry.spec.name + ": " + httplib::to_string(err)}));
    }
    if (res->status >= 500) {
        throw EngineError(classify_error({FailureSource::provider, "http_5xx",
                                          "remote tool " + entry.spec.name + " returned HTTP " +
                                              std::to_string(res->status)}));
    }
    auto doc = nlohmann::json::parse(res->body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("ok") || !doc["ok"].is_boolean()) {
        throw EngineError(ErrorClass::fatal, "remote tool " + entry.spec.name + " returned a malformed result");
    }
    return doc;
}

}  // namespace bprun
