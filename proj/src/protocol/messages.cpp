#include "protocol/messages.hpp"

#include "protocol/error.hpp"

namespace bprun {

namespace {

const nlohmann::json& require(const nlohmann::json& doc, const char* key, const char* where) {
    if (!doc.is_object()) throw ValidationError(std::string(where) + " must be an object");
    auto it = doc.find(key);
    if (it == doc.end()) throw ValidationError(std::string(where) + "." + key + " is required");
    return *it;
}

std::string require_string(const nlohmann::json& doc, const char* key, const char* where) {
    const auto& v = require(doc, key, where);
    if (!v.is_string()) throw ValidationError(std::string(where) + "." + key + " must be a string");
    return v.get<std::string>();
}

std::uint64_t require_count(const nlohmann::json& doc, const char* key, const char* where) {
    const auto& v = require(doc, key, where);
    if (!v.is_number_unsigned()) {
        throw ValidationError(std::string(where) + "." + key + " must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

}  // namespace

bool is_valid_role(std::string_view role) {
    return role == "system" || role == "user" || role == "assistant" || role == "tool";
}

bool is_valid_tool_name(std::string_view name) {
    if (name.empty() || name.size() > 64) return false;
    if (!(name.front() >= 'a' && name.front() <= 'z')) return false;
    for (char c : name) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
        if (!ok) return false;
    }
    return true;
}

std::string_view to_string(FinishReason reason) {
    switch (reason) {
        case FinishReason::stop: return "stop";
        case FinishReason::tool_call: return "tool_call";
        case FinishReason::length: return "length";
    }
    return "stop";
}

nlohmann::json to_json(const ChatMessage& m) {
    return {{"role", m.role}, {"content", m.content}};
}

nlohmann::json to_json(const ToolSpec& spec) {
    return {{"name", spec.name}, {"description", spec.description}, {"parameters", spec.parameters}};
}

nlohmann::json to_json(const ToolCall& call) {
    return {{"name", call.name}, {"arguments", call.arguments}};
}

nlohmann::json to_json(const LlmRequest& request) {
    nlohmann::json doc{{"model", request.model},
                       {"temperature", request.temperature},
                       {"max_tokens", request.max_tokens}};
    doc["messages"] = nlohmann::json::array();
    for (const auto& m : request.messages) doc["messages"].push_back(to_json(m));
    if (!request.tools.empty()) {
        doc["tools"] = nlohmann::json::array();
        for (const auto& t : request.tools) doc["tools"].push_back(to_json(t));
    }
    return doc;
}

nlohmann::json to_json(const LlmResponse& response) {
    nlohmann::json doc{
        {"message", to_json(response.message)},
        {"usage",
         {{"prompt_tokens", response.usage.prompt_tokens},
          {"completion_tokens", response.usage.completion_tokens}}},
        {"finish_reason", to_string(response.finish_reason)},
    };
    if (!response.tool_calls.empty()) {
        doc["tool_calls"] = nlohmann::json::array();
        for (const auto& c : response.tool_calls) doc["tool_calls"].push_back(to_json(c));
    }
    return doc;
}

ChatMessage chat_message_from_json(const nlohmann::json& doc) {
    ChatMessage m{require_string(doc, "role", "message"), require_string(doc, "content", "message")};
    if (!is_valid_role(m.role)) throw ValidationError("message.role '" + m.role + "' is not allowed");
    return m;
}

ToolSpec tool_spec_from_json(const nlohmann::json& doc) {
    ToolSpec spec;
    spec.name = require_string(doc, "name", "tool");
    if (!is_valid_tool_name(spec.name)) {
        throw ValidationError("tool name '" + spec.name + "' must be snake_case and at most 64 chars");
    }
    if (auto it = doc.find("description"); it != doc.end() && it->is_string()) {
        spec.description = it->get<std::string>();
    }
    if (auto it = doc.find("parameters"); it != doc.end()) {
        if (!it->is_object()) throw ValidationError("tool.parameters must be an object schema");
        spec.parameters = *it;
    } else {
        spec.parameters = {{"type", "object"}, {"properties", nlohmann::json::object()}};
    }
    return spec;
}

ToolCall tool_call_from_json(const nlohmann::json& doc) {
    ToolCall call;
    call.name = require_string(doc, "name", "tool_call");
    if (auto it = doc.find("arguments"); it != doc.end()) {
        if (!it->is_object()) throw ValidationError("tool_call.arguments must be an object");
        call.arguments = *it;
    }
    return call;
}

LlmRequest llm_request_from_json(const nlohmann::json& doc) {
    LlmRequest req;
    if (!doc.is_object()) throw ValidationError("llm request must be an object");
    if (auto it = doc.find("model"); it != doc.end()) {
        if (!it->is_string()) throw ValidationError("request.model must be a string");
        req.model = it->get<std::string>();
    }
    const auto& messages = require(doc, "messages", "request");
    if (!messages.is_array() || messages.empty()) {
        throw ValidationError("request.messages must be a non-empty array");
    }
    for (const auto& m : messages) req.messages.push_back(chat_message_from_json(m));
    if (auto it = doc.find("tools"); it != doc.end() && !it->is_null()) {
        if (!it->is_array()) throw ValidationError("request.tools must be an array");
        for (const auto& t : *it) req.tools.push_back(tool_spec_from_json(t));
    }
    if (auto it = doc.find("temperature"); it != doc.end()) {
        if (!it->is_number() || it->get<double>() < 0.0) {
            throw ValidationError("request.temperature must be a number >= 0");
        }
        req.temperature = it->get<double>();
    }
    if (auto it = doc.find("max_tokens"); it != doc.end()) {
        if (!it->is_number_integer() || it->get<long long>() <= 0) {
            throw ValidationError("request.max_tokens must be a positive integer");
        }
        req.max_tokens = it->get<int>();
    }
    return req;
}

LlmResponse llm_response_from_json(const nlohmann::json& doc) {
    LlmResponse resp;
    resp.message = chat_message_from_json(require(doc, "message", "response"));
    if (resp.message.role != "assistant") throw ValidationError("response.message.role must be assistant");
    if (auto it = doc.find("tool_calls"); it != doc.end() && !it->is_null()) {
        if (!it->is_array()) throw ValidationError("response.tool_calls must be an array");
        for (const auto& c : *it) resp.tool_calls.push_back(tool_call_from_json(c));
    }
    if (auto it = doc.find("usage"); it != doc.end()) {
        resp.usage.prompt_tokens = require_count(*it, "prompt_tokens", "usage");
        resp.usage.completion_tokens = require_count(*it, "completion_tokens", "usage");
    }
    std::string reason = resp.tool_calls.empty() ? "stop" : "tool_call";
    if (auto it = doc.find("finish_reason"); it != doc.end()) {
        if (!it->is_string()) throw ValidationError("response.finish_reason must be a string");
        reason = it->get<std::string>();
    }
    if (reason == "stop") resp.finish_reason = FinishReason::stop;
    else if (reason == "tool_call") resp.finish_reason = FinishReason::tool_call;
    else if (reason == "length") resp.finish_reason = FinishReason::length;
    else throw ValidationError("response.finish_reason '" + reason + "' is not allowed");
    return resp;
}

}  // namespace bprun
