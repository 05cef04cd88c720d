#include <httplib.h>

#include "providers/llm.hpp"

namespace bprun {

namespace {

[[noreturn]] void fail(const char* code, const std::string& description) {
    throw EngineError(classify_error({FailureSource::provider, code, description}));
}

nlohmann::json to_wire(const LlmRequest& request, const std::string& model) {
    nlohmann::json body{
        {"model", request.model.empty() ? model : request.model},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
        {"messages", nlohmann::json::array()},
    };
    for (const auto& m : request.messages) body["messages"].push_back(to_json(m));
    if (!request.tools.empty()) {
        body["tools"] = nlohmann::json::array();
        for (const auto& t : request.tools) {
            body["tools"].push_back({{"type", "function"},
                                     {"function",
                                      {{"name", t.name},
                                       {"description", t.description},
                                       {"parameters", t.parameters}}}});
        }
    }
    return body;
}

LlmResponse from_wire(const nlohmann::json& doc, const LlmRequest& request) {
    if (!doc.is_object() || !doc.contains("choices") || !doc["choices"].is_array() ||
        doc["choices"].empty()) {
        fail("bad_response", "provider response has no choices");
    }
    const auto& choice = doc["choices"][0];
    const auto& msg = choice.value("message", nlohmann::json::object());

    LlmResponse response;
    if (auto c = msg.find("content"); c != msg.end() && c->is_string()) {
        response.message.content = c->get<std::string>();
    }
    if (auto calls = msg.find("tool_calls"); calls != msg.end() && calls->is_array()) {
        for (const auto& call : *calls) {
            const auto& fn = call.value("function", nlohmann::json::object());
            ToolCall tc;
            tc.name = fn.value("name", std::string());
            auto args = fn.value("arguments", nlohmann::json::object());
            if (args.is_string()) {
                args = nlohmann::json::parse(args.get<std::string>(), nullptr, false);
                if (args.is_discarded()) args = nlohmann::json::object();
            }
            tc.arguments = args.is_object() ? args : nlohmann::json::object();
            response.tool_calls.push_back(std::move(tc));
        }
    }
    const std::string reason = choice.value("finish_reason", std::string("stop"));
    if (reason == "length") response.finish_reason = FinishReason::length;
    else if (!response.tool_calls.empty() || reason == "tool_calls") response.finish_reason = FinishReason::tool_call;
    else response.finish_reason = FinishReason::stop;

    response.usage = estimate_usage(request, response);
    if (auto usage = doc.find("usage"); usage != doc.end() && usage->is_object()) {
        response.usage.prompt_tokens = usage->value("prompt_tokens", response.usage.prompt_tokens);
        response.usage.completion_tokens =
            usage->value("completion_tokens", response.usage.completion_tokens);
    }
    return response;
}

}  // namespace

LlmResponse HttpChatProvider::invoke(const LlmRequest& request) {
    httplib::Client client(options_.base_url);
    const auto timeout = std::chrono::milliseconds(options_.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    httplib::Headers headers;
    if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

    auto result = client.Post(options_.path, headers, to_wire(request, options_.model).dump(),
                              "application/json");
    if (!result) {
        const auto err = result.error();
        if (err == httplib::Error::Read || err == httplib::Error::Write) {
            fail("timeout", "provider read/write failed: " + httplib::to_string(err));
        }
        fail("connection_refused", "provider unreachable: " + httplib::to_string(err));
    }
    if (result->status == 429) fail("rate_limit", "provider rate limited the request");
    if (result->status >= 500) fail("http_5xx", "provider returned HTTP " + std::to_string(result->status));
    if (result->status >= 400) fail("bad_request", "provider rejected the request: " + result->body);

    auto doc = nlohmann::json::parse(result->body, nullptr, false);
    if (doc.is_discarded()) fail("bad_response", "provider returned non-JSON body");
    return from_wire(doc, request);
}

}  // namespace bprun
