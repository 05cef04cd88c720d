#include "providers/llm.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace bprun {

std::uint64_t token_estimate(std::string_view text) {
    return (static_cast<std::uint64_t>(text.size()) + 3) / 4;
}

Usage estimate_usage(const LlmRequest& request, const LlmResponse& response) {
    std::string input;
    for (const auto& m : request.messages) input += m.content;
    std::string output = response.message.content;
    for (const auto& call : response.tool_calls) output += to_json(call).dump();
    return Usage{token_estimate(input), token_estimate(output)};
}

MockScript MockScript::from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("steps") || !doc["steps"].is_array()) {
        throw ValidationError("mock script must be an object with a 'steps' array");
    }
    MockScript script;
    std::size_t index = 0;
    for (const auto& raw : doc["steps"]) {
        const std::string where = "steps[" + std::to_string(index++) + "]";
        if (!raw.is_object() || !raw.contains("response")) {
            throw ValidationError(where + " needs a response");
        }
        ScriptStep step;
        if (auto m = raw.find("match"); m != raw.end() && !m->is_null()) {
            if (!m->is_object() || !m->contains("last_user_contains") ||
                !(*m)["last_user_contains"].is_string()) {
                throw ValidationError(where + ".match must be {last_user_contains: string}");
            }
            step.last_user_contains = (*m)["last_user_contains"].get<std::string>();
        }
        try {
            step.response = llm_response_from_json(raw["response"]);
        } catch (const ValidationError& e) {
            throw ValidationError(where + ": " + e.what());
        }
        if (auto f = raw.find("fail_first"); f != raw.end()) {
            if (!f->is_number_unsigned()) throw ValidationError(where + ".fail_first must be >= 0");
            step.fail_first = f->get<int>();
        }
        if (auto c = raw.find("only_if"); c != raw.end() && !c->is_null()) {
            if (!c->is_object()) throw ValidationError(where + ".only_if must be an object");
            step.only_if = *c;
        }
        script.steps.push_back(std::move(step));
    }
    return script;
}

MockScript MockScript::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open mock script " + path);
    auto doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ValidationError("mock script " + path + " is not valid JSON");
    return from_json(doc);
}

MockScript MockScript::specialize(const nlohmann::json& toggles) const {
    MockScript out;
    for (const auto& step : steps) {
        bool keep = true;
        if (step.only_if.is_object()) {
            for (const auto& [key, want] : step.only_if.items()) {
                bool have = true;  // toggles default to on
                if (toggles.is_object() && toggles.contains(key) && toggles[key].is_boolean()) {
                    have = toggles[key].get<bool>();
                }
                if (want.is_boolean() && want.get<bool>() != have) keep = false;
            }
        }
        if (keep) out.steps.push_back(step);
    }
    return out;
}

LlmResponse MockProvider::invoke(const LlmRequest& request) {
    std::lock_guard lock(mu_);
    if (cursor_ >= script_.steps.size()) {
        throw EngineError(ErrorClass::fatal,
                          "mock_script_exhausted: no step left for call #" + std::to_string(cursor_ + 1));
    }
    const auto& step = script_.steps[cursor_];
    if (step.last_user_contains) {
        const ChatMessage* last_user = nullptr;
        for (const auto& m : request.messages) {
            if (m.role == "user") last_user = &m;
        }
        if (last_user == nullptr || last_user->content.find(*step.last_user_contains) == std::string::npos) {
            throw EngineError(ErrorClass::fatal,
                              "mock_script_misaligned: step " + std::to_string(cursor_) +
                                  " expects last user message containing '" +
                                  *step.last_user_contains + "'");
        }
    }
    if (failures_on_step_ < step.fail_first) {
        ++failures_on_step_;
        ++failures_total_;
        throw EngineError(classify_error(
            {FailureSource::provider, "timeout", "mock provider timeout (injected)"}));
    }
    LlmResponse response = step.response;
    response.message.role = "assistant";
    response.usage = estimate_usage(request, response);
    ++cursor_;
    failures_on_step_ = 0;
    return response;
}

std::size_t MockProvider::consumed() const {
    std::lock_guard lock(mu_);
    return cursor_;
}

std::size_t MockProvider::failures_injected() const {
    std::lock_guard lock(mu_);
    return failures_total_;
}

LlmResponse LoopbackProvider::invoke(const LlmRequest& request) {
    LlmResponse response;
    for (const auto& m : request.messages) {
        if (m.role == "user") response.message.content = m.content;
    }
    response.usage = estimate_usage(request, response);
    return response;
}

std::unique_ptr<LlmProvider> make_provider(const nlohmann::json& binding,
                                           const nlohmann::json& toggles,
                                           const std::string& base_dir) {
    const std::string kind = binding.value("provider", std::string("mock"));
    if (kind == "mock") {
        std::filesystem::path script = binding.value("script", std::string());
        if (script.empty()) throw ValidationError("mock provider binding needs a 'script'");
        if (script.is_relative()) script = std::filesystem::path(base_dir) / script;
        return std::make_unique<MockProvider>(MockScript::load(script.string()).specialize(toggles));
    }
    if (kind == "loopback") return std::make_unique<LoopbackProvider>();
    if (kind == "http") {
        HttpChatProvider::Options options;
        options.base_url = binding.value("base_url", std::string());
        options.model = binding.value("model", std::string());
        options.path = binding.value("path", options.path);
        if (auto env = binding.value("api_key_env", std::string()); !env.empty()) {
            if (const char* key = std::getenv(env.c_str())) options.api_key = key;
        }
        options.timeout_ms = binding.value("timeout_ms", options.timeout_ms);
        if (options.base_url.empty()) throw ValidationError("http provider binding needs 'base_url'");
        return std::make_unique<HttpChatProvider>(std::move(options));
    }
    throw ValidationError("unknown provider '" + kind + "'");
}

}  // namespace bprun
