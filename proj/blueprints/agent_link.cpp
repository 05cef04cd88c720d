#include "agent_link.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>

namespace bprun::blueprint {

namespace {

constexpr auto kHandshakeTimeout = std::chrono::seconds(5);

[[noreturn]] void die(int code, const std::string& why) {
    std::fprintf(stderr, "blueprint: %s\n", why.c_str());
    std::fflush(stderr);
    std::_Exit(code);
}

}  // namespace

AgentLink AgentLink::connect() {
    const char* addr = std::getenv("AGENT_RPC_ADDR");
    if (addr == nullptr || *addr == '\0') die(kExitMissingEnv, "AGENT_RPC_ADDR is not set");
    try {
        AgentLink link(connect_unix(addr));
        auto got = link.channel_->receive(kHandshakeTimeout);
        if (got.status != FrameChannel::Status::frame || got.frame.kind != FrameKind::init) {
            die(kExitProtocol, "no init frame from engine");
        }
        link.init_ = got.frame.payload;
        return link;
    } catch (const std::exception& e) {
        die(kExitProtocol, e.what());
    }
}

bool AgentLink::toggle(const std::string& name) const {
    const auto& t = init_.contains("toggles") ? init_["toggles"] : nlohmann::json::object();
    return t.value(name, true);
}

nlohmann::json AgentLink::call(std::string_view op, nlohmann::json payload) {
    const auto id = next_id();
    try {
        channel_->send(Frame::request(id, op, std::move(payload)));
        for (;;) {
            auto got = channel_->receive(std::chrono::hours(24));
            if (got.status == FrameChannel::Status::closed) die(kExitProtocol, "engine closed the connection");
            if (got.status != FrameChannel::Status::frame) continue;
            if (got.frame.kind != FrameKind::result || got.frame.id != id) {
                die(kExitProtocol, "unexpected frame from engine");
            }
            if (!got.frame.ok) throw RemoteError(*got.frame.error);
            return got.frame.payload;
        }
    } catch (const RemoteError&) {
        throw;
    } catch (const std::exception& e) {
        die(kExitProtocol, e.what());
    }
}

LlmResponse AgentLink::llm(std::vector<ChatMessage> messages, std::vector<ToolSpec> tools) {
    LlmRequest req;
    req.model = model();
    req.messages = std::move(messages);
    req.tools = std::move(tools);
    return llm_response_from_json(call(ops::llm_invoke, to_json(req)));
}

nlohmann::json AgentLink::tool(const std::string& name, nlohmann::json args) {
    return call(ops::tool_call, {{"name", name}, {"args", std::move(args)}});
}

nlohmann::json AgentLink::kb(const std::string& kb_id, const std::string& query, int top_k) {
    return call(ops::kb_query, {{"kb_id", kb_id}, {"query", query}, {"top_k", top_k}})["hits"];
}

void AgentLink::send_user(const std::string& text) { call(ops::user_send, {{"content", text}}); }

std::string AgentLink::wait_user() { return call(ops::user_wait, nlohmann::json::object())["content"]; }

void AgentLink::log(const std::string& level, const std::string& message, nlohmann::json data) {
    nlohmann::json p{{"level", level}, {"message", message}};
    if (!data.is_null()) p["data"] = std::move(data);
    call(ops::log, std::move(p));
}

void AgentLink::finish(const std::string& status, nlohmann::json output) {
    nlohmann::json p{{"status", status}};
    if (!output.is_null()) p["output"] = std::move(output);
    try {
        channel_->send(Frame::finish(next_id(), std::move(p)));
    } catch (const std::exception& e) {
        die(kExitProtocol, e.what());
    }
    channel_->close();
    std::fflush(stdout);
    std::_Exit(0);
}

DcVerdict parse_verdict(const std::string& text) {
    const auto line = text.substr(0, text.find('\n'));
    if (line == "APPROVE") return {true, ""};
    const std::string prefix = "REVISE: ";
    if (line.rfind(prefix, 0) == 0 && line.size() > prefix.size()) return {false, line.substr(prefix.size())};
    throw std::invalid_argument("validator reply is neither APPROVE nor REVISE: <reason>");
}

DcVerdict double_check(AgentLink& link, const std::string& tool, const nlohmann::json& args,
                       const std::string& rationale, const std::string& policy) {
    const nlohmann::json proposed{{"tool", tool}, {"args", args}, {"rationale", rationale}};
    std::vector<ChatMessage> msgs{
        {"system",
         "You validate one proposed action against policy. Reply with exactly one first line: APPROVE, or "
         "REVISE: <reason>.\nPolicy:\n" + policy},
        {"user", "Proposed action: " + proposed.dump()},
    };
    DcVerdict verdict;
    try {
        verdict = parse_verdict(link.llm(msgs).message.content);
    } catch (const std::invalid_argument& e) {
        link.log("error", "double_check unparseable verdict", {{"tool", tool}});
        throw;
    }
    link.log("info", "double_check", {{"tool", tool}, {"approve", verdict.approve}, {"reason", verdict.reason}});
    return verdict;
}

nlohmann::json parse_json_reply(const LlmResponse& response) {
    auto doc = nlohmann::json::parse(response.message.content, nullptr, false);
    if (!doc.is_object()) throw std::invalid_argument("model reply is not a JSON object");
    return doc;
}

}  // namespace bprun::blueprint
