#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <string>

#include "agent_link.hpp"

namespace bprun::blueprint {

inline std::string money(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "$%.2f", v);
    return buf;
}

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

inline bool affirmative(const std::string& reply) {
    const auto s = lower(reply);
    return s.rfind("yes", 0) == 0 || s.find(" yes") != std::string::npos || s.rfind("confirm", 0) == 0;
}

inline bool is_stop(const std::string& reply) { return reply.find("###STOP###") != std::string::npos; }

// First user message of the snapshot (the one that started this execution).
inline std::string opening_message(const AgentLink& link) {
    const auto& snap = link.snapshot();
    for (auto it = snap.rbegin(); it != snap.rend(); ++it) {
        if ((*it).value("role", "") == "user") return (*it).value("content", "");
    }
    return "";
}

inline std::string system_prompt(const AgentLink& link) {
    const auto& snap = link.snapshot();
    if (!snap.empty() && snap[0].value("role", "") == "system") return snap[0].value("content", "");
    return "";
}

// Asks a yes/no question and waits. A stop signal ends the execution.
inline bool confirm(AgentLink& link, const std::string& question) {
    link.send_user(question + " (yes/no)");
    const auto reply = link.wait_user();
    if (is_stop(reply)) link.finish("ok", {{"ended_by", "user"}});
    return affirmative(reply);
}

inline std::string tool_error(const nlohmann::json& result) { return result.value("error", std::string("unknown error")); }

}  // namespace bprun::blueprint
