#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bench/domain.hpp"
#include "executor/retry.hpp"
#include "providers/knowledge_base.hpp"
#include "providers/llm.hpp"
#include "providers/tool_registry.hpp"
#include "sandbox/sandbox.hpp"

namespace bprun {

struct KbBinding {
    std::string id;
    std::filesystem::path dir;  // empty when the KB is registered elsewhere
};

// A deployable agent. Loaded from JSON:
//   {"agent_id","agent_token","system_prompt" | "system_prompt_file",
//    "blueprint":{"dir","entry_file","runtime"},
//    "model":{"provider":"mock","script":...,"model":...},
//    "knowledge_bases":["id" | {"id","dir"}],
//    "tools":{"domain":"retail","state":"state.json","remote":[{name,description,parameters,endpoint}]},
//    "limits":{...}, "toggles":{"dc_enabled","consolidated_tools"},
//    "retry":{"max_retries","backoff_base_ms"}, "network":"deny|engine_socket_only",
//    "deny_users":[...]}
struct AgentConfig {
    std::string agent_id;
    std::string agent_token;
    std::string system_prompt;
    std::string runtime;
    std::filesystem::path blueprint_dir;
    std::string entry_file;
    nlohmann::json model = nlohmann::json::object();
    std::vector<KbBinding> knowledge_bases;
    nlohmann::json tools = nlohmann::json::object();
    QuotaSpec limits;
    nlohmann::json toggles = {{"dc_enabled", true}, {"consolidated_tools", true}};
    RetryPolicy retry;
    NetworkPolicy network = NetworkPolicy::engine_socket_only;
    std::vector<std::string> deny_users;
    std::filesystem::path base_dir;  // relative paths resolve against this

    std::string model_tag() const { return model.value("model", std::string("default")); }
};

// Relative blueprint dirs are looked up under base_dir first, then under
// `blueprint_root`. Throws ValidationError when the entry file is missing or
// escapes the blueprint directory.
AgentConfig agent_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                                   const std::filesystem::path& blueprint_root);
AgentConfig load_agent_config(const std::filesystem::path& path, const std::filesystem::path& blueprint_root);

nlohmann::json toggles_with_defaults(const nlohmann::json& toggles);

struct AuthVerdict {
    bool accepted = false;
    std::string reason;  // not_found | unauthorized | denied
};

// Everything built once at registration and shared by the agent's executions.
struct RegisteredAgent {
    AgentConfig config;
    std::shared_ptr<KbStore> kbs;
    std::shared_ptr<bench::DomainStore> store;  // null when the agent has no domain tools
    std::shared_ptr<ToolRegistry> tools;

    std::unique_ptr<LlmProvider> make_provider() const;
    nlohmann::json kb_ids() const;
};

bool constant_time_equals(const std::string& a, const std::string& b);

class AgentRegistry {
public:
    explicit AgentRegistry(const Sandbox* sandbox = nullptr) : sandbox_(sandbox) {}

    // Ingests knowledge bases, loads domain state and builds the tool registry.
    // Throws ValidationError for unsupported runtimes and duplicate ids.
    std::shared_ptr<const RegisteredAgent> add(AgentConfig config);

    // Registry file: {"agents":[ "path/to/agent.json" | {inline config} ]}.
    void load_file(const std::filesystem::path& path, const std::filesystem::path& blueprint_root);

    std::shared_ptr<const RegisteredAgent> find(const std::string& agent_id) const;
    AuthVerdict validate_request(const std::string& user_id, const std::string& agent_id,
                                 const std::string& token) const;
    std::vector<std::string> ids() const;

private:
    const Sandbox* sandbox_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<const RegisteredAgent>> agents_;
};

}  // namespace bprun
