#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "providers/knowledge_base.hpp"
#include "providers/llm.hpp"

namespace bprun::bench {

inline constexpr const char* kStopSignal = "###STOP###";
inline constexpr const char* kFallbackUtterance = "proceed";

struct UserTurn {
    std::optional<std::string> trigger;  // substring of the last assistant message
    std::string utterance;
};

struct BenchmarkTask {
    std::string task_id;
    std::string domain;
    std::string description;
    std::vector<UserTurn> user_script;  // entry 0 opens the conversation
    std::string expected_state_hash;
    std::vector<std::string> required_outputs;
    nlohmann::json golden_actions = nlohmann::json::array();  // [{name,args}]
    bool case_study = false;
    bool conflict = false;
    std::filesystem::path script_dir;  // <task_id>.<variant>.mockscript lives here

    std::filesystem::path script_path(const std::string& variant) const;
};

struct DomainFixture {
    std::string domain;
    std::filesystem::path dir;
    nlohmann::json initial_state;
    std::string system_prompt;
    std::filesystem::path agent_config;  // blueprint agent for this domain
    std::vector<BenchmarkTask> tasks;
};

// Reads <dir>/state.json, policy.md, tasks.json and agent.json.
DomainFixture load_domain(const std::filesystem::path& dir);

nlohmann::json to_json(const BenchmarkTask& task);

// Scripted user: replies to the last assistant message. An entry with a
// trigger waits until the trigger appears; until then the fallback is sent.
// Once the script is used up every reply is the stop signal.
class UserSimulator {
public:
    explicit UserSimulator(std::vector<UserTurn> script) : script_(std::move(script)) {}

    std::string opening();
    std::string respond(const std::string& assistant_message);
    bool exhausted() const { return cursor_ >= script_.size(); }

private:
    std::vector<UserTurn> script_;
    std::size_t cursor_ = 0;
};

}  // namespace bprun::bench
