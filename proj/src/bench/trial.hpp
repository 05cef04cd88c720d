#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bench/domain.hpp"
#include "bench/tasks.hpp"
#include "control/agent_config.hpp"
#include "executor/executor.hpp"

namespace bprun::bench {

enum class Variant { blueprint, fc, react, act };

std::string_view to_string(Variant v);
Variant variant_from_string(std::string_view name);  // throws ValidationError

struct RoleCounts {
    int times = 0;
    std::uint64_t tokens = 0;

    bool operator==(const RoleCounts&) const = default;
};

struct TrialResult {
    std::string task_id;
    std::string domain;
    Variant variant = Variant::blueprint;
    nlohmann::json toggles = nlohmann::json::object();
    int trial = 0;
    bool success = false;
    bool state_matches = false;
    bool outputs_present = false;
    std::string diagnostic;
    std::map<std::string, RoleCounts> roles;  // system, user, assistant, tool
    int tool_calls = 0;
    std::string final_state_hash;
    nlohmann::json trace = nlohmann::json::array();
    std::string trace_path;
    std::string exec_id;                         // blueprint variant only
    nlohmann::json telemetry = nullptr;          // canonical record, blueprint only
    int telemetry_tool_calls = -1;               // tool.call events in the record
    bool case_study = false;
};

// Full document including the trace.
nlohmann::json to_json(const TrialResult& r);
// What must agree across repeated deterministic trials: everything except
// the trial index, trace path and execution id.
nlohmann::json comparable(const TrialResult& r);

// Label such as "blueprint" or "blueprint[dc=off]".
std::string variant_label(Variant v, const nlohmann::json& toggles);

struct HarnessOptions {
    std::filesystem::path fixture_root;    // contains retail/ and airline/
    std::filesystem::path blueprint_root;  // native blueprint build output
    std::filesystem::path work_dir;        // telemetry log lives here
    bool deterministic = true;
    int max_steps = 30;                    // baseline loop cap
    std::vector<std::string> domains = {"retail", "airline"};
};

class Harness {
public:
    explicit Harness(HarnessOptions options);
    ~Harness();

    const std::vector<DomainFixture>& domains() const { return domains_; }
    const DomainFixture& domain(const std::string& name) const;
    std::vector<const BenchmarkTask*> tasks(const std::string& domain_filter = "all") const;

    TrialResult run_trial(const BenchmarkTask& task, Variant variant, const nlohmann::json& toggles, int trial);

    // Trials run on up to `concurrency` worker threads; results come back in
    // (task, trial) order regardless of scheduling.
    std::vector<TrialResult> run_many(const std::vector<const BenchmarkTask*>& tasks, Variant variant,
                                      const nlohmann::json& toggles, int trials, int concurrency);

    // Replays the trace's tool calls on a fresh initial state; returns the hash.
    std::string replay_hash(const BenchmarkTask& task, const nlohmann::json& trace) const;
    std::string replay_actions(const std::string& domain, const nlohmann::json& actions) const;
    // Domain whose blueprint agent has this id, if any.
    std::optional<std::string> domain_for_agent(const std::string& agent_id) const;
    const BenchmarkTask* find_task(const std::string& task_id) const;

    Executor& executor() { return *executor_; }
    TelemetryLog& telemetry() { return *telemetry_; }
    const HarnessOptions& options() const { return options_; }

private:
    TrialResult run_blueprint(const BenchmarkTask& task, const nlohmann::json& toggles, TrialResult result);
    TrialResult run_baseline(const BenchmarkTask& task, Variant variant, TrialResult result);
    void finish_result(const BenchmarkTask& task, TrialResult& result, const std::string& final_hash) const;

    HarnessOptions options_;
    std::vector<DomainFixture> domains_;
    std::map<std::string, AgentConfig> agents_;
    std::map<std::string, std::shared_ptr<KbStore>> kbs_;
    std::unique_ptr<Sandbox> sandbox_;
    std::unique_ptr<IdGenerator> ids_;
    std::unique_ptr<TelemetryLog> telemetry_;
    std::unique_ptr<Executor> executor_;
};

// Per-role message counts and token estimates over a trace.
std::map<std::string, RoleCounts> count_roles(const nlohmann::json& trace);

}  // namespace bprun::bench
