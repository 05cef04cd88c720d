#include "bench/tasks.hpp"

#include <fstream>
#include <sstream>

#include "protocol/error.hpp"

namespace bprun::bench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ValidationError("cannot read fixture " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json load_json(const fs::path& p) {
    auto doc = json::parse(slurp(p), nullptr, false);
    if (doc.is_discarded()) throw ValidationError("invalid JSON in fixture " + p.string());
    return doc;
}

}  // namespace

fs::path BenchmarkTask::script_path(const std::string& variant) const {
    return script_dir / (task_id + "." + variant + ".mockscript");
}

DomainFixture load_domain(const fs::path& dir) {
    DomainFixture d;
    d.dir = dir;
    const auto tasks = load_json(dir / "tasks.json");
    d.domain = tasks.at("domain").get<std::string>();
    d.initial_state = load_json(dir / "state.json");
    d.system_prompt = slurp(dir / "policy.md");
    d.agent_config = dir / "agent.json";
    for (const auto& t : tasks.at("tasks")) {
        BenchmarkTask task;
        task.task_id = t.at("task_id");
        task.domain = d.domain;
        task.description = t.value("description", "");
        for (const auto& turn : t.at("user_script")) {
            UserTurn u;
            if (turn.contains("trigger") && !turn["trigger"].is_null()) u.trigger = turn["trigger"].get<std::string>();
            u.utterance = turn.at("utterance");
            task.user_script.push_back(std::move(u));
        }
        if (task.user_script.empty()) throw ValidationError("task " + task.task_id + " has an empty user script");
        task.expected_state_hash = t.at("expected_state_hash");
        task.required_outputs = t.value("required_outputs", std::vector<std::string>{});
        task.golden_actions = t.value("golden_actions", json::array());
        task.case_study = t.value("case_study", false);
        task.conflict = t.value("conflict", false);
        task.script_dir = dir / "scripts";
        d.tasks.push_back(std::move(task));
    }
    return d;
}

json to_json(const BenchmarkTask& task) {
    json script = json::array();
    for (const auto& u : task.user_script) {
        json e{{"utterance", u.utterance}};
        if (u.trigger) e["trigger"] = *u.trigger;
        script.push_back(e);
    }
    return {{"task_id", task.task_id},
            {"domain", task.domain},
            {"description", task.description},
            {"user_script", script},
            {"expected_state_hash", task.expected_state_hash},
            {"required_outputs", task.required_outputs},
            {"golden_actions", task.golden_actions},
            {"case_study", task.case_study},
            {"conflict", task.conflict}};
}

std::string UserSimulator::opening() {
    if (script_.empty()) return kStopSignal;
    cursor_ = 1;
    return script_[0].utterance;
}

std::string UserSimulator::respond(const std::string& assistant_message) {
    if (cursor_ >= script_.size()) return kStopSignal;
    const auto& next = script_[cursor_];
    if (next.trigger && assistant_message.find(*next.trigger) == std::string::npos) return kFallbackUtterance;
    ++cursor_;
    return next.utterance;
}

}  // namespace bprun::bench
