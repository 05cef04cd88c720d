#include "bench/trial.hpp"

#include <atomic>
#include <mutex>
#include <thread>

namespace bprun::bench {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::blueprint: return "blueprint";
        case Variant::fc: return "fc";
        case Variant::react: return "react";
        case Variant::act: return "act";
    }
    return "blueprint";
}

Variant variant_from_string(std::string_view name) {
    if (name == "blueprint") return Variant::blueprint;
    if (name == "fc") return Variant::fc;
    if (name == "react") return Variant::react;
    if (name == "act") return Variant::act;
    throw ValidationError("unknown variant '" + std::string(name) + "'");
}

std::string variant_label(Variant v, const json& toggles) {
    std::string label(to_string(v));
    if (v != Variant::blueprint) return label;
    std::string off;
    if (!toggles.value("dc_enabled", true)) off += "dc=off";
    if (!toggles.value("consolidated_tools", true)) off += std::string(off.empty() ? "" : ",") + "rt=off";
    return off.empty() ? label : label + "[" + off + "]";
}

std::map<std::string, RoleCounts> count_roles(const json& trace) {
    std::map<std::string, RoleCounts> roles{{"system", {}}, {"user", {}}, {"assistant", {}}, {"tool", {}}};
    for (const auto& e : trace) {
        const std::string role = e.value("role", "");
        auto& rc = roles[role];
        ++rc.times;
        rc.tokens += role == "tool" ? token_estimate(e["result"].dump()) : token_estimate(e.value("content", ""));
    }
    return roles;
}

namespace {

json roles_json(const std::map<std::string, RoleCounts>& roles) {
    json out = json::object();
    for (const auto& [role, rc] : roles) out[role] = {{"times", rc.times}, {"tokens", rc.tokens}};
    return out;
}

bool outputs_conveyed(const BenchmarkTask& task, const json& trace) {
    for (const auto& needle : task.required_outputs) {
        bool found = false;
        for (const auto& e : trace) {
            if (e.value("role", "") == "assistant" && e.value("to_user", false) &&
                e.value("content", "").find(needle) != std::string::npos) {
                found = true;
                break;
            }
        }
        if (!found) return false;
    }
    return true;
}

std::string render_tool_calls(const LlmResponse& r) {
    std::string s = r.message.content;
    if (!r.tool_calls.empty()) {
        json calls = json::array();
        for (const auto& c : r.tool_calls) calls.push_back(to_json(c));
        s += (s.empty() ? "" : "\n") + calls.dump();
    }
    return s;
}

// Serves one bench execution: scripted user, trace capture.
class BenchHost final : public ExecutionHost {
public:
    BenchHost(UserSimulator& sim, json& trace) : sim_(sim), trace_(trace) {}

    void on_user_send(const std::string& content) override {
        last_assistant_ = content;
        trace_.push_back({{"role", "assistant"}, {"content", content}, {"to_user", true}});
    }

    std::optional<std::string> on_user_wait() override {
        auto reply = sim_.respond(last_assistant_);
        if (reply != kStopSignal) trace_.push_back({{"role", "user"}, {"content", reply}});
        return reply;
    }

    void on_event(const TelemetryEvent& event, const json& request, const json& result) override {
        if (event.op == "llm.invoke" && !event.summary.contains("error")) {
            trace_.push_back({{"role", "assistant"},
                              {"content", render_tool_calls(llm_response_from_json(result))},
                              {"to_user", false}});
        } else if (event.op == "tool.call") {
            trace_.push_back({{"role", "tool"},
                              {"name", request.value("name", "")},
                              {"args", request.value("args", json::object())},
                              {"result", result}});
        }
    }

private:
    UserSimulator& sim_;
    json& trace_;
    std::string last_assistant_;
};

struct ParsedAction {
    std::vector<ToolCall> calls;
    std::optional<std::string> respond;
};

// ReAct / Act replies end with `Action: {"name":..., "arguments":{...}}`.
ParsedAction parse_text_action(const std::string& content) {
    ParsedAction out;
    const auto pos = content.rfind("Action:");
    if (pos == std::string::npos) {
        out.respond = content;
        return out;
    }
    auto doc = json::parse(content.substr(pos + 7), nullptr, false);
    if (!doc.is_object() || !doc.contains("name") || !doc["name"].is_string()) {
        out.respond = content;
        return out;
    }
    const auto args = doc.value("arguments", json::object());
    if (doc["name"] == "respond") {
        out.respond = args.value("content", std::string());
    } else {
        out.calls.push_back(ToolCall{doc["name"].get<std::string>(), args});
    }
    return out;
}

std::string tools_prompt(const ToolRegistry& registry) {
    json specs = json::array();
    for (const auto& s : registry.specs()) specs.push_back(to_json(s));
    specs.push_back({{"name", "respond"},
                     {"description", "Send a message to the user."},
                     {"parameters", {{"type", "object"}, {"properties", {{"content", {{"type", "string"}}}}}}}});
    return "\n\nAvailable actions (reply with `Action: {\"name\":..., \"arguments\":{...}}`):\n" + specs.dump();
}

}  // namespace

json to_json(const TrialResult& r) {
    json doc = comparable(r);
    doc["trial"] = r.trial;
    doc["trace_path"] = r.trace_path;
    doc["exec_id"] = r.exec_id;
    doc["trace"] = r.trace;
    return doc;
}

json comparable(const TrialResult& r) {
    json doc{{"task_id", r.task_id},
             {"domain", r.domain},
             {"variant", variant_label(r.variant, r.toggles)},
             {"toggles", r.toggles},
             {"success", r.success},
             {"state_matches", r.state_matches},
             {"outputs_present", r.outputs_present},
             {"diagnostic", r.diagnostic},
             {"roles", roles_json(r.roles)},
             {"tool_calls", r.tool_calls},
             {"final_state_hash", r.final_state_hash}};
    if (!r.telemetry.is_null()) doc["telemetry"] = r.telemetry;
    return doc;
}

Harness::Harness(HarnessOptions options) : options_(std::move(options)) {
    fs::create_directories(options_.work_dir);
    SandboxConfig sc;
    sc.runtimes = default_runtimes();
    sandbox_ = std::make_unique<Sandbox>(sc);
    ids_ = std::make_unique<IdGenerator>(options_.deterministic, 1);
    telemetry_ = std::make_unique<TelemetryLog>((options_.work_dir / "telemetry.log").string());
    ExecutorOptions eo;
    eo.sandbox = sandbox_.get();
    eo.telemetry = telemetry_.get();
    eo.ids = ids_.get();
    executor_ = std::make_unique<Executor>(eo);

    for (const auto& name : options_.domains) {
        auto d = load_domain(options_.fixture_root / name);
        auto cfg = load_agent_config(d.agent_config, options_.blueprint_root);
        auto store = std::make_shared<KbStore>();
        for (const auto& kb : cfg.knowledge_bases) {
            store->add(std::make_shared<KnowledgeBase>(KnowledgeBase::ingest_directory(kb.id, kb.dir.string())));
        }
        kbs_[d.domain] = store;
        agents_.emplace(d.domain, std::move(cfg));
        domains_.push_back(std::move(d));
    }
}

Harness::~Harness() = default;

const DomainFixture& Harness::domain(const std::string& name) const {
    for (const auto& d : domains_) {
        if (d.domain == name) return d;
    }
    throw ValidationError("unknown domain '" + name + "'");
}

std::vector<const BenchmarkTask*> Harness::tasks(const std::string& filter) const {
    std::vector<const BenchmarkTask*> out;
    for (const auto& d : domains_) {
        if (filter != "all" && filter != d.domain) continue;
        for (const auto& t : d.tasks) out.push_back(&t);
    }
    if (out.empty() && filter != "all") throw ValidationError("unknown domain '" + filter + "'");
    return out;
}

void Harness::finish_result(const BenchmarkTask& task, TrialResult& r, const std::string& final_hash) const {
    r.final_state_hash = final_hash;
    r.state_matches = final_hash == task.expected_state_hash;
    r.outputs_present = outputs_conveyed(task, r.trace);
    r.success = r.state_matches && r.outputs_present;
    r.roles = count_roles(r.trace);
    if (!r.state_matches) r.diagnostic += std::string(r.diagnostic.empty() ? "" : "; ") + "final state differs from expected";
    if (!r.outputs_present) r.diagnostic += std::string(r.diagnostic.empty() ? "" : "; ") + "required output missing";
}

TrialResult Harness::run_trial(const BenchmarkTask& task, Variant variant, const json& toggles, int trial) {
    TrialResult r;
    r.task_id = task.task_id;
    r.domain = task.domain;
    r.case_study = task.case_study;
    r.variant = variant;
    r.toggles = variant == Variant::blueprint ? toggles_with_defaults(toggles) : json::object();
    r.trial = trial;
    try {
        if (variant == Variant::blueprint) {
            const json t = r.toggles;
            return run_blueprint(task, t, std::move(r));
        }
        return run_baseline(task, variant, std::move(r));
    } catch (const std::exception& e) {
        // A broken fixture must not take the whole run down.
        TrialResult failed;
        failed.task_id = task.task_id;
        failed.domain = task.domain;
        failed.variant = variant;
        failed.toggles = variant == Variant::blueprint ? toggles_with_defaults(toggles) : json::object();
        failed.trial = trial;
        failed.diagnostic = std::string("harness: ") + e.what();
        failed.roles = count_roles(json::array());
        return failed;
    }
}

TrialResult Harness::run_blueprint(const BenchmarkTask& task, const json& toggles, TrialResult r) {
    const auto& d = domain(task.domain);
    const auto& cfg = agents_.at(task.domain);
    auto store = std::make_shared<DomainStore>(task.domain, d.initial_state);
    ToolRegistry tools;
    register_domain_tools(tools, store, toggles.value("consolidated_tools", true));
    MockProvider llm(MockScript::load(task.script_path("blueprint").string()).specialize(toggles));

    UserSimulator sim(task.user_script);
    const std::string opening = sim.opening();
    r.trace.push_back({{"role", "system"}, {"content", d.system_prompt}});
    r.trace.push_back({{"role", "user"}, {"content", opening}});

    LaunchRequest req;
    req.agent_id = cfg.agent_id;
    req.session_id = ids_->next();
    req.runtime = cfg.runtime;
    req.blueprint_dir = cfg.blueprint_dir;
    req.entry_file = cfg.entry_file;
    req.limits = cfg.limits;
    req.retry = cfg.retry;
    req.retry.zero_delay = options_.deterministic;
    req.network = cfg.network;
    req.snapshot = json::array({{{"role", "system"}, {"content", d.system_prompt}}, {{"role", "user"}, {"content", opening}}});
    req.toggles = toggles;
    json kb_ids = json::array();
    for (const auto& kb : cfg.knowledge_bases) kb_ids.push_back(kb.id);
    req.extra = {{"model", cfg.model_tag()}, {"kbs", kb_ids}};

    BenchHost host(sim, r.trace);
    const auto record = executor_->run(req, {&llm, &tools, kbs_.at(task.domain).get()}, host);
    r.exec_id = record.exec_id;
    r.telemetry = canonical_telemetry(record);
    r.telemetry_tool_calls = static_cast<int>(record.count_events("tool.call"));
    r.tool_calls = 0;
    for (const auto& e : r.trace) r.tool_calls += e.value("role", "") == "tool";
    if (record.exit.status != ExitStatus::ok) {
        r.diagnostic = "execution " + std::string(record.exit.status == ExitStatus::quota_killed ? "quota_killed" : "error");
        if (record.exit.error) r.diagnostic += ": " + record.exit.error->message;
    }
    finish_result(task, r, store->hash());
    return r;
}

TrialResult Harness::run_baseline(const BenchmarkTask& task, Variant variant, TrialResult r) {
    const auto& d = domain(task.domain);
    const auto& cfg = agents_.at(task.domain);
    auto store = std::make_shared<DomainStore>(task.domain, d.initial_state);
    ToolRegistry tools;
    register_domain_tools(tools, store, false);
    MockProvider llm(MockScript::load(task.script_path(std::string(to_string(variant))).string()));

    UserSimulator sim(task.user_script);
    const std::string system = variant == Variant::fc ? d.system_prompt : d.system_prompt + tools_prompt(tools);
    std::vector<ChatMessage> messages{{"system", system}, {"user", sim.opening()}};
    r.trace.push_back({{"role", "system"}, {"content", system}});
    r.trace.push_back({{"role", "user"}, {"content", messages.back().content}});

    RetryPolicy retry = cfg.retry;
    retry.zero_delay = options_.deterministic;
    bool stopped = false;
    for (int step = 0; step < options_.max_steps && !stopped; ++step) {
        LlmRequest req;
        req.model = cfg.model_tag();
        req.messages = messages;
        if (variant == Variant::fc) req.tools = tools.specs();
        LlmResponse resp;
        try {
            resp = with_retry([&] { return llm.invoke(req); }, retry, [](int, const ErrorInfo&) {});
        } catch (const EngineError& e) {
            r.diagnostic = "model: " + std::string(e.what());
            break;
        }

        ParsedAction action;
        if (variant == Variant::fc) {
            action.calls = resp.tool_calls;
            if (action.calls.empty()) action.respond = resp.message.content;
        } else {
            action = parse_text_action(resp.message.content);
        }

        const std::string rendered = render_tool_calls(resp);
        r.trace.push_back({{"role", "assistant"}, {"content", action.respond ? *action.respond : rendered},
                           {"to_user", action.respond.has_value()}});
        messages.push_back({"assistant", rendered});

        for (const auto& call : action.calls) {
            json result;
            try {
                result = tools.dispatch(call.name, call.arguments);
            } catch (const EngineError& e) {
                result = {{"ok", false}, {"error", e.what()}};
            }
            ++r.tool_calls;
            r.trace.push_back({{"role", "tool"}, {"name", call.name}, {"args", call.arguments}, {"result", result}});
            messages.push_back({"tool", result.dump()});
        }
        if (action.respond) {
            const auto reply = sim.respond(*action.respond);
            if (reply == kStopSignal) {
                stopped = true;
                break;
            }
            r.trace.push_back({{"role", "user"}, {"content", reply}});
            messages.push_back({"user", reply});
        }
    }
    if (!stopped && r.diagnostic.empty()) r.diagnostic = "step cap reached";
    finish_result(task, r, store->hash());
    return r;
}

std::vector<TrialResult> Harness::run_many(const std::vector<const BenchmarkTask*>& tasks, Variant variant,
                                           const json& toggles, int trials, int concurrency) {
    if (trials < 1) throw ValidationError("trials must be >= 1");
    if (concurrency < 1) throw ValidationError("concurrency must be >= 1");
    const std::size_t total = tasks.size() * static_cast<std::size_t>(trials);
    std::vector<TrialResult> results(total);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < total; i = next++) {
            const auto& task = *tasks[i / static_cast<std::size_t>(trials)];
            results[i] = run_trial(task, variant, toggles, static_cast<int>(i % static_cast<std::size_t>(trials)));
        }
    };
    std::vector<std::thread> pool;
    const int n = std::min<int>(concurrency, static_cast<int>(std::max<std::size_t>(total, 1)));
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return results;
}

std::string Harness::replay_actions(const std::string& domain_name, const json& actions) const {
    const auto& d = domain(domain_name);
    auto store = std::make_shared<DomainStore>(domain_name, d.initial_state);
    ToolRegistry tools;
    register_domain_tools(tools, store, true);
    for (const auto& a : actions) {
        try {
            tools.dispatch(a.at("name").get<std::string>(), a.value("args", json::object()));
        } catch (const EngineError&) {
            // Rejected calls did not change state the first time either.
        }
    }
    return store->hash();
}

std::optional<std::string> Harness::domain_for_agent(const std::string& agent_id) const {
    for (const auto& [domain_name, cfg] : agents_) {
        if (cfg.agent_id == agent_id) return domain_name;
    }
    return std::nullopt;
}

const BenchmarkTask* Harness::find_task(const std::string& task_id) const {
    for (const auto& d : domains_) {
        for (const auto& t : d.tasks) {
            if (t.task_id == task_id) return &t;
        }
    }
    return nullptr;
}

std::string Harness::replay_hash(const BenchmarkTask& task, const json& trace) const {
    json actions = json::array();
    for (const auto& e : trace) {
        if (e.value("role", "") == "tool") actions.push_back({{"name", e["name"]}, {"args", e["args"]}});
    }
    return replay_actions(task.domain, actions);
}

}  // namespace bprun::bench
