#include "bprun/bprun.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include <json.hpp>

#include "bench/report.hpp"
#include "bench/trial.hpp"
#include "control/daemon.hpp"
#include "control/http.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

struct bpr_daemon {
    std::unique_ptr<bprun::Daemon> daemon;
    std::unique_ptr<bprun::HttpGateway> gateway;
};

struct bpr_client {
    std::unique_ptr<bprun::GatewayClient> client;
};

struct bpr_bench {
    std::unique_ptr<bprun::bench::Harness> harness;
};

namespace {

thread_local std::string g_last_error;

bpr_status fail(bpr_status status, const std::string& message) {
    g_last_error = message;
    return status;
}

bpr_status code_status(bprun::ControlCode code) {
    switch (code) {
        case bprun::ControlCode::not_found: return BPR_ERR_NOT_FOUND;
        case bprun::ControlCode::unauthorized: return BPR_ERR_UNAUTHORIZED;
        case bprun::ControlCode::denied: return BPR_ERR_DENIED;
        case bprun::ControlCode::conflict: return BPR_ERR_CONFLICT;
        case bprun::ControlCode::invalid: return BPR_ERR_INVALID;
    }
    return BPR_ERR_FATAL;
}

bpr_status class_status(bprun::ErrorClass cls) {
    switch (cls) {
        case bprun::ErrorClass::transient: return BPR_ERR_TRANSIENT;
        case bprun::ErrorClass::validation: return BPR_ERR_INVALID;
        case bprun::ErrorClass::protocol: return BPR_ERR_PROTOCOL;
        case bprun::ErrorClass::quota: return BPR_ERR_QUOTA;
        case bprun::ErrorClass::fatal: return BPR_ERR_FATAL;
    }
    return BPR_ERR_FATAL;
}

// Runs `f`, translating every exception into a status + last error.
template <typename F>
bpr_status guard(F&& f) {
    try {
        f();
        g_last_error.clear();
        return BPR_OK;
    } catch (const bprun::ControlError& e) {
        return fail(code_status(e.code()), e.what());
    } catch (const bprun::EngineError& e) {
        return fail(class_status(e.cls()), e.what());
    } catch (const json::exception& e) {
        return fail(BPR_ERR_INVALID, std::string("bad document: ") + e.what());
    } catch (const std::bad_alloc&) {
        return fail(BPR_ERR_FATAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(BPR_ERR_FATAL, e.what());
    }
}

char* dup(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.data(), s.size() + 1);
    return out;
}

void put(char** out, const std::string& s) {
    if (out) *out = dup(s);
}

std::string str(const char* s, const char* what) {
    if (!s) throw bprun::ControlError(bprun::ControlCode::invalid, std::string(what) + " is NULL");
    return s;
}

json parse_doc(const char* text, const char* what) {
    if (!text || !*text) return json::object();
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw bprun::ControlError(bprun::ControlCode::invalid, std::string(what) + " is not a JSON object");
    }
    return doc;
}

std::optional<int> turn_bound(int up_to) { return up_to < 0 ? std::nullopt : std::optional<int>(up_to); }

json failures_of(const bprun::bench::VariantRun& run) {
    json out = json::array();
    for (const auto& r : run.results) {
        if (!r.success) out.push_back({{"task_id", r.task_id}, {"trial", r.trial}, {"diagnostic", r.diagnostic}});
    }
    return out;
}

json consistency_json(const bprun::bench::TrialConsistency& tc) {
    return {{"identical", tc.identical},
            {"pass1_by_trial", tc.pass1_by_trial},
            {"pass1_variance", tc.pass1_variance},
            {"differing_tasks", tc.differing_tasks}};
}

int read_trials(const json& req, const char* key, int def) {
    const int v = req.value(key, def);
    if (v < 1) throw bprun::ControlError(bprun::ControlCode::invalid, std::string(key) + " must be >= 1");
    return v;
}

}  // namespace

extern "C" {

const char* bpr_version(void) { return "0.1.0"; }

const char* bpr_last_error(void) { return g_last_error.c_str(); }

const char* bpr_status_name(bpr_status status) {
    switch (status) {
        case BPR_OK: return "ok";
        case BPR_ERR_INVALID: return "invalid";
        case BPR_ERR_NOT_FOUND: return "not_found";
        case BPR_ERR_UNAUTHORIZED: return "unauthorized";
        case BPR_ERR_DENIED: return "denied";
        case BPR_ERR_CONFLICT: return "conflict";
        case BPR_ERR_TRANSIENT: return "transient";
        case BPR_ERR_PROTOCOL: return "protocol";
        case BPR_ERR_QUOTA: return "quota";
        case BPR_ERR_FATAL: return "fatal";
    }
    return "unknown";
}

void bpr_string_free(char* s) { std::free(s); }

// ---- daemon ----

bpr_status bpr_daemon_open(const char* config_path, bpr_daemon** out) {
    return guard([&] {
        if (!out) throw bprun::ControlError(bprun::ControlCode::invalid, "out is NULL");
        auto d = std::make_unique<bpr_daemon>();
        d->daemon = std::make_unique<bprun::Daemon>(bprun::load_daemon_config(str(config_path, "config_path")));
        *out = d.release();
    });
}

bpr_status bpr_daemon_open_text(const char* config_text, const char* base_dir, bpr_daemon** out) {
    return guard([&] {
        if (!out) throw bprun::ControlError(bprun::ControlCode::invalid, "out is NULL");
        auto d = std::make_unique<bpr_daemon>();
        d->daemon = std::make_unique<bprun::Daemon>(
            bprun::parse_daemon_config(str(config_text, "config_text"), base_dir ? fs::path(base_dir) : fs::path()));
        *out = d.release();
    });
}

void bpr_daemon_close(bpr_daemon* d) {
    if (!d) return;
    if (d->gateway) d->gateway->stop();
    d->gateway.reset();
    delete d;
}

bpr_status bpr_daemon_listen(bpr_daemon* d, const char* host, int port, int* bound_port) {
    return guard([&] {
        if (!d) throw bprun::ControlError(bprun::ControlCode::invalid, "daemon is NULL");
        if (d->gateway) throw bprun::ControlError(bprun::ControlCode::conflict, "already listening");
        const auto& cfg = d->daemon->config();
        auto gw = std::make_unique<bprun::HttpGateway>(d->daemon->control());
        const int bound = gw->bind(host ? host : cfg.listen_host, port >= 0 ? port : cfg.listen_port);
        gw->start();
        d->gateway = std::move(gw);
        if (bound_port) *bound_port = bound;
    });
}

bpr_status bpr_daemon_stop(bpr_daemon* d) {
    return guard([&] {
        if (!d) throw bprun::ControlError(bprun::ControlCode::invalid, "daemon is NULL");
        if (d->gateway) d->gateway->stop();
        d->gateway.reset();
    });
}

bpr_status bpr_daemon_register(bpr_daemon* d, const char* agent_config_path, char** agent_id) {
    return guard([&] {
        if (!d) throw bprun::ControlError(bprun::ControlCode::invalid, "daemon is NULL");
        auto cfg = bprun::load_agent_config(str(agent_config_path, "agent_config_path"),
                                            d->daemon->config().blueprint_root);
        const auto added = d->daemon->agents().add(std::move(cfg));
        put(agent_id, added->config.agent_id);
    });
}

bpr_status bpr_session_create(bpr_daemon* d, const char* user_id, const char* agent_id, const char* token,
                              char** session_json) {
    return guard([&] {
        if (!d) throw bprun::ControlError(bprun::ControlCode::invalid, "daemon is NULL");
        const auto st = d->daemon->control().create_session(str(user_id, "user_id"), str(agent_id, "agent_id"),
                                                            token ? token : "");
        put(session_json, bprun::summary_json(st).dump());
    });
}

bpr_status bpr_session_post(bpr_daemon* d, const char* session_id, const char* token, const char* content,
                            bpr_event_fn fn, void* user) {
    return guard([&] {
        if (!d) throw bprun::ControlError(bprun::ControlCode::invalid, "daemon is NULL");
        auto stream = d->daemon->control().post_message(str(session_id, "session_id"), token ? token : "",
                                                        str(content, "content"));
        while (auto e = stream->next()) {
            if (fn && fn(e->type.c_str(), e->data.dump().c_str(), user) != 0) break;
        }
    });
}

bpr_status bpr_session_history(bpr_daemon* d, const char* session_id, const char* token, int up_to_turn,
                               char** entries_json) {
    return guard([&] {
        if (!d) throw bprun::ControlError(bprun::ControlCode::invalid, "daemon is NULL");
        const auto entries = d->daemon->control().fetch_history(str(session_id, "session_id"), token ? token : "",
                                                                turn_bound(up_to_turn));
        json arr = json::array();
        for (const auto& e : entries) arr.push_back(bprun::to_json(e));
        put(entries_json, arr.dump());
    });
}

bpr_status bpr_execution_telemetry(bpr_daemon* d, const char* exec_id, const char* token, char** record_json) {
    return guard([&] {
        if (!d) throw bprun::ControlError(bprun::ControlCode::invalid, "daemon is NULL");
        put(record_json, d->daemon->control().telemetry_line(str(exec_id, "exec_id"), token ? token : ""));
    });
}

bpr_status bpr_daemon_status(bpr_daemon* d, char** status_json) {
    return guard([&] {
        if (!d) throw bprun::ControlError(bprun::ControlCode::invalid, "daemon is NULL");
        put(status_json, d->daemon->control().status().dump());
    });
}

// ---- client ----

bpr_status bpr_client_open(const char* base_url, bpr_client** out) {
    return guard([&] {
        if (!out) throw bprun::ControlError(bprun::ControlCode::invalid, "out is NULL");
        auto c = std::make_unique<bpr_client>();
        c->client = std::make_unique<bprun::GatewayClient>(str(base_url, "base_url"));
        *out = c.release();
    });
}

void bpr_client_close(bpr_client* c) { delete c; }

bpr_status bpr_client_create_session(bpr_client* c, const char* user_id, const char* agent_id, const char* token,
                                     char** session_json) {
    return guard([&] {
        if (!c) throw bprun::ControlError(bprun::ControlCode::invalid, "client is NULL");
        put(session_json,
            c->client->create_session(str(user_id, "user_id"), str(agent_id, "agent_id"), token ? token : "").dump());
    });
}

bpr_status bpr_client_post(bpr_client* c, const char* session_id, const char* token, const char* content,
                           bpr_event_fn fn, void* user, char** raw_stream) {
    return guard([&] {
        if (!c) throw bprun::ControlError(bprun::ControlCode::invalid, "client is NULL");
        bool stopped = false;
        const auto raw = c->client->post_message(
            str(session_id, "session_id"), token ? token : "", str(content, "content"), [&](const bprun::SseEvent& e) {
                if (fn && !stopped) stopped = fn(e.type.c_str(), e.data.dump().c_str(), user) != 0;
            });
        put(raw_stream, raw);
    });
}

bpr_status bpr_client_history(bpr_client* c, const char* session_id, const char* token, int up_to_turn,
                              char** history_json) {
    return guard([&] {
        if (!c) throw bprun::ControlError(bprun::ControlCode::invalid, "client is NULL");
        put(history_json,
            c->client->history(str(session_id, "session_id"), token ? token : "", turn_bound(up_to_turn)).dump());
    });
}

bpr_status bpr_client_telemetry(bpr_client* c, const char* exec_id, const char* token, char** record_json) {
    return guard([&] {
        if (!c) throw bprun::ControlError(bprun::ControlCode::invalid, "client is NULL");
        put(record_json, c->client->telemetry(str(exec_id, "exec_id"), token ? token : ""));
    });
}

bpr_status bpr_client_status(bpr_client* c, char** status_json) {
    return guard([&] {
        if (!c) throw bprun::ControlError(bprun::ControlCode::invalid, "client is NULL");
        put(status_json, c->client->status().dump());
    });
}

// ---- agent configs ----

bpr_status bpr_agent_validate(const char* agent_config_path, const char* blueprint_root, char** summary_json) {
    return guard([&] {
        bprun::SandboxConfig sc;
        sc.runtimes = bprun::default_runtimes();
        // Only `supports` is consulted; nothing is spawned.
        bprun::Sandbox sandbox(sc);
        bprun::AgentRegistry registry(&sandbox);
        auto agent = registry.add(bprun::load_agent_config(str(agent_config_path, "agent_config_path"),
                                                           blueprint_root ? blueprint_root : ""));
        json tools = json::array();
        for (const auto& spec : agent->tools->specs()) tools.push_back(spec.name);
        put(summary_json, json{{"agent_id", agent->config.agent_id},
                               {"runtime", agent->config.runtime},
                               {"blueprint_dir", agent->config.blueprint_dir.string()},
                               {"entry_file", agent->config.entry_file},
                               {"knowledge_bases", agent->kb_ids()},
                               {"tools", tools}}
                              .dump());
    });
}

bpr_status bpr_registry_add(const char* registry_path, const char* agent_config_path, const char* blueprint_root) {
    return guard([&] {
        const fs::path reg = str(registry_path, "registry_path");
        const fs::path cfg_path = fs::absolute(str(agent_config_path, "agent_config_path"));
        const auto cfg = bprun::load_agent_config(cfg_path, blueprint_root ? blueprint_root : "");
        json doc = {{"agents", json::array()}};
        if (fs::exists(reg)) {
            std::ifstream in(reg);
            doc = json::parse(in);
        }
        const auto base = fs::absolute(reg).parent_path();
        for (const auto& entry : doc.value("agents", json::array())) {
            std::string id;
            if (entry.is_string()) {
                fs::path p(entry.get<std::string>());
                if (p.is_relative()) p = base / p;
                if (fs::exists(p) && fs::equivalent(p, cfg_path)) {
                    throw bprun::ControlError(bprun::ControlCode::conflict, cfg_path.string() + " is already registered");
                }
                id = bprun::load_agent_config(p, blueprint_root ? blueprint_root : "").agent_id;
            } else {
                id = entry.value("agent_id", "");
            }
            if (id == cfg.agent_id) {
                throw bprun::ControlError(bprun::ControlCode::conflict, "agent '" + id + "' is already registered");
            }
        }
        doc["agents"].push_back(cfg_path.string());
        std::ofstream out(reg, std::ios::trunc);
        out << doc.dump(2) << "\n";
        if (!out) throw bprun::EngineError(bprun::ErrorClass::fatal, "cannot write " + reg.string());
    });
}

// ---- bench ----

bpr_status bpr_bench_open(const char* options_json, bpr_bench** out) {
    return guard([&] {
        if (!out) throw bprun::ControlError(bprun::ControlCode::invalid, "out is NULL");
        const json o = parse_doc(options_json, "options");
        bprun::bench::HarnessOptions opts;
        opts.fixture_root = o.value("fixture_root", "");
        opts.blueprint_root = o.value("blueprint_root", "");
        opts.work_dir = o.value("work_dir", "");
        if (opts.fixture_root.empty() || opts.blueprint_root.empty() || opts.work_dir.empty()) {
            throw bprun::ControlError(bprun::ControlCode::invalid,
                                      "fixture_root, blueprint_root and work_dir are required");
        }
        opts.deterministic = o.value("deterministic", true);
        opts.max_steps = o.value("max_steps", 30);
        if (o.contains("domains")) opts.domains = o["domains"].get<std::vector<std::string>>();
        auto b = std::make_unique<bpr_bench>();
        b->harness = std::make_unique<bprun::bench::Harness>(opts);
        *out = b.release();
    });
}

void bpr_bench_close(bpr_bench* b) { delete b; }

bpr_status bpr_bench_run(bpr_bench* b, const char* request_json, char** summary_json) {
    return guard([&] {
        if (!b) throw bprun::ControlError(bprun::ControlCode::invalid, "bench is NULL");
        const json req = parse_doc(request_json, "request");
        bprun::bench::BenchRequest r;
        r.domain = req.value("domain", "all");
        r.variant = bprun::bench::variant_from_string(req.value("variant", "blueprint"));
        r.toggles = req.value("toggles", json::object());
        r.trials = read_trials(req, "trials", 1);
        r.concurrency = read_trials(req, "concurrency", 2);
        r.with_baseline = req.value("baseline", true);
        auto report = bprun::bench::run_benchmark(*b->harness, r);
        const std::string out_dir = req.value("out", "");
        if (!out_dir.empty()) bprun::bench::emit_report(report, out_dir);
        const auto& run = report.runs.back();
        int passed = 0;
        for (const auto& t : run.results) passed += t.success ? 1 : 0;
        put(summary_json, json{{"label", run.label()},
                               {"passed", passed},
                               {"total", run.results.size()},
                               {"failures", failures_of(run)},
                               {"trial_consistency", consistency_json(bprun::bench::trial_consistency(run))},
                               {"report_text", bprun::bench::report_text(report)},
                               {"out", out_dir}}
                              .dump());
    });
}

bpr_status bpr_bench_ablate(bpr_bench* b, const char* request_json, char** summary_json) {
    return guard([&] {
        if (!b) throw bprun::ControlError(bprun::ControlCode::invalid, "bench is NULL");
        const json req = parse_doc(request_json, "request");
        const auto tasks = b->harness->tasks(req.value("domain", "all"));
        const auto grid = bprun::bench::parse_grid(req.value("grid", "sca,dc,rt"));
        auto ab = bprun::bench::run_ablation(*b->harness, tasks, grid, read_trials(req, "trials", 1),
                                             read_trials(req, "concurrency", 2));
        bprun::bench::BenchmarkReport report;
        report.trials = read_trials(req, "trials", 1);
        for (const auto* t : tasks) {
            if (std::find(report.domains.begin(), report.domains.end(), t->domain) == report.domains.end()) {
                report.domains.push_back(t->domain);
            }
        }
        report.runs = std::move(ab.runs);
        report.ablation = std::move(ab.rows);
        const std::string out_dir = req.value("out", "");
        if (!out_dir.empty()) bprun::bench::emit_report(report, out_dir);
        json rows = bprun::bench::report_json(report)["ablation"];
        put(summary_json,
            json{{"ablation", rows}, {"report_text", bprun::bench::report_text(report)}, {"out", out_dir}}.dump());
    });
}

bpr_status bpr_bench_replay(bpr_bench* b, const char* record_json, const char* task_id, char** result_json) {
    return guard([&] {
        if (!b) throw bprun::ControlError(bprun::ControlCode::invalid, "bench is NULL");
        const json rec = parse_doc(record_json, "record");
        const std::string agent_id = rec.value("agent_id", "");
        const auto domain = b->harness->domain_for_agent(agent_id);
        if (!domain) throw bprun::ControlError(bprun::ControlCode::not_found, "no benchmark domain runs agent '" + agent_id + "'");
        json actions = json::array();
        const auto events = rec.value("events", json::array());
        for (const auto& e : events) {
            if (e.value("op", "") != "tool.call") continue;
            const auto& s = e.at("summary");
            actions.push_back({{"name", s.at("name")}, {"args", s.value("args", json::object())}});
        }
        json out{{"exec_id", rec.value("exec_id", "")},
                 {"agent_id", agent_id},
                 {"domain", *domain},
                 {"events", events.size()},
                 {"tool_calls", actions},
                 {"state_hash", b->harness->replay_actions(*domain, actions)}};
        if (task_id) {
            const auto* task = b->harness->find_task(task_id);
            if (!task || task->domain != *domain) {
                throw bprun::ControlError(bprun::ControlCode::not_found, std::string("unknown task '") + task_id + "' in " + *domain);
            }
            out["task_id"] = task_id;
            out["expected_state_hash"] = task->expected_state_hash;
            out["matches"] = out["state_hash"] == task->expected_state_hash;
        }
        put(result_json, out.dump());
    });
}

bpr_status bpr_telemetry_find(const char* log_path, const char* exec_id, char** record_json) {
    return guard([&] {
        bprun::TelemetryLog log(str(log_path, "log_path"));
        auto line = log.find_line(str(exec_id, "exec_id"));
        if (!line) throw bprun::ControlError(bprun::ControlCode::not_found, std::string("no record for ") + exec_id);
        put(record_json, *line);
    });
}

}  // extern "C"
