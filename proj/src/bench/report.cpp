#include "bench/report.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "bench/metrics.hpp"
#include "control/agent_config.hpp"
#include "protocol/error.hpp"

namespace bprun::bench {

namespace fs = std::filesystem;
using nlohmann::json;

std::set<std::string> parse_grid(const std::string& text) {
    std::set<std::string> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        if (item.empty()) continue;
        if (item != "sca" && item != "dc" && item != "rt") throw ValidationError("unknown ablation toggle '" + item + "'");
        out.insert(item);
    }
    return out;
}

std::vector<AblationCell> ablation_cells(const std::set<std::string>& grid) {
    const bool vary_sca = grid.count("sca") != 0;
    const bool vary_dc = grid.count("dc") != 0;
    const bool vary_rt = grid.count("rt") != 0;
    std::vector<AblationCell> cells;
    if (vary_sca) cells.push_back({false, false, false});
    for (bool rt : {false, true}) {
        if (!rt && !vary_rt) continue;
        for (bool dc : {false, true}) {
            if (!dc && !vary_dc) continue;
            cells.push_back({true, dc, rt});
        }
    }
    return cells;
}

namespace {

std::vector<std::pair<std::string, double>> raw_pass1(const VariantRun& run, const std::vector<std::string>& domains) {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& d : domains) {
        std::map<std::string, int> successes;
        std::map<std::string, int> trials;
        for (const auto& r : run.results) {
            if (r.domain != d) continue;
            successes[r.task_id] += r.success ? 1 : 0;
            trials[r.task_id] += 1;
        }
        if (trials.empty()) continue;
        std::vector<int> s;
        for (const auto& [task, n] : successes) s.push_back(n);
        const int n = trials.begin()->second;
        out.emplace_back(d, 100.0 * mean_pass_hat_k(s, n, 1));
    }
    return out;
}

}  // namespace

std::vector<std::pair<std::string, double>> pass1_by_domain(const VariantRun& run,
                                                           const std::vector<std::string>& domains) {
    auto out = raw_pass1(run, domains);
    for (auto& [_, v] : out) v = round_one_decimal(v);
    return out;
}

namespace {

// Averaged before rounding, so 66.67 and 50 give 58.3, not 58.4.
double average_of(const VariantRun& run, const std::vector<std::string>& domains) {
    const auto scores = raw_pass1(run, domains);
    if (scores.empty()) return 0.0;
    std::vector<double> v;
    for (const auto& [_, x] : scores) v.push_back(x);
    return round_one_decimal(domain_weighted_average(v));
}

std::vector<std::string> domains_in(const std::vector<TrialResult>& results) {
    std::vector<std::string> out;
    for (const auto& r : results) {
        if (std::find(out.begin(), out.end(), r.domain) == out.end()) out.push_back(r.domain);
    }
    return out;
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

std::string pad(const std::string& s, std::size_t w, bool right = false) {
    // Column widths count code points so check marks line up.
    std::size_t cps = 0;
    for (unsigned char c : s) cps += (c & 0xC0) != 0x80;
    if (cps >= w) return s;
    return right ? std::string(w - cps, ' ') + s : s + std::string(w - cps, ' ');
}

const char* mark(bool on) { return on ? "\xE2\x9C\x93" : "\xE2\x9C\x97"; }

std::string slug(const std::string& label) {
    std::string out;
    for (char c : label) {
        if (std::isalnum(static_cast<unsigned char>(c))) out += c;
        else if (c == '=') out += '_';
        else if (!out.empty() && out.back() != '-') out += '-';
    }
    while (!out.empty() && out.back() == '-') out.pop_back();
    return out;
}

struct TaskStat {
    std::string task_id;
    std::string domain;
    int successes = 0;
    int trials = 0;
    const TrialResult* first = nullptr;
};

std::vector<TaskStat> task_stats(const VariantRun& run) {
    std::vector<TaskStat> out;
    std::map<std::string, std::size_t> index;
    for (const auto& r : run.results) {
        auto it = index.find(r.task_id);
        if (it == index.end()) {
            it = index.emplace(r.task_id, out.size()).first;
            out.push_back({r.task_id, r.domain, 0, 0, nullptr});
        }
        auto& st = out[it->second];
        st.successes += r.success ? 1 : 0;
        st.trials += 1;
        if (st.first == nullptr || r.trial < st.first->trial) st.first = &r;
    }
    return out;
}

json roles_doc(const TrialResult& r) {
    json out = json::object();
    for (const char* role : {"system", "user", "assistant", "tool"}) {
        auto it = r.roles.find(role);
        const RoleCounts rc = it == r.roles.end() ? RoleCounts{} : it->second;
        out[role] = {{"times", rc.times}, {"tokens", rc.tokens}};
    }
    return out;
}

const VariantRun* baseline_of(const BenchmarkReport& report) {
    for (const auto& run : report.runs) {
        if (run.variant == Variant::fc) return &run;
    }
    return nullptr;
}

}  // namespace

TrialConsistency trial_consistency(const VariantRun& run) {
    TrialConsistency out;
    std::map<std::string, json> first;
    int trials = 0;
    for (const auto& r : run.results) trials = std::max(trials, r.trial + 1);
    for (const auto& r : run.results) {
        const auto c = comparable(r);
        auto [it, fresh] = first.emplace(r.task_id, c);
        if (!fresh && it->second != c) {
            out.identical = false;
            if (std::find(out.differing_tasks.begin(), out.differing_tasks.end(), r.task_id) == out.differing_tasks.end()) {
                out.differing_tasks.push_back(r.task_id);
            }
        }
    }
    for (int t = 0; t < trials; ++t) {
        std::map<std::string, std::pair<int, int>> by_domain;  // successes, tasks
        std::vector<std::string> order;
        for (const auto& r : run.results) {
            if (r.trial != t) continue;
            if (!by_domain.count(r.domain)) order.push_back(r.domain);
            auto& [s, n] = by_domain[r.domain];
            s += r.success ? 1 : 0;
            n += 1;
        }
        std::vector<double> scores;
        for (const auto& d : order) scores.push_back(100.0 * by_domain[d].first / by_domain[d].second);
        out.pass1_by_trial.push_back(scores.empty() ? 0.0 : domain_weighted_average(scores));
    }
    if (!out.pass1_by_trial.empty()) {
        // Shifted by the first value so identical trials give exactly zero.
        const double k = out.pass1_by_trial.front();
        const double n = static_cast<double>(out.pass1_by_trial.size());
        double sum = 0.0, sum_sq = 0.0;
        for (double v : out.pass1_by_trial) {
            sum += v - k;
            sum_sq += (v - k) * (v - k);
        }
        out.pass1_variance = std::max(0.0, (sum_sq - sum * sum / n) / n);
    }
    return out;
}

BenchmarkReport run_benchmark(Harness& harness, const BenchRequest& request) {
    const auto tasks = harness.tasks(request.domain);
    BenchmarkReport report;
    report.trials = request.trials;
    for (const auto* t : tasks) {
        if (std::find(report.domains.begin(), report.domains.end(), t->domain) == report.domains.end()) {
            report.domains.push_back(t->domain);
        }
    }
    if (request.with_baseline && request.variant != Variant::fc) {
        VariantRun base;
        base.variant = Variant::fc;
        base.results = harness.run_many(tasks, Variant::fc, json::object(), request.trials, request.concurrency);
        report.runs.push_back(std::move(base));
    }
    VariantRun run;
    run.variant = request.variant;
    run.toggles = request.variant == Variant::blueprint ? toggles_with_defaults(request.toggles) : json::object();
    run.results = harness.run_many(tasks, request.variant, run.toggles, request.trials, request.concurrency);
    report.runs.push_back(std::move(run));
    return report;
}

AblationResult run_ablation(Harness& harness, const std::vector<const BenchmarkTask*>& tasks,
                            const std::set<std::string>& grid, int trials, int concurrency) {
    AblationResult out;
    if (tasks.empty()) return out;
    std::vector<std::string> domains;
    for (const auto* t : tasks) {
        if (std::find(domains.begin(), domains.end(), t->domain) == domains.end()) domains.push_back(t->domain);
    }
    for (const auto& cell : ablation_cells(grid)) {
        VariantRun run;
        if (cell.sca) {
            run.variant = Variant::blueprint;
            run.toggles = {{"dc_enabled", cell.dc}, {"consolidated_tools", cell.rt}};
        } else {
            run.variant = Variant::fc;
        }
        run.results = harness.run_many(tasks, run.variant, run.toggles, trials, concurrency);
        AblationRow row{cell.sca, cell.dc, cell.rt, pass1_by_domain(run, domains), 0.0};
        row.average = average_of(run, domains);
        out.rows.push_back(std::move(row));
        out.runs.push_back(std::move(run));
    }
    return out;
}

json report_json(const BenchmarkReport& report) {
    json doc{{"v", 1}, {"trials", report.trials}, {"domains", report.domains}};

    json variants = json::array();
    for (const auto& run : report.runs) {
        json domains = json::object();
        for (const auto& d : report.domains) {
            std::vector<int> s;
            int n = 0;
            for (const auto& st : task_stats(run)) {
                if (st.domain != d) continue;
                s.push_back(st.successes);
                n = st.trials;
            }
            if (s.empty()) continue;
            json pk = json::object();
            for (int k = 1; k <= n; ++k) pk[std::to_string(k)] = mean_pass_hat_k(s, n, k);
            domains[d] = {{"tasks", s.size()}, {"pass_hat_k", pk},
                          {"pass1_percent", round_one_decimal(100.0 * mean_pass_hat_k(s, n, 1))}};
        }
        json tasks = json::array();
        for (const auto& st : task_stats(run)) {
            tasks.push_back({{"task_id", st.task_id},
                             {"domain", st.domain},
                             {"successes", st.successes},
                             {"trials", st.trials},
                             {"tool_calls", st.first->tool_calls},
                             {"roles", roles_doc(*st.first)}});
        }
        const auto tc = trial_consistency(run);
        variants.push_back({{"label", run.label()},
                            {"trial_consistency",
                             {{"identical", tc.identical},
                              {"pass1_by_trial", tc.pass1_by_trial},
                              {"pass1_variance", tc.pass1_variance},
                              {"differing_tasks", tc.differing_tasks}}},
                            {"variant", std::string(to_string(run.variant))},
                            {"toggles", run.toggles},
                            {"domains", domains},
                            {"average_pass1", average_of(run, report.domains)},
                            {"tasks", tasks}});
    }
    doc["variants"] = variants;

    json deltas = json::array();
    if (const auto* base = baseline_of(report)) {
        std::map<std::string, TaskStat> base_stats;
        for (const auto& st : task_stats(*base)) base_stats[st.task_id] = st;
        for (const auto& run : report.runs) {
            if (&run == base) continue;
            for (const auto& st : task_stats(run)) {
                auto it = base_stats.find(st.task_id);
                if (it == base_stats.end()) continue;
                const auto& b = it->second;
                const double ours = 100.0 * st.successes / st.trials;
                const double theirs = 100.0 * b.successes / b.trials;
                json d{{"task_id", st.task_id},
                       {"label", run.label()},
                       {"baseline", base->label()},
                       {"pass1_percent", round_one_decimal(ours)},
                       {"baseline_pass1_percent", round_one_decimal(theirs)},
                       {"pass1_delta", round_one_decimal(ours - theirs)},
                       {"tool_calls", st.first->tool_calls},
                       {"baseline_tool_calls", b.first->tool_calls}};
                d["tool_call_reduction_percent"] =
                    b.first->tool_calls > 0 ? json(reduction_percent(b.first->tool_calls, st.first->tool_calls)) : json();
                deltas.push_back(d);
            }
        }
    }
    doc["deltas"] = deltas;

    json cases = json::array();
    std::set<std::string> seen;
    for (const auto& run : report.runs) {
        for (const auto& r : run.results) {
            if (!r.case_study || r.trial != 0 || !seen.insert(r.task_id).second) continue;
            json rows = json::array();
            for (const auto& other : report.runs) {
                for (const auto& o : other.results) {
                    if (o.task_id == r.task_id && o.trial == 0) {
                        rows.push_back({{"label", other.label()}, {"roles", roles_doc(o)}, {"tool_calls", o.tool_calls}});
                    }
                }
            }
            cases.push_back({{"task_id", r.task_id}, {"domain", r.domain}, {"rows", rows}});
        }
    }
    doc["case_studies"] = cases;

    json ablation = json::array();
    for (const auto& row : report.ablation) {
        json d = json::object();
        for (const auto& [domain, v] : row.pass1) d[domain] = v;
        ablation.push_back({{"sca", row.sca}, {"dc", row.dc}, {"rt", row.rt}, {"pass1_percent", d}, {"average", row.average}});
    }
    doc["ablation"] = ablation;
    return doc;
}

std::string report_text(const BenchmarkReport& report) {
    std::ostringstream out;
    std::size_t label_w = 10;
    for (const auto& run : report.runs) label_w = std::max(label_w, run.label().size() + 2);

    out << "Pass^1 (%) by domain, " << report.trials << " trial(s) per task\n\n";
    out << pad("Variant", label_w);
    for (const auto& d : report.domains) out << pad(d, 10, true);
    out << pad("Avg", 10, true) << "\n";
    for (const auto& run : report.runs) {
        const auto scores = pass1_by_domain(run, report.domains);
        out << pad(run.label(), label_w);
        for (const auto& d : report.domains) {
            std::string cell = "-";
            for (const auto& [name, v] : scores) {
                if (name == d) cell = fmt("%.1f", v);
            }
            out << pad(cell, 10, true);
        }
        out << pad(fmt("%.1f", average_of(run, report.domains)), 10, true) << "\n";
    }

    const auto doc = report_json(report);
    if (!doc["case_studies"].empty()) {
        out << "\nTrajectory length and token use (trial 0)\n";
        for (const auto& c : doc["case_studies"]) {
            out << "\n" << c["domain"].get<std::string>() << " " << c["task_id"].get<std::string>() << "\n";
            out << pad("", label_w);
            for (const char* role : {"System", "User", "Assistant", "Tool"}) out << pad(role, 16, true);
            out << "\n" << pad("", label_w);
            for (int i = 0; i < 4; ++i) out << pad("Times", 7, true) << pad("Tokens", 9, true);
            out << "\n";
            for (const auto& row : c["rows"]) {
                out << pad(row["label"].get<std::string>(), label_w);
                for (const char* role : {"system", "user", "assistant", "tool"}) {
                    out << pad(std::to_string(row["roles"][role]["times"].get<int>()), 7, true)
                        << pad(std::to_string(row["roles"][role]["tokens"].get<std::uint64_t>()), 9, true);
                }
                out << "\n";
            }
        }
    }

    if (!doc["deltas"].empty()) {
        out << "\nPer-task change vs " << doc["deltas"][0]["baseline"].get<std::string>() << "\n\n";
        out << pad("Task", 8) << pad("Variant", label_w) << pad("Pass^1", 9, true) << pad("Base", 9, true)
            << pad("Delta", 9, true) << pad("Calls", 7, true) << pad("Base", 7, true) << pad("Reduction", 11, true)
            << "\n";
        for (const auto& d : doc["deltas"]) {
            if (d["label"].get<std::string>().rfind("blueprint", 0) != 0) continue;
            out << pad(d["task_id"].get<std::string>(), 8) << pad(d["label"].get<std::string>(), label_w)
                << pad(fmt("%.1f", d["pass1_percent"].get<double>()), 9, true)
                << pad(fmt("%.1f", d["baseline_pass1_percent"].get<double>()), 9, true)
                << pad(fmt("%+.1f", d["pass1_delta"].get<double>()), 9, true)
                << pad(std::to_string(d["tool_calls"].get<int>()), 7, true)
                << pad(std::to_string(d["baseline_tool_calls"].get<int>()), 7, true)
                << pad(d["tool_call_reduction_percent"].is_null()
                           ? std::string("-")
                           : fmt("%.1f%%", d["tool_call_reduction_percent"].get<double>()),
                       11, true)
                << "\n";
        }
    }

    if (!report.ablation.empty()) {
        out << "\nAblation (pass^1 %)\n\n";
        out << pad("SCA", 5) << pad("DC", 5) << pad("RT", 5);
        for (const auto& [d, _] : report.ablation.front().pass1) out << pad(d, 10, true);
        out << pad("Avg", 10, true) << "\n";
        for (const auto& row : report.ablation) {
            out << pad(mark(row.sca), 5) << pad(mark(row.dc), 5) << pad(mark(row.rt), 5);
            for (const auto& [_, v] : row.pass1) out << pad(fmt("%.1f", v), 10, true);
            out << pad(fmt("%.1f", row.average), 10, true) << "\n";
        }
    }
    return out.str();
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
    out.flush();
    if (!out) throw EngineError(ErrorClass::fatal, "cannot write " + path.string());
}

}  // namespace

void emit_report(BenchmarkReport& report, const fs::path& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir / "traces", ec);
    if (ec) throw EngineError(ErrorClass::fatal, "cannot create " + out_dir.string() + ": " + ec.message());
    if (report.domains.empty()) {
        std::vector<TrialResult> all;
        for (const auto& run : report.runs) all.insert(all.end(), run.results.begin(), run.results.end());
        report.domains = domains_in(all);
    }

    std::string lines;
    for (auto& run : report.runs) {
        const auto dir = out_dir / "traces" / slug(run.label());
        fs::create_directories(dir, ec);
        for (auto& r : run.results) {
            const auto path = dir / (r.task_id + "." + std::to_string(r.trial) + ".json");
            write_file(path, r.trace.dump(2) + "\n");
            r.trace_path = fs::relative(path, out_dir).string();
            json line = comparable(r);
            line.erase("telemetry");
            line["trial"] = r.trial;
            line["trace_path"] = r.trace_path;
            line["exec_id"] = r.exec_id;
            lines += line.dump() + "\n";
        }
    }
    write_file(out_dir / "results.jsonl", lines);
    write_file(out_dir / "report.json", report_json(report).dump(2) + "\n");
    write_file(out_dir / "report.txt", report_text(report));
}

}  // namespace bprun::bench
