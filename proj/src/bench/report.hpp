#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "bench/trial.hpp"

namespace bprun::bench {

// All trials of one agent variant (one toggle setting for blueprints).
struct VariantRun {
    Variant variant = Variant::blueprint;
    nlohmann::json toggles = nlohmann::json::object();
    std::vector<TrialResult> results;

    std::string label() const { return variant_label(variant, toggles); }
};

struct AblationRow {
    bool sca = true;
    bool dc = true;
    bool rt = true;
    std::vector<std::pair<std::string, double>> pass1;  // domain -> percent, one decimal
    double average = 0.0;
};

// Rows in the order ✗✗✗, ✓✗✗, ✓✓✗, ✓✗✓, ✓✓✓ restricted to the toggles in
// `grid`; toggles outside the grid stay on. sca=off is the FC baseline, so
// dc and rt do not vary under it.
struct AblationCell {
    bool sca, dc, rt;
};
std::vector<AblationCell> ablation_cells(const std::set<std::string>& grid);

// Parses "sca,dc,rt" (any subset). Throws ValidationError on unknown names.
std::set<std::string> parse_grid(const std::string& text);

struct AblationResult {
    std::vector<AblationRow> rows;
    std::vector<VariantRun> runs;  // one per row, same order
};

AblationResult run_ablation(Harness& harness, const std::vector<const BenchmarkTask*>& tasks,
                            const std::set<std::string>& grid, int trials, int concurrency);

struct BenchmarkReport {
    int trials = 1;
    std::vector<std::string> domains;
    std::vector<VariantRun> runs;  // the first fc run (if any) is the delta baseline
    std::vector<AblationRow> ablation;
};

struct BenchRequest {
    std::string domain = "all";
    Variant variant = Variant::blueprint;
    nlohmann::json toggles = nlohmann::json::object();
    int trials = 1;
    int concurrency = 2;
    bool with_baseline = true;  // also run fc so the report has deltas
};

// The requested run is always the last one in `runs`.
BenchmarkReport run_benchmark(Harness& harness, const BenchRequest& request);

// Across the trials of one run: whether every task's comparable result is
// the same in every trial, and the spread of per-trial pass^1.
struct TrialConsistency {
    bool identical = true;
    std::vector<double> pass1_by_trial;  // percent, domain-weighted
    double pass1_variance = 0.0;
    std::vector<std::string> differing_tasks;
};
TrialConsistency trial_consistency(const VariantRun& run);

// Per-domain pass^1 (percent, one decimal) of one run, in `domains` order.
std::vector<std::pair<std::string, double>> pass1_by_domain(const VariantRun& run,
                                                           const std::vector<std::string>& domains);

nlohmann::json report_json(const BenchmarkReport& report);
std::string report_text(const BenchmarkReport& report);

// Writes report.json, report.txt, results.jsonl and traces/<label>/<task>.<trial>.json
// under `out_dir`. Trace paths are stored back into the results. Throws
// EngineError(fatal) on write failure.
void emit_report(BenchmarkReport& report, const std::filesystem::path& out_dir);

}  // namespace bprun::bench
