#pragma once

#include <cstdint>
#include <vector>

namespace bprun::bench {

// C(s,k) / C(n,k): probability that k trials drawn without replacement from
// n (with s successes) all succeed. pass^1 = s/n. Throws ValidationError for
// k > n, k < 1 or s outside [0, n].
double pass_hat_k(int n, int s, int k);

// Mean over per-task pass^k values.
double mean_pass_hat_k(const std::vector<int>& successes_per_task, int n, int k);

// Every domain weighs the same regardless of its task count.
double domain_weighted_average(const std::vector<double>& domain_scores);

// (baseline - ours) / baseline * 100, rounded to one decimal.
double reduction_percent(double baseline, double ours);

// Half-up rounding at one decimal, robust to binary representation
// (43.55 -> 43.6).
double round_one_decimal(double value);

}  // namespace bprun::bench
