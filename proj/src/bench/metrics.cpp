#include "bench/metrics.hpp"

#include <cmath>

#include "protocol/error.hpp"

namespace bprun::bench {

double pass_hat_k(int n, int s, int k) {
    if (n < 1 || k < 1 || k > n) throw ValidationError("pass^k needs 1 <= k <= n");
    if (s < 0 || s > n) throw ValidationError("pass^k needs 0 <= s <= n");
    if (s < k) return 0.0;
    // Product form of C(s,k)/C(n,k) avoids overflow.
    double p = 1.0;
    for (int i = 0; i < k; ++i) p *= static_cast<double>(s - i) / static_cast<double>(n - i);
    return p;
}

double mean_pass_hat_k(const std::vector<int>& successes_per_task, int n, int k) {
    if (successes_per_task.empty()) return 0.0;
    double sum = 0.0;
    for (int s : successes_per_task) sum += pass_hat_k(n, s, k);
    return sum / static_cast<double>(successes_per_task.size());
}

double domain_weighted_average(const std::vector<double>& domain_scores) {
    if (domain_scores.empty()) throw ValidationError("domain_weighted_average needs at least one domain");
    double sum = 0.0;
    for (double v : domain_scores) sum += v;
    return sum / static_cast<double>(domain_scores.size());
}

double round_one_decimal(double value) {
    const double sign = value < 0 ? -1.0 : 1.0;
    return sign * std::floor(std::fabs(value) * 10.0 + 0.5 + 1e-9) / 10.0;
}

double reduction_percent(double baseline, double ours) {
    if (baseline == 0.0) throw ValidationError("reduction_percent needs a non-zero baseline");
    return round_one_decimal((baseline - ours) / baseline * 100.0);
}

}  // namespace bprun::bench
