#include "somnia/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "somnia/rng.hpp"

namespace somnia::oracle {

double dtw_bruteforce(const std::vector<double>& a, const std::vector<double>& b) {
    const int n = static_cast<int>(a.size());
    const int m = static_cast<int>(b.size());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> dp(n + 1, std::vector<double>(m + 1, inf));
    dp[0][0] = 0.0;
    for (int i = 1; i <= n; ++i) {
        for (int j = 1; j <= m; ++j) {
            const double cost = std::fabs(a[i - 1] - b[j - 1]);
            dp[i][j] = cost + std::min({dp[i - 1][j], dp[i][j - 1], dp[i - 1][j - 1]});
        }
    }
    return dp[n][m];
}

NaiveStats naive_stats(const std::vector<double>& values) {
    const int n = static_cast<int>(values.size());
    NaiveStats s{};
    long double sum = 0.0L;
    for (double v : values) sum += v;
    s.mean = static_cast<double>(sum / n);

    long double var = 0.0L;
    for (double v : values) var += (static_cast<long double>(v) - s.mean) * (v - s.mean);
    s.std = static_cast<double>(std::sqrt(static_cast<double>(var / n)));

    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    const int drop = static_cast<int>(std::floor(0.1 * n));
    long double tsum = 0.0L;
    for (int i = drop; i < n - drop; ++i) tsum += sorted[i];
    s.trimmed_mean = static_cast<double>(tsum / (n - 2 * drop));

    if (n >= 2) {
        long double sq = 0.0L, asum = 0.0L;
        double amax = 0.0;
        for (int i = 1; i < n; ++i) {
            const double d = values[i] - values[i - 1];
            sq += static_cast<long double>(d) * d;
            asum += std::fabs(d);
            amax = std::max(amax, std::fabs(d));
        }
        s.rmssd = static_cast<double>(std::sqrt(static_cast<double>(sq / (n - 1))));
        s.mean_abs_succ_diff = static_cast<double>(asum / (n - 1));
        s.max_abs_succ_diff = amax;
    }
    return s;
}

CountingMetrics counting_metrics(const std::vector<int>& truth, const std::vector<int>& pred,
                                 int num_classes) {
    CountingMetrics out{};
    const int n = static_cast<int>(truth.size());
    int agree = 0;
    std::vector<int> tp(num_classes, 0), in_true(num_classes, 0), in_pred(num_classes, 0);
    for (int i = 0; i < n; ++i) {
        if (truth[i] == pred[i]) {
            ++agree;
            ++tp[truth[i]];
        }
        ++in_true[truth[i]];
        ++in_pred[pred[i]];
    }
    out.accuracy = n > 0 ? static_cast<double>(agree) / n : 0.0;

    out.recall.assign(num_classes, 0.0);
    out.precision.assign(num_classes, 0.0);
    double f1_sum = 0.0;
    int f1_classes = 0;
    for (int c = 0; c < num_classes; ++c) {
        out.recall[c] = in_true[c] > 0 ? static_cast<double>(tp[c]) / in_true[c] : 0.0;
        out.precision[c] = in_pred[c] > 0 ? static_cast<double>(tp[c]) / in_pred[c] : 0.0;
        if (in_true[c] == 0 && in_pred[c] == 0) continue;  // absent in both
        const double p = out.precision[c], r = out.recall[c];
        f1_sum += (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
        ++f1_classes;
    }
    out.macro_f1 = f1_classes > 0 ? f1_sum / f1_classes : 0.0;

    double pe = 0.0;
    for (int c = 0; c < num_classes; ++c)
        pe += (static_cast<double>(in_true[c]) / n) * (static_cast<double>(in_pred[c]) / n);
    out.kappa = pe >= 1.0 ? 0.0 : (out.accuracy - pe) / (1.0 - pe);
    return out;
}

double kappa_by_permutation(const std::vector<int>& truth, const std::vector<int>& pred,
                            int trials, unsigned long long seed) {
    const int n = static_cast<int>(truth.size());
    int agree = 0;
    for (int i = 0; i < n; ++i)
        if (truth[i] == pred[i]) ++agree;
    const double po = static_cast<double>(agree) / n;

    Rng rng(seed);
    std::vector<int> shuffled = pred;
    double pe_sum = 0.0;
    for (int t = 0; t < trials; ++t) {
        for (int i = n - 1; i > 0; --i) {
            const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
            std::swap(shuffled[i], shuffled[j]);
        }
        int a = 0;
        for (int i = 0; i < n; ++i)
            if (truth[i] == shuffled[i]) ++a;
        pe_sum += static_cast<double>(a) / n;
    }
    const double pe = pe_sum / trials;
    return pe >= 1.0 ? 0.0 : (po - pe) / (1.0 - pe);
}

}  // namespace somnia::oracle
