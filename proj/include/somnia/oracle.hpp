#pragma once

// Independent reference implementations used to cross-check the production
// paths (tests and the CLI selftest). Deliberately naive: full-matrix DP,
// long-double accumulation, epoch-by-epoch counting. Keep them free of any
// code shared with the modules they verify.

#include <vector>

#include "somnia/hypnogram.hpp"

namespace somnia::oracle {

// Full (n+1) x (m+1) dynamic program, no band, no rolling rows.
double dtw_bruteforce(const std::vector<double>& a, const std::vector<double>& b);

struct NaiveStats {
    double trimmed_mean, mean, std, rmssd, mean_abs_succ_diff, max_abs_succ_diff;
};

// Same definitions as features::epoch_stats, evaluated in long double.
NaiveStats naive_stats(const std::vector<double>& values);

struct CountingMetrics {
    double accuracy;
    double macro_f1;
    double kappa;
    std::vector<double> recall;
    std::vector<double> precision;
};

// Epoch-by-epoch counting over label pairs; classes absent from both truth
// and prediction are skipped in the macro average.
CountingMetrics counting_metrics(const std::vector<int>& truth, const std::vector<int>& pred,
                                 int num_classes);

// Chance-corrected agreement estimated by label-permutation resampling:
// p_e is the mean observed agreement across `trials` random permutations of
// the predicted labels.
double kappa_by_permutation(const std::vector<int>& truth, const std::vector<int>& pred,
                            int trials, unsigned long long seed);

}  // namespace somnia::oracle
