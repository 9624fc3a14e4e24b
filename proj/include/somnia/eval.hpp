#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "somnia/error.hpp"
#include "somnia/hypnogram.hpp"

namespace somnia::eval {

struct ConfusionMatrix {
    std::vector<std::vector<long long>> counts;  // rows = true stage, cols = predicted
    std::vector<std::string> class_names;

    int num_classes() const { return static_cast<int>(counts.size()); }
    long long total() const;
    long long row_sum(int r) const;
    long long col_sum(int c) const;
    // rows with no epochs stay all-zero
    std::vector<std::vector<double>> row_normalized() const;
};

struct AgreementReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    double kappa = 0.0;
    std::vector<double> precision, recall, f1;
    long long total_epochs = 0;
};

// Epochs whose true or predicted stage is Unscored are excluded.
ConfusionMatrix confusion_matrix(const Hypnogram& truth, const Hypnogram& pred,
                                 int num_classes = kNumStages);
ConfusionMatrix confusion_from_labels(const std::vector<int>& truth, const std::vector<int>& pred,
                                      int num_classes);

// accuracy = trace/total; macro-F1 skips classes absent from both margins;
// kappa = (p_o - p_e)/(1 - p_e), defined as 0 when p_e == 1.
AgreementReport classification_metrics(const ConfusionMatrix& cm);

// --- binary sleep/wake -----------------------------------------------------

struct SessionBinaryMetrics {
    std::optional<double> sensitivity;  // empty when the session has no sleep
    std::optional<double> specificity;  // empty when the session has no wake
};

SessionBinaryMetrics sleep_wake_session_metrics(const Hypnogram& truth, const Hypnogram& pred);

struct CohortStat {
    double mean = 0.0, median = 0.0, sd = 0.0;  // sd is the sample SD
    int n = 0;
};

CohortStat cohort_stat(const std::vector<double>& values);

// --- sleep boundaries --------------------------------------------------------

struct SleepBoundaries {
    double onset_min = 0.0;   // start of the first sleep epoch, minutes from record start
    double offset_min = 0.0;  // end of the last sleep epoch
};

SleepBoundaries sleep_boundaries(const Hypnogram& h);  // throws NoSleepDetected

struct BoundaryErrorReport {
    double bias = 0.0;  // mean of (pred - true), minutes
    double mae = 0.0;
    double sd = 0.0;          // sample SD of the diffs
    double ci_low = 0.0, ci_high = 0.0;  // bias +/- 1.96 * sd / sqrt(n)
    int n = 0;
    std::vector<double> diffs;
};

BoundaryErrorReport boundary_error_stats(const std::vector<double>& diffs_minutes);

// --- duration agreement ------------------------------------------------------

struct BlandAltmanResult {
    double bias = 0.0;     // mean(pred - true), minutes
    double sd_diff = 0.0;  // sample SD of the diffs
    double loa_low = 0.0, loa_high = 0.0;  // bias -/+ 1.96 * sd_diff
    double loa_coverage = 0.0;             // fraction of diffs inside the limits
    double true_mean = 0.0, true_sd = 0.0;
    double pred_mean = 0.0, pred_sd = 0.0;
    int n = 0;
};

// durations[i] = per-session minutes of one stage
BlandAltmanResult stage_duration_bland_altman(const std::vector<double>& true_durations,
                                              const std::vector<double>& pred_durations);

// --- stratification ----------------------------------------------------------

enum class AhiGroup : int { Normal = 0, Mild = 1, Moderate = 2, Severe = 3 };
enum class SeGroup : int { High = 0, Mid = 1, Low = 2 };  // >=80, [60,80), <60

AhiGroup ahi_group(double ahi);
SeGroup se_group(double se_percent);
const char* ahi_group_name(AhiGroup g);
const char* se_group_name(SeGroup g);

struct GroupStats {
    std::string name;
    int n = 0;
    CohortStat accuracy, macro_f1, kappa;
};

// --- whole-cohort evaluation ---------------------------------------------------

struct SessionEval {
    std::string session_id;
    std::string subject_id;
    double ahi = 0.0;
    double se_percent = 0.0;  // PSG-derived sleep efficiency
    Hypnogram truth, pred;

    AgreementReport metrics;  // per-session four-class metrics
    SessionBinaryMetrics binary;
    std::optional<double> onset_diff_min, offset_diff_min;
    std::vector<double> true_durations, pred_durations;  // per stage, minutes
};

SessionEval make_session_eval(std::string session_id, std::string subject_id, double ahi,
                              const Hypnogram& truth, const Hypnogram& pred);

struct CohortReport {
    int n_sessions = 0;
    ConfusionMatrix pooled_cm;
    AgreementReport pooled;          // epoch-pooled four-class
    AgreementReport pooled_binary;   // epoch-pooled sleep/wake
    CohortStat accuracy_stat, macro_f1_stat, kappa_stat;  // subject-level
    CohortStat sensitivity_stat, specificity_stat;
    BoundaryErrorReport onset, offset;
    std::array<BlandAltmanResult, kNumStages> bland_altman;
    std::vector<GroupStats> by_ahi;  // 4 groups, empty groups kept with n = 0
    std::vector<GroupStats> by_se;   // 3 groups
};

CohortReport evaluate_cohort(const std::vector<SessionEval>& sessions);

// --- report output -------------------------------------------------------------

// report.json, report.txt, per_session.csv, confusion CSVs, boundary and
// Bland-Altman CSVs under out_dir
void write_reports(const CohortReport& report, const std::vector<SessionEval>& sessions,
                   const std::string& out_dir);
std::string render_text_report(const CohortReport& report);

}  // namespace somnia::eval
