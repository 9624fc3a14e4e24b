#include "somnia/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace somnia::eval {

namespace {

double sample_sd(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / (static_cast<double>(v.size()) - 1.0));
}

std::vector<std::string> default_class_names(int n) {
    if (n == kNumStages) return {"Wake", "Light", "Deep", "REM"};
    if (n == 2) return {"Wake", "Sleep"};
    std::vector<std::string> names;
    for (int i = 0; i < n; ++i) names.push_back("class" + std::to_string(i));
    return names;
}

}  // namespace

long long ConfusionMatrix::total() const {
    long long t = 0;
    for (const auto& row : counts)
        for (long long v : row) t += v;
    return t;
}

long long ConfusionMatrix::row_sum(int r) const {
    long long t = 0;
    for (long long v : counts[r]) t += v;
    return t;
}

long long ConfusionMatrix::col_sum(int c) const {
    long long t = 0;
    for (const auto& row : counts) t += row[c];
    return t;
}

std::vector<std::vector<double>> ConfusionMatrix::row_normalized() const {
    std::vector<std::vector<double>> out(counts.size(),
                                         std::vector<double>(counts.size(), 0.0));
    for (std::size_t r = 0; r < counts.size(); ++r) {
        const long long rs = row_sum(static_cast<int>(r));
        if (rs == 0) continue;
        for (std::size_t c = 0; c < counts.size(); ++c)
            out[r][c] = static_cast<double>(counts[r][c]) / static_cast<double>(rs);
    }
    return out;
}

ConfusionMatrix confusion_from_labels(const std::vector<int>& truth, const std::vector<int>& pred,
                                      int num_classes) {
    require(truth.size() == pred.size(), "LengthMismatch", "hypnogram lengths differ");
    ConfusionMatrix cm;
    cm.class_names = default_class_names(num_classes);
    cm.counts.assign(num_classes, std::vector<long long>(num_classes, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || pred[i] < 0) continue;  // unscored
        require(truth[i] < num_classes && pred[i] < num_classes, "LabelOutOfRange",
                "label outside class range");
        ++cm.counts[truth[i]][pred[i]];
    }
    return cm;
}

ConfusionMatrix confusion_matrix(const Hypnogram& truth, const Hypnogram& pred, int num_classes) {
    require(truth.stages.size() == pred.stages.size(), "LengthMismatch",
            "hypnogram lengths differ");
    std::vector<int> t(truth.stages.size()), p(pred.stages.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = is_scored(truth.stages[i]) ? static_cast<int>(truth.stages[i]) : -1;
        p[i] = is_scored(pred.stages[i]) ? static_cast<int>(pred.stages[i]) : -1;
    }
    return confusion_from_labels(t, p, num_classes);
}

AgreementReport classification_metrics(const ConfusionMatrix& cm) {
    AgreementReport r;
    const int C = cm.num_classes();
    const long long total = cm.total();
    require(total > 0, "EmptyMatrix", "confusion matrix has no scored epochs");
    r.total_epochs = total;

    long long trace = 0;
    for (int c = 0; c < C; ++c) trace += cm.counts[c][c];
    r.accuracy = static_cast<double>(trace) / static_cast<double>(total);

    r.precision.assign(C, 0.0);
    r.recall.assign(C, 0.0);
    r.f1.assign(C, 0.0);
    double f1_sum = 0.0;
    int f1_classes = 0;
    double pe = 0.0;
    for (int c = 0; c < C; ++c) {
        const long long rs = cm.row_sum(c), cs = cm.col_sum(c);
        r.recall[c] = rs > 0 ? static_cast<double>(cm.counts[c][c]) / rs : 0.0;
        r.precision[c] = cs > 0 ? static_cast<double>(cm.counts[c][c]) / cs : 0.0;
        const double pr = r.precision[c] + r.recall[c];
        r.f1[c] = pr > 0.0 ? 2.0 * r.precision[c] * r.recall[c] / pr : 0.0;
        if (rs > 0 || cs > 0) {  // absent from both margins -> excluded
            f1_sum += r.f1[c];
            ++f1_classes;
        }
        pe += (static_cast<double>(rs) / total) * (static_cast<double>(cs) / total);
    }
    r.macro_f1 = f1_classes > 0 ? f1_sum / f1_classes : 0.0;
    r.kappa = pe >= 1.0 ? 0.0 : (r.accuracy - pe) / (1.0 - pe);  // degenerate p_e -> 0
    return r;
}

SessionBinaryMetrics sleep_wake_session_metrics(const Hypnogram& truth, const Hypnogram& pred) {
    require(truth.stages.size() == pred.stages.size(), "LengthMismatch",
            "hypnogram lengths differ");
    long long sleep_total = 0, sleep_hit = 0, wake_total = 0, wake_hit = 0;
    for (std::size_t i = 0; i < truth.stages.size(); ++i) {
        if (!is_scored(truth.stages[i]) || !is_scored(pred.stages[i])) continue;
        if (is_sleep(truth.stages[i])) {
            ++sleep_total;
            if (is_sleep(pred.stages[i])) ++sleep_hit;
        } else {
            ++wake_total;
            if (!is_sleep(pred.stages[i])) ++wake_hit;
        }
    }
    SessionBinaryMetrics m;
    if (sleep_total > 0) m.sensitivity = static_cast<double>(sleep_hit) / sleep_total;
    if (wake_total > 0) m.specificity = static_cast<double>(wake_hit) / wake_total;
    return m;
}

CohortStat cohort_stat(const std::vector<double>& values) {
    CohortStat s;
    s.n = static_cast<int>(values.size());
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / s.n;
    s.sd = sample_sd(values, s.mean);
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t k = sorted.size() / 2;
    s.median = sorted.size() % 2 == 1 ? sorted[k] : 0.5 * (sorted[k - 1] + sorted[k]);
    return s;
}

SleepBoundaries sleep_boundaries(const Hypnogram& h) {
    require(!h.stages.empty(), "EmptySignal", "empty hypnogram");
    int first = -1, last = -1;
    for (int e = 0; e < h.num_epochs(); ++e) {
        if (is_sleep(h.stages[e])) {
            if (first < 0) first = e;
            last = e;
        }
    }
    require(first >= 0, "NoSleepDetected", "hypnogram contains no sleep epoch");
    SleepBoundaries b;
    b.onset_min = first * kEpochMinutes;
    b.offset_min = (last + 1) * kEpochMinutes;
    return b;
}

BoundaryErrorReport boundary_error_stats(const std::vector<double>& diffs_minutes) {
    require(diffs_minutes.size() >= 2, "TooFewSessions",
            "boundary statistics need at least two sessions");
    BoundaryErrorReport r;
    r.diffs = diffs_minutes;
    r.n = static_cast<int>(diffs_minutes.size());
    double sum = 0.0, abs_sum = 0.0;
    for (double d : diffs_minutes) {
        sum += d;
        abs_sum += std::abs(d);
    }
    r.bias = sum / r.n;
    r.mae = abs_sum / r.n;
    r.sd = sample_sd(diffs_minutes, r.bias);
    const double half = 1.96 * r.sd / std::sqrt(static_cast<double>(r.n));
    r.ci_low = r.bias - half;
    r.ci_high = r.bias + half;
    return r;
}

BlandAltmanResult stage_duration_bland_altman(const std::vector<double>& true_durations,
                                              const std::vector<double>& pred_durations) {
    require(true_durations.size() == pred_durations.size(), "LengthMismatch",
            "duration vectors differ in length");
    require(true_durations.size() >= 2, "TooFewSessions",
            "Bland-Altman needs at least two sessions");
    BlandAltmanResult r;
    r.n = static_cast<int>(true_durations.size());
    std::vector<double> diffs(r.n);
    double tsum = 0.0, psum = 0.0, dsum = 0.0;
    for (int i = 0; i < r.n; ++i) {
        diffs[i] = pred_durations[i] - true_durations[i];
        tsum += true_durations[i];
        psum += pred_durations[i];
        dsum += diffs[i];
    }
    r.true_mean = tsum / r.n;
    r.pred_mean = psum / r.n;
    r.bias = dsum / r.n;
    r.true_sd = sample_sd(true_durations, r.true_mean);
    r.pred_sd = sample_sd(pred_durations, r.pred_mean);
    r.sd_diff = sample_sd(diffs, r.bias);
    r.loa_low = r.bias - 1.96 * r.sd_diff;
    r.loa_high = r.bias + 1.96 * r.sd_diff;
    int inside = 0;
    for (double d : diffs)
        if (d >= r.loa_low && d <= r.loa_high) ++inside;
    r.loa_coverage = static_cast<double>(inside) / r.n;
    return r;
}

AhiGroup ahi_group(double ahi) {
    if (ahi <= 5.0) return AhiGroup::Normal;
    if (ahi <= 15.0) return AhiGroup::Mild;
    if (ahi <= 30.0) return AhiGroup::Moderate;
    return AhiGroup::Severe;
}

SeGroup se_group(double se_percent) {
    if (se_percent >= 80.0) return SeGroup::High;
    if (se_percent >= 60.0) return SeGroup::Mid;
    return SeGroup::Low;
}

const char* ahi_group_name(AhiGroup g) {
    switch (g) {
        case AhiGroup::Normal: return "Normal (AHI <= 5)";
        case AhiGroup::Mild: return "Mild (5 < AHI <= 15)";
        case AhiGroup::Moderate: return "Moderate (15 < AHI <= 30)";
        default: return "Severe (AHI > 30)";
    }
}

const char* se_group_name(SeGroup g) {
    switch (g) {
        case SeGroup::High: return "SE >= 80%";
        case SeGroup::Mid: return "60% <= SE < 80%";
        default: return "SE < 60%";
    }
}

SessionEval make_session_eval(std::string session_id, std::string subject_id, double ahi,
                              const Hypnogram& truth, const Hypnogram& pred) {
    SessionEval s;
    s.session_id = std::move(session_id);
    s.subject_id = std::move(subject_id);
    s.ahi = ahi;
    s.truth = truth;
    s.pred = pred;
    s.se_percent = summarize_sleep(truth).se_percent;
    s.metrics = classification_metrics(confusion_matrix(truth, pred));
    s.binary = sleep_wake_session_metrics(truth, pred);
    s.true_durations = stage_durations_min(truth);
    s.pred_durations = stage_durations_min(pred);
    try {
        const auto bt = sleep_boundaries(truth);
        const auto bp = sleep_boundaries(pred);
        s.onset_diff_min = bp.onset_min - bt.onset_min;
        s.offset_diff_min = bp.offset_min - bt.offset_min;
    } catch (const Error&) {
        // all-wake on either side: boundaries undefined for this session
    }
    return s;
}

namespace {

GroupStats stats_for_group(const std::string& name, const std::vector<const SessionEval*>& group) {
    GroupStats g;
    g.name = name;
    g.n = static_cast<int>(group.size());
    std::vector<double> acc, f1, kap;
    for (const auto* s : group) {
        acc.push_back(s->metrics.accuracy);
        f1.push_back(s->metrics.macro_f1);
        kap.push_back(s->metrics.kappa);
    }
    g.accuracy = cohort_stat(acc);
    g.macro_f1 = cohort_stat(f1);
    g.kappa = cohort_stat(kap);
    return g;
}

}  // namespace

CohortReport evaluate_cohort(const std::vector<SessionEval>& sessions) {
    require(!sessions.empty(), "EmptyDataset", "no sessions to evaluate");
    CohortReport r;
    r.n_sessions = static_cast<int>(sessions.size());

    // epoch-pooled confusion (4-class and sleep/wake collapsed)
    r.pooled_cm.class_names = {"Wake", "Light", "Deep", "REM"};
    r.pooled_cm.counts.assign(kNumStages, std::vector<long long>(kNumStages, 0));
    ConfusionMatrix bin;
    bin.class_names = {"Wake", "Sleep"};
    bin.counts.assign(2, std::vector<long long>(2, 0));
    for (const auto& s : sessions) {
        for (std::size_t i = 0; i < s.truth.stages.size(); ++i) {
            const Stage t = s.truth.stages[i], p = s.pred.stages[i];
            if (!is_scored(t) || !is_scored(p)) continue;
            ++r.pooled_cm.counts[static_cast<int>(t)][static_cast<int>(p)];
            ++bin.counts[is_sleep(t) ? 1 : 0][is_sleep(p) ? 1 : 0];
        }
    }
    r.pooled = classification_metrics(r.pooled_cm);
    r.pooled_binary = classification_metrics(bin);

    // subject-level aggregation
    std::vector<double> acc, f1, kap, sens, spec, onset_diffs, offset_diffs;
    for (const auto& s : sessions) {
        acc.push_back(s.metrics.accuracy);
        f1.push_back(s.metrics.macro_f1);
        kap.push_back(s.metrics.kappa);
        if (s.binary.sensitivity) sens.push_back(*s.binary.sensitivity);
        if (s.binary.specificity) spec.push_back(*s.binary.specificity);
        if (s.onset_diff_min) onset_diffs.push_back(*s.onset_diff_min);
        if (s.offset_diff_min) offset_diffs.push_back(*s.offset_diff_min);
    }
    r.accuracy_stat = cohort_stat(acc);
    r.macro_f1_stat = cohort_stat(f1);
    r.kappa_stat = cohort_stat(kap);
    r.sensitivity_stat = cohort_stat(sens);
    r.specificity_stat = cohort_stat(spec);
    if (onset_diffs.size() >= 2) r.onset = boundary_error_stats(onset_diffs);
    if (offset_diffs.size() >= 2) r.offset = boundary_error_stats(offset_diffs);

    for (int st = 0; st < kNumStages; ++st) {
        std::vector<double> td, pd;
        for (const auto& s : sessions) {
            td.push_back(s.true_durations[st]);
            pd.push_back(s.pred_durations[st]);
        }
        if (td.size() >= 2) r.bland_altman[st] = stage_duration_bland_altman(td, pd);
    }

    for (int g = 0; g < 4; ++g) {
        std::vector<const SessionEval*> members;
        for (const auto& s : sessions)
            if (ahi_group(s.ahi) == static_cast<AhiGroup>(g)) members.push_back(&s);
        r.by_ahi.push_back(stats_for_group(ahi_group_name(static_cast<AhiGroup>(g)), members));
    }
    for (int g = 0; g < 3; ++g) {
        std::vector<const SessionEval*> members;
        for (const auto& s : sessions)
            if (se_group(s.se_percent) == static_cast<SeGroup>(g)) members.push_back(&s);
        r.by_se.push_back(stats_for_group(se_group_name(static_cast<SeGroup>(g)), members));
    }
    return r;
}

// --- output ------------------------------------------------------------------

namespace {

using nlohmann::json;

json stat_json(const CohortStat& s) {
    return json{{"mean", s.mean}, {"median", s.median}, {"sd", s.sd}, {"n", s.n}};
}

json boundary_json(const BoundaryErrorReport& b) {
    return json{{"bias_min", b.bias},   {"mae_min", b.mae},     {"sd_min", b.sd},
                {"ci_low", b.ci_low},   {"ci_high", b.ci_high}, {"n", b.n}};
}

json ba_json(const BlandAltmanResult& b) {
    return json{{"bias_min", b.bias},
                {"sd_diff_min", b.sd_diff},
                {"loa_low", b.loa_low},
                {"loa_high", b.loa_high},
                {"loa_coverage", b.loa_coverage},
                {"true_mean", b.true_mean},
                {"true_sd", b.true_sd},
                {"pred_mean", b.pred_mean},
                {"pred_sd", b.pred_sd},
                {"n", b.n}};
}

json group_json(const GroupStats& g) {
    return json{{"group", g.name},
                {"n", g.n},
                {"accuracy", stat_json(g.accuracy)},
                {"macro_f1", stat_json(g.macro_f1)},
                {"kappa", stat_json(g.kappa)}};
}

json report_json(const CohortReport& r) {
    json j;
    j["n_sessions"] = r.n_sessions;
    j["pooled"] = {{"accuracy", r.pooled.accuracy},
                   {"macro_f1", r.pooled.macro_f1},
                   {"kappa", r.pooled.kappa},
                   {"epochs", r.pooled.total_epochs},
                   {"per_class_f1", r.pooled.f1},
                   {"per_class_recall", r.pooled.recall},
                   {"per_class_precision", r.pooled.precision}};
    j["pooled_binary"] = {{"accuracy", r.pooled_binary.accuracy},
                          {"macro_f1", r.pooled_binary.macro_f1},
                          {"kappa", r.pooled_binary.kappa}};
    j["confusion_counts"] = r.pooled_cm.counts;
    j["confusion_row_normalized"] = r.pooled_cm.row_normalized();
    j["subject_level"] = {{"accuracy", stat_json(r.accuracy_stat)},
                          {"macro_f1", stat_json(r.macro_f1_stat)},
                          {"kappa", stat_json(r.kappa_stat)},
                          {"sleep_sensitivity", stat_json(r.sensitivity_stat)},
                          {"sleep_specificity", stat_json(r.specificity_stat)}};
    j["boundaries"] = {{"onset", boundary_json(r.onset)}, {"offset", boundary_json(r.offset)}};
    json ba;
    const char* stage_names[] = {"Wake", "Light", "Deep", "REM"};
    for (int s = 0; s < kNumStages; ++s) ba[stage_names[s]] = ba_json(r.bland_altman[s]);
    j["bland_altman"] = ba;
    j["by_ahi"] = json::array();
    for (const auto& g : r.by_ahi) j["by_ahi"].push_back(group_json(g));
    j["by_se"] = json::array();
    for (const auto& g : r.by_se) j["by_se"].push_back(group_json(g));
    return j;
}

std::string fmt(double v, int prec = 3) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

}  // namespace

std::string render_text_report(const CohortReport& r) {
    std::ostringstream os;
    const char* stage_names[] = {"Wake", "Light", "Deep", "REM"};
    os << "=== staging agreement report (" << r.n_sessions << " sessions, "
       << r.pooled.total_epochs << " scored epochs) ===\n\n";
    os << "Epoch-pooled  4-class: accuracy " << fmt(r.pooled.accuracy) << "  macro-F1 "
       << fmt(r.pooled.macro_f1) << "  kappa " << fmt(r.pooled.kappa) << "\n";
    os << "Epoch-pooled  binary : accuracy " << fmt(r.pooled_binary.accuracy) << "  macro-F1 "
       << fmt(r.pooled_binary.macro_f1) << "  kappa " << fmt(r.pooled_binary.kappa) << "\n\n";

    os << "Subject-level (mean +/- sd, median):\n";
    auto stat_line = [&](const char* name, const CohortStat& s) {
        os << "  " << name << ": " << fmt(s.mean) << " +/- " << fmt(s.sd) << " (median "
           << fmt(s.median) << ", n=" << s.n << ")\n";
    };
    stat_line("accuracy         ", r.accuracy_stat);
    stat_line("macro-F1         ", r.macro_f1_stat);
    stat_line("kappa            ", r.kappa_stat);
    stat_line("sleep sensitivity", r.sensitivity_stat);
    stat_line("sleep specificity", r.specificity_stat);

    os << "\nRow-normalized confusion (true x predicted):\n";
    const auto rn = r.pooled_cm.row_normalized();
    os << "           ";
    for (int c = 0; c < kNumStages; ++c) os << stage_names[c] << "\t";
    os << "\n";
    for (int t = 0; t < kNumStages; ++t) {
        os << "  " << stage_names[t] << "\t";
        for (int c = 0; c < kNumStages; ++c) os << fmt(rn[t][c]) << "\t";
        os << "\n";
    }

    os << "\nSleep boundaries (prediction - truth, minutes):\n";
    os << "  onset : bias " << fmt(r.onset.bias, 2) << "  MAE " << fmt(r.onset.mae, 2)
       << "  95% CI [" << fmt(r.onset.ci_low, 2) << ", " << fmt(r.onset.ci_high, 2) << "]  (n="
       << r.onset.n << ")\n";
    os << "  offset: bias " << fmt(r.offset.bias, 2) << "  MAE " << fmt(r.offset.mae, 2)
       << "  95% CI [" << fmt(r.offset.ci_low, 2) << ", " << fmt(r.offset.ci_high, 2) << "]  (n="
       << r.offset.n << ")\n";

    os << "\nStage duration agreement (minutes):\n";
    os << "  stage  true(mean+/-sd)    pred(mean+/-sd)    diff(bias+/-sd)    LoA           "
          "coverage\n";
    for (int s = 0; s < kNumStages; ++s) {
        const auto& b = r.bland_altman[s];
        os << "  " << stage_names[s] << "\t" << fmt(b.true_mean, 1) << " +/- " << fmt(b.true_sd, 1)
           << "\t" << fmt(b.pred_mean, 1) << " +/- " << fmt(b.pred_sd, 1) << "\t"
           << fmt(b.bias, 1) << " +/- " << fmt(b.sd_diff, 1) << "\t[" << fmt(b.loa_low, 1) << ", "
           << fmt(b.loa_high, 1) << "]\t" << fmt(b.loa_coverage, 3) << "\n";
    }

    auto group_table = [&](const char* title, const std::vector<GroupStats>& groups) {
        os << "\n" << title << ":\n";
        for (const auto& g : groups) {
            os << "  " << g.name << " (N=" << g.n << ")";
            if (g.n > 0)
                os << ": accuracy " << fmt(g.accuracy.mean) << " +/- " << fmt(g.accuracy.sd)
                   << "  F1 " << fmt(g.macro_f1.mean) << " +/- " << fmt(g.macro_f1.sd)
                   << "  kappa " << fmt(g.kappa.mean) << " +/- " << fmt(g.kappa.sd);
            os << "\n";
        }
    };
    group_table("By AHI severity", r.by_ahi);
    group_table("By sleep efficiency", r.by_se);
    return os.str();
}

void write_reports(const CohortReport& report, const std::vector<SessionEval>& sessions,
                   const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const auto path = [&](const char* name) { return (fs::path(out_dir) / name).string(); };

    {
        std::ofstream out(path("report.json"));
        require(out.good(), "IoError", "cannot write report.json");
        out << report_json(report).dump(2) << "\n";
    }
    {
        std::ofstream out(path("report.txt"));
        require(out.good(), "IoError", "cannot write report.txt");
        out << render_text_report(report);
    }
    {
        std::ofstream out(path("per_session.csv"));
        require(out.good(), "IoError", "cannot write per_session.csv");
        out << "session_id,subject_id,ahi,se_percent,accuracy,macro_f1,kappa,"
               "sensitivity,specificity,onset_diff_min,offset_diff_min,"
               "true_wake_min,true_light_min,true_deep_min,true_rem_min,"
               "pred_wake_min,pred_light_min,pred_deep_min,pred_rem_min\n";
        for (const auto& s : sessions) {
            out << s.session_id << ',' << s.subject_id << ',' << s.ahi << ',' << s.se_percent
                << ',' << s.metrics.accuracy << ',' << s.metrics.macro_f1 << ','
                << s.metrics.kappa << ',';
            if (s.binary.sensitivity) out << *s.binary.sensitivity;
            out << ',';
            if (s.binary.specificity) out << *s.binary.specificity;
            out << ',';
            if (s.onset_diff_min) out << *s.onset_diff_min;
            out << ',';
            if (s.offset_diff_min) out << *s.offset_diff_min;
            for (double v : s.true_durations) out << ',' << v;
            for (double v : s.pred_durations) out << ',' << v;
            out << '\n';
        }
    }
    {
        std::ofstream out(path("confusion_counts.csv"));
        out << "true\\pred,Wake,Light,Deep,REM\n";
        const char* names[] = {"Wake", "Light", "Deep", "REM"};
        for (int t = 0; t < kNumStages; ++t) {
            out << names[t];
            for (int c = 0; c < kNumStages; ++c) out << ',' << report.pooled_cm.counts[t][c];
            out << '\n';
        }
    }
    {
        std::ofstream out(path("boundary_errors.csv"));
        out << "session_id,onset_diff_min,offset_diff_min\n";
        for (const auto& s : sessions) {
            out << s.session_id << ',';
            if (s.onset_diff_min) out << *s.onset_diff_min;
            out << ',';
            if (s.offset_diff_min) out << *s.offset_diff_min;
            out << '\n';
        }
    }
    {
        std::ofstream out(path("bland_altman.csv"));
        out << "stage,bias_min,sd_diff_min,loa_low,loa_high,loa_coverage,true_mean,true_sd,"
               "pred_mean,pred_sd,n\n";
        const char* names[] = {"Wake", "Light", "Deep", "REM"};
        for (int s = 0; s < kNumStages; ++s) {
            const auto& b = report.bland_altman[s];
            out << names[s] << ',' << b.bias << ',' << b.sd_diff << ',' << b.loa_low << ','
                << b.loa_high << ',' << b.loa_coverage << ',' << b.true_mean << ',' << b.true_sd
                << ',' << b.pred_mean << ',' << b.pred_sd << ',' << b.n << '\n';
        }
    }
}

}  // namespace somnia::eval
