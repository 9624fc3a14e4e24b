#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "somnia/eval.hpp"
#include "somnia/oracle.hpp"
#include "somnia/rng.hpp"

using namespace somnia;
using namespace somnia::eval;

namespace {

Hypnogram hyp(std::vector<Stage> stages) {
    Hypnogram h;
    h.stages = std::move(stages);
    return h;
}

Hypnogram random_hyp(int n, Rng& rng) {
    Hypnogram h;
    h.stages.resize(n);
    for (auto& s : h.stages) s = static_cast<Stage>(rng.below(4));
    return h;
}

constexpr Stage W = Stage::Wake, L = Stage::Light, D = Stage::Deep, R = Stage::REM;

}  // namespace

TEST_CASE("confusion matrix: identical, hand case, row normalization") {
    auto a = hyp({W, L, D, R, W, L});
    auto cm = confusion_matrix(a, a);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if (i != j) CHECK(cm.counts[i][j] == 0);
    CHECK(cm.counts[0][0] == 2);
    CHECK(cm.counts[1][1] == 2);

    auto t = hyp({W, W, L});
    auto p = hyp({W, L, L});
    auto cm2 = confusion_matrix(t, p);
    CHECK(cm2.counts[0][0] == 1);
    CHECK(cm2.counts[0][1] == 1);
    CHECK(cm2.counts[1][1] == 1);
    CHECK(cm2.total() == 3);

    const auto rn = cm2.row_normalized();
    for (int r = 0; r < 4; ++r) {
        if (cm2.row_sum(r) == 0) continue;
        double sum = 0.0;
        for (int c = 0; c < 4; ++c) sum += rn[r][c];
        CHECK(sum == doctest::Approx(1.0));
    }

    CHECK_THROWS_WITH_AS(confusion_matrix(t, hyp({W})), doctest::Contains("LengthMismatch"),
                         Error);
}

TEST_CASE("unscored epochs are excluded from the confusion matrix") {
    auto t = hyp({W, Stage::Unscored, L, D});
    auto p = hyp({W, W, L, D});
    auto cm = confusion_matrix(t, p);
    CHECK(cm.total() == 3);
}

TEST_CASE("classification metrics: exact hand case") {
    ConfusionMatrix cm;
    cm.class_names = {"a", "b"};
    cm.counts = {{45, 5}, {10, 40}};
    auto m = classification_metrics(cm);
    CHECK(m.accuracy == doctest::Approx(0.85));
    CHECK(m.kappa == doctest::Approx(0.70));  // p_e = 0.5 exactly
    CHECK(m.f1[0] == doctest::Approx(0.857142857).epsilon(1e-6));
    CHECK(m.f1[1] == doctest::Approx(0.842105263).epsilon(1e-6));
    CHECK(m.macro_f1 == doctest::Approx(0.849624060).epsilon(1e-6));

    ConfusionMatrix perfect;
    perfect.class_names = {"a", "b", "c"};
    perfect.counts = {{7, 0, 0}, {0, 9, 0}, {0, 0, 4}};
    auto mp = classification_metrics(perfect);
    CHECK(mp.accuracy == doctest::Approx(1.0));
    CHECK(mp.macro_f1 == doctest::Approx(1.0));
    CHECK(mp.kappa == doctest::Approx(1.0));

    // degenerate: one class only -> p_e == 1 -> kappa defined as 0
    ConfusionMatrix single;
    single.class_names = {"a", "b"};
    single.counts = {{20, 0}, {0, 0}};
    CHECK(classification_metrics(single).kappa == doctest::Approx(0.0));

    ConfusionMatrix empty;
    empty.class_names = {"a"};
    empty.counts = {{0}};
    CHECK_THROWS_WITH_AS(classification_metrics(empty), doctest::Contains("EmptyMatrix"), Error);
}

TEST_CASE("metrics match the counting oracle on random hypnogram pairs") {
    Rng rng(17);
    for (int trial = 0; trial < 120; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(999));
        std::vector<int> t(n), p(n);
        for (int i = 0; i < n; ++i) {
            t[i] = static_cast<int>(rng.below(4));
            p[i] = rng.uniform() < 0.6 ? t[i] : static_cast<int>(rng.below(4));
        }
        auto cm = confusion_from_labels(t, p, 4);
        auto m = classification_metrics(cm);
        auto want = oracle::counting_metrics(t, p, 4);
        CHECK(m.accuracy == doctest::Approx(want.accuracy).epsilon(1e-12));
        CHECK(m.macro_f1 == doctest::Approx(want.macro_f1).epsilon(1e-12));
        CHECK(m.kappa == doctest::Approx(want.kappa).epsilon(1e-12));
        for (int c = 0; c < 4; ++c) {
            CHECK(m.recall[c] == doctest::Approx(want.recall[c]).epsilon(1e-12));
            CHECK(m.precision[c] == doctest::Approx(want.precision[c]).epsilon(1e-12));
        }
    }
}

TEST_CASE("formula kappa agrees with permutation resampling within 0.02") {
    Rng rng(19);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = 1000;
        std::vector<int> t(n), p(n);
        for (int i = 0; i < n; ++i) {
            t[i] = static_cast<int>(rng.below(4));
            p[i] = rng.uniform() < 0.5 ? t[i] : static_cast<int>(rng.below(4));
        }
        auto m = classification_metrics(confusion_from_labels(t, p, 4));
        const double perm = oracle::kappa_by_permutation(t, p, 400, 1000 + trial);
        CHECK(std::abs(m.kappa - perm) <= 0.02);
    }
}

TEST_CASE("sleep/wake session metrics") {
    auto t = hyp({W, W, L, L, D, R, L, L, L, L, W, L});
    auto m = sleep_wake_session_metrics(t, t);
    CHECK(*m.sensitivity == doctest::Approx(1.0));
    CHECK(*m.specificity == doctest::Approx(1.0));

    // 10 true sleep epochs, one predicted as wake -> sensitivity 0.9
    auto t2 = hyp({W, L, L, L, L, L, D, D, R, R, L, W});
    auto p2 = t2;
    p2.stages[1] = W;
    auto m2 = sleep_wake_session_metrics(t2, p2);
    CHECK(*m2.sensitivity == doctest::Approx(0.9));

    // all-sleep session: specificity undefined
    auto t3 = hyp({L, L, D, R});
    auto m3 = sleep_wake_session_metrics(t3, t3);
    CHECK(*m3.sensitivity == doctest::Approx(1.0));
    CHECK_FALSE(m3.specificity.has_value());
}

TEST_CASE("sleep boundaries") {
    auto b = sleep_boundaries(hyp({W, W, L, L, W, D, R, W}));
    CHECK(b.onset_min == doctest::Approx(1.0));
    CHECK(b.offset_min == doctest::Approx(3.5));

    auto b0 = sleep_boundaries(hyp({L, W, W}));
    CHECK(b0.onset_min == doctest::Approx(0.0));

    CHECK_THROWS_WITH_AS(sleep_boundaries(hyp({W, W, W})), doctest::Contains("NoSleepDetected"),
                         Error);
}

TEST_CASE("boundary error statistics") {
    // identical boundaries
    auto zero = boundary_error_stats({0.0, 0.0, 0.0});
    CHECK(zero.bias == doctest::Approx(0.0));
    CHECK(zero.mae == doctest::Approx(0.0));

    // +2 epochs everywhere -> bias exactly 1.0 min
    std::vector<double> shifted(20, 2.0 * kEpochMinutes);
    auto sh = boundary_error_stats(shifted);
    CHECK(sh.bias == doctest::Approx(1.0));
    CHECK(sh.mae == doctest::Approx(1.0));

    auto pm = boundary_error_stats({-1.0, 1.0});
    CHECK(pm.bias == doctest::Approx(0.0));
    CHECK(pm.mae == doctest::Approx(1.0));

    // invariants: MAE >= |bias|, CI contains bias
    Rng rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(40));
        std::vector<double> d(n);
        for (auto& v : d) v = rng.normal(0.5, 4.0);
        auto r = boundary_error_stats(d);
        CHECK(r.mae >= std::abs(r.bias) - 1e-12);
        CHECK(r.ci_low <= r.bias);
        CHECK(r.ci_high >= r.bias);
    }

    CHECK_THROWS_WITH_AS(boundary_error_stats({1.0}), doctest::Contains("TooFewSessions"), Error);
}

TEST_CASE("boundary shift recovery through the full pipeline") {
    // inject a +k-epoch shift into predictions; recovered bias = 0.5k minutes
    Rng rng(29);
    for (int k : {1, 2, 5}) {
        std::vector<double> onset_diffs;
        for (int s = 0; s < 12; ++s) {
            Hypnogram t;
            const int onset_epoch = 4 + static_cast<int>(rng.below(20));
            for (int e = 0; e < 120; ++e)
                t.stages.push_back(e < onset_epoch || e >= 110 ? W : L);
            Hypnogram p;
            for (int e = 0; e < 120; ++e) {
                const int src = e - k;
                p.stages.push_back(src >= 0 && src < 120 ? t.stages[src] : W);
            }
            onset_diffs.push_back(sleep_boundaries(p).onset_min - sleep_boundaries(t).onset_min);
        }
        auto r = boundary_error_stats(onset_diffs);
        CHECK(r.bias == doctest::Approx(0.5 * k));
        CHECK(r.sd == doctest::Approx(0.0));
    }
}

TEST_CASE("Bland-Altman: exact arithmetic on fixed values") {
    // two sessions symmetric around the target means reproduce the bias
    // as (pred mean - true mean) exactly
    const double true_means[] = {125.4, 225.4, 89.1, 94.8};
    const double pred_means[] = {120.4, 220.2, 90.6, 103.6};
    const double want_bias[] = {-5.0, -5.2, 1.5, 8.8};
    for (int s = 0; s < 4; ++s) {
        std::vector<double> td = {true_means[s] - 10.0, true_means[s] + 10.0};
        std::vector<double> pd = {pred_means[s] - 10.0, pred_means[s] + 10.0};
        auto r = stage_duration_bland_altman(td, pd);
        CHECK(r.bias == doctest::Approx(want_bias[s]).epsilon(1e-9));
        CHECK(r.true_mean == doctest::Approx(true_means[s]));
        CHECK(r.pred_mean == doctest::Approx(pred_means[s]));
    }

    // LoA width = 3.92 * sd
    std::vector<double> td, pd;
    Rng rng(31);
    for (int i = 0; i < 400; ++i) {
        const double t = rng.uniform(60.0, 120.0);
        td.push_back(t);
        pd.push_back(t + rng.normal(8.8, 24.5));
    }
    auto r = stage_duration_bland_altman(td, pd);
    CHECK(r.loa_high - r.loa_low == doctest::Approx(3.92 * r.sd_diff).epsilon(1e-9));
    CHECK(r.loa_low == doctest::Approx(r.bias - 1.96 * r.sd_diff).epsilon(1e-9));
    CHECK(r.loa_high == doctest::Approx(r.bias + 1.96 * r.sd_diff).epsilon(1e-9));

    // identical predictions
    auto same = stage_duration_bland_altman({100.0, 50.0, 80.0}, {100.0, 50.0, 80.0});
    CHECK(same.bias == doctest::Approx(0.0));
    CHECK(same.loa_low == doctest::Approx(0.0));
    CHECK(same.loa_high == doctest::Approx(0.0));
    CHECK(same.loa_coverage == doctest::Approx(1.0));
}

TEST_CASE("Bland-Altman coverage on normal diffs is at least 0.90") {
    Rng rng(37);
    std::vector<double> td(1000), pd(1000);
    for (int i = 0; i < 1000; ++i) {
        td[i] = rng.uniform(50.0, 200.0);
        pd[i] = td[i] + rng.normal(-3.0, 12.0);
    }
    auto r = stage_duration_bland_altman(td, pd);
    CHECK(r.loa_coverage >= 0.90);
}

TEST_CASE("per-session durations sum to half the scored epoch count") {
    Rng rng(41);
    for (int trial = 0; trial < 50; ++trial) {
        auto h = random_hyp(100 + static_cast<int>(rng.below(500)), rng);
        // sprinkle unscored epochs
        for (auto& s : h.stages)
            if (rng.uniform() < 0.05) s = Stage::Unscored;
        const auto d = stage_durations_min(h);
        long long scored = 0;
        for (auto s : h.stages)
            if (is_scored(s)) ++scored;
        CHECK(d[0] + d[1] + d[2] + d[3] == doctest::Approx(0.5 * scored));
    }
}

TEST_CASE("stratification bins follow the interval notation") {
    CHECK(ahi_group(0.0) == AhiGroup::Normal);
    CHECK(ahi_group(5.0) == AhiGroup::Normal);
    CHECK(ahi_group(5.01) == AhiGroup::Mild);
    CHECK(ahi_group(15.0) == AhiGroup::Mild);
    CHECK(ahi_group(15.01) == AhiGroup::Moderate);
    CHECK(ahi_group(30.0) == AhiGroup::Moderate);
    CHECK(ahi_group(30.01) == AhiGroup::Severe);

    CHECK(se_group(80.0) == SeGroup::High);
    CHECK(se_group(95.0) == SeGroup::High);
    CHECK(se_group(79.99) == SeGroup::Mid);
    CHECK(se_group(60.0) == SeGroup::Mid);
    CHECK(se_group(59.99) == SeGroup::Low);
}

namespace {

SessionEval quick_session(const std::string& id, double ahi, Rng& rng, int n = 200) {
    Hypnogram t = random_hyp(n, rng);
    // ensure some sleep and wake exist
    t.stages[0] = W;
    t.stages[1] = L;
    Hypnogram p = t;
    for (auto& s : p.stages)
        if (rng.uniform() < 0.2) s = static_cast<Stage>(rng.below(4));
    return make_session_eval(id, "subj-" + id, ahi, t, p);
}

}  // namespace

TEST_CASE("kappa reaches 1 exactly on diagonal matrices and only there") {
    Rng rng(53);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 50 + static_cast<int>(rng.below(200));
        std::vector<int> t(n), p(n);
        bool diagonal = true;
        for (int i = 0; i < n; ++i) {
            t[i] = static_cast<int>(rng.below(4));
            p[i] = rng.uniform() < 0.8 ? t[i] : static_cast<int>(rng.below(4));
            diagonal = diagonal && t[i] == p[i];
        }
        auto m = classification_metrics(confusion_from_labels(t, p, 4));
        if (diagonal) CHECK(m.kappa == doctest::Approx(1.0));
        else CHECK(m.kappa < 1.0);
    }
}

TEST_CASE("perfect predictions give a perfect cohort report") {
    Rng rng(59);
    std::vector<SessionEval> sessions;
    for (int i = 0; i < 3; ++i) {
        Hypnogram t = random_hyp(150, rng);
        t.stages[0] = W;
        t.stages[1] = L;
        sessions.push_back(make_session_eval("p" + std::to_string(i), "s", 2.0, t, t));
    }
    auto r = evaluate_cohort(sessions);
    CHECK(r.pooled.accuracy == doctest::Approx(1.0));
    CHECK(r.pooled.kappa == doctest::Approx(1.0));
    CHECK(r.onset.bias == doctest::Approx(0.0));
    CHECK(r.onset.mae == doctest::Approx(0.0));
    for (int s = 0; s < kNumStages; ++s) CHECK(r.bland_altman[s].bias == doctest::Approx(0.0));
}

TEST_CASE("cohort report: single-group cohort mean equals the global mean") {
    Rng rng(43);
    std::vector<SessionEval> sessions;
    for (int i = 0; i < 6; ++i) sessions.push_back(quick_session(std::to_string(i), 2.0, rng));
    auto r = evaluate_cohort(sessions);
    REQUIRE(r.by_ahi.size() == 4);
    CHECK(r.by_ahi[0].n == 6);
    CHECK(r.by_ahi[0].accuracy.mean == doctest::Approx(r.accuracy_stat.mean));
    CHECK(r.by_ahi[1].n == 0);
    CHECK(r.by_ahi[2].n == 0);
    CHECK(r.by_ahi[3].n == 0);
}

TEST_CASE("report files are written") {
    Rng rng(47);
    std::vector<SessionEval> sessions;
    for (int i = 0; i < 4; ++i)
        sessions.push_back(quick_session(std::to_string(i), 4.0 + 12.0 * i, rng));
    auto r = evaluate_cohort(sessions);
    const std::string dir = "/tmp/somnia_report_test";
    write_reports(r, sessions, dir);
    for (const char* f : {"report.json", "report.txt", "per_session.csv",
                          "confusion_counts.csv", "boundary_errors.csv", "bland_altman.csv"}) {
        std::ifstream in(dir + "/" + f);
        CHECK(in.good());
    }
    const std::string text = render_text_report(r);
    CHECK(text.find("kappa") != std::string::npos);
}
