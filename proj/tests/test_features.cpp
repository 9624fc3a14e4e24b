#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "somnia/features.hpp"
#include "somnia/oracle.hpp"
#include "somnia/rng.hpp"

using namespace somnia;
using namespace somnia::features;

TEST_CASE("epoch_stats hand cases") {
    auto s = epoch_stats({10.0, 12.0, 14.0});
    CHECK(s.mean == doctest::Approx(12.0));
    CHECK(s.rmssd == doctest::Approx(2.0));
    CHECK(s.mean_abs_succ_diff == doctest::Approx(2.0));
    CHECK(s.max_abs_succ_diff == doctest::Approx(2.0));

    auto c = epoch_stats(std::vector<double>(7, 4.2));
    CHECK(c.std == doctest::Approx(0.0));
    CHECK(c.rmssd == doctest::Approx(0.0));
    CHECK(c.mean_abs_succ_diff == doctest::Approx(0.0));
    CHECK(c.trimmed_mean == doctest::Approx(4.2));
    CHECK(c.mean == doctest::Approx(4.2));

    // sort-and-drop: floor(0.1*10)=1 from each tail removes 1 and 100
    auto t = epoch_stats({1, 2, 3, 4, 5, 6, 7, 8, 9, 100});
    CHECK(t.trimmed_mean == doctest::Approx(5.5));
}

TEST_CASE("epoch_stats strict mode rejects length-1 difference metrics") {
    CHECK_THROWS_WITH_AS(epoch_stats({1.0}, true), doctest::Contains("TooFewSamples"), Error);
    CHECK_NOTHROW(epoch_stats({1.0}, false));
}

TEST_CASE("trimmed mean ignores inflation of the single largest element") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 10 + static_cast<int>(rng.below(30));
        std::vector<double> v(n);
        for (auto& x : v) x = rng.normal(10.0, 3.0);
        auto base = epoch_stats(v);
        auto worst = std::max_element(v.begin(), v.end());
        *worst += rng.uniform(1.0, 1e6);
        auto bumped = epoch_stats(v);
        CHECK(bumped.trimmed_mean == doctest::Approx(base.trimmed_mean).epsilon(1e-12));
    }
}

TEST_CASE("epoch_stats matches the long-double oracle on random input") {
    Rng rng(23);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(60));
        std::vector<double> v(n);
        for (auto& x : v) x = rng.uniform(-50.0, 50.0);
        auto got = epoch_stats(v);
        auto want = oracle::naive_stats(v);
        CHECK(got.trimmed_mean == doctest::Approx(want.trimmed_mean).epsilon(1e-9));
        CHECK(got.mean == doctest::Approx(want.mean).epsilon(1e-9));
        CHECK(got.std == doctest::Approx(want.std).epsilon(1e-9));
        CHECK(got.rmssd == doctest::Approx(want.rmssd).epsilon(1e-9));
        CHECK(got.mean_abs_succ_diff == doctest::Approx(want.mean_abs_succ_diff).epsilon(1e-9));
        CHECK(got.max_abs_succ_diff == doctest::Approx(want.max_abs_succ_diff).epsilon(1e-9));
    }
}

TEST_CASE("dtw hand cases") {
    CHECK(dtw_distance({1, 2, 3}, {1, 2, 3}) == doctest::Approx(0.0));
    CHECK(dtw_distance({0, 0, 1}, {0, 1, 1}) == doctest::Approx(0.0));
    CHECK(dtw_distance({1, 2, 3}, {2, 3, 4}) == doctest::Approx(2.0));
    CHECK_THROWS_WITH_AS(dtw_distance({}, {1.0}), doctest::Contains("EmptySequence"), Error);
}

TEST_CASE("dtw equals brute-force DP on random pairs and is symmetric") {
    Rng rng(5);
    for (int trial = 0; trial < 250; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(12));
        const int m = 1 + static_cast<int>(rng.below(12));
        std::vector<double> a(n), b(m);
        for (auto& x : a) x = rng.uniform(-5.0, 5.0);
        for (auto& x : b) x = rng.uniform(-5.0, 5.0);
        const double d = dtw_distance(a, b);
        CHECK(d == doctest::Approx(oracle::dtw_bruteforce(a, b)).epsilon(1e-12));
        CHECK(d == doctest::Approx(dtw_distance(b, a)).epsilon(1e-12));
        CHECK(d >= 0.0);
        CHECK(dtw_distance(a, a) == doctest::Approx(0.0));
    }
}

TEST_CASE("banded dtw still matches the oracle when the band covers the matrix") {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(10));
        std::vector<double> a(n), b(n);
        for (auto& x : a) x = rng.uniform(-2.0, 2.0);
        for (auto& x : b) x = rng.uniform(-2.0, 2.0);
        CHECK(dtw_distance(a, b, n) == doctest::Approx(oracle::dtw_bruteforce(a, b)).epsilon(1e-12));
    }
}

namespace {

dsp::RespWaveform waveform_from_epochs(const std::vector<std::vector<double>>& epochs20hz) {
    dsp::RespWaveform w;
    w.sample_rate = 20.0;
    for (const auto& e : epochs20hz) w.samples.insert(w.samples.end(), e.begin(), e.end());
    return w;
}

std::vector<double> breathing_epoch(double freq, double phase = 0.0) {
    std::vector<double> out(600);
    for (int i = 0; i < 600; ++i) out[i] = std::sin(2.0 * M_PI * freq * i / 20.0 + phase);
    return out;
}

}  // namespace

TEST_CASE("adjacent epoch dtw: identical epochs give zero, first epoch is missing") {
    auto e = breathing_epoch(0.25);
    auto w = waveform_from_epochs({e, e});
    std::vector<bool> valid = {true, true};
    auto d1 = adjacent_epoch_dtw(w, 1, valid);
    REQUIRE(d1.has_value());
    CHECK(*d1 == doctest::Approx(0.0));
    CHECK_FALSE(adjacent_epoch_dtw(w, 0, valid).has_value());

    std::vector<bool> gated = {false, true};
    CHECK_FALSE(adjacent_epoch_dtw(w, 1, gated).has_value());
}

TEST_CASE("adjacent epoch dtw beats lock-step distance on a time-stretched pair") {
    // epoch B is a 2x time-stretched version of epoch A's first half
    std::vector<double> a(600), b(600);
    for (int i = 0; i < 600; ++i) {
        a[i] = std::sin(2.0 * M_PI * 0.3 * i / 20.0);
        b[i] = std::sin(2.0 * M_PI * 0.15 * i / 20.0);
    }
    auto w = waveform_from_epochs({a, b});
    std::vector<bool> valid = {true, true};
    auto dtw = adjacent_epoch_dtw(w, 1, valid);
    REQUIRE(dtw.has_value());

    // lock-step mean absolute difference at the dtw sample rate (2 Hz)
    double lock = 0.0;
    int cnt = 0;
    for (int i = 0; i < 600; i += 10) {
        lock += std::abs(a[i] - b[i]);
        ++cnt;
    }
    lock /= cnt;
    CHECK(*dtw < lock);
}

TEST_CASE("movement feature counting") {
    std::vector<dsp::MotionFrame> frames(7);
    const bool moving[] = {false, true, true, true, false, true, false};
    const double amps[] = {0, 2, 3, 1, 0, 4, 0};
    for (int i = 0; i < 7; ++i) frames[i] = {i, moving[i], amps[i]};
    auto f = movement_features(frames);
    CHECK(f.max_consecutive_moving == 3);
    CHECK(f.total_moving == 4);
    CHECK(f.cumulative_amplitude == doctest::Approx(10.0));

    CHECK(movement_features({}).total_moving == 0);
    std::vector<dsp::MotionFrame> idle(9);
    auto fi = movement_features(idle);
    CHECK(fi.max_consecutive_moving == 0);
    CHECK(fi.cumulative_amplitude == doctest::Approx(0.0));

    std::vector<dsp::MotionFrame> all(11, {0, true, 1.0});
    auto fa = movement_features(all);
    CHECK(fa.max_consecutive_moving == 11);
    CHECK(fa.total_moving == 11);
    CHECK(fa.cumulative_amplitude == doctest::Approx(11.0));
}

TEST_CASE("circadian feature: nadir at 03:00, peak at 15:00, 24 h periodic") {
    auto at3 = temporal_context_features(3.0 * 3600.0, 0, 10);
    CHECK(at3.circadian == doctest::Approx(-1.0).epsilon(1e-12));
    auto at15 = temporal_context_features(15.0 * 3600.0, 0, 10);
    CHECK(at15.circadian == doctest::Approx(1.0).epsilon(1e-12));

    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        const double t = rng.uniform(0.0, 86400.0);
        const double a = temporal_context_features(t, 0, 2).circadian;
        const double b = temporal_context_features(t + 86400.0, 0, 2).circadian;
        CHECK(std::abs(a - b) < 1e-12);
    }

    // unique minimum over a 1-minute grid
    double best = 1e9;
    int best_minute = -1;
    for (int m = 0; m < 1440; ++m) {
        const double c = temporal_context_features(m * 60.0, 0, 2).circadian;
        if (c < best) {
            best = c;
            best_minute = m;
        }
    }
    CHECK(best_minute == 180);
}

TEST_CASE("night progress endpoints") {
    CHECK(temporal_context_features(0.0, 0, 11).progress == doctest::Approx(0.0));
    CHECK(temporal_context_features(0.0, 10, 11).progress == doctest::Approx(1.0));
}

TEST_CASE("multiscale windows: centering, truncation, interior 30 s equivalence") {
    dsp::RateSeries rates(10);
    for (int e = 0; e < 10; ++e) rates[e] = {10.0 + e, 1.0, true};

    // 90 s window at epoch 4 covers epochs 3..5
    auto s = multiscale_stats(rates, 4, 90);
    REQUIRE(s.has_value());
    CHECK(s->mean == doctest::Approx((13.0 + 14.0 + 15.0) / 3.0));

    // epoch 0 with a 150 s window covers epochs 0..2 only
    auto t = multiscale_stats(rates, 0, 150);
    REQUIRE(t.has_value());
    CHECK(t->mean == doctest::Approx((10.0 + 11.0 + 12.0) / 3.0));

    // interior 30 s stats equal the single epoch's sample
    auto u = multiscale_stats(rates, 5, 30);
    REQUIRE(u.has_value());
    CHECK(u->mean == doctest::Approx(15.0));
    CHECK(u->std == doctest::Approx(0.0));

    // constant night: zero variation at every scale
    dsp::RateSeries flat(20);
    for (auto& r : flat) r = {14.0, 1.0, true};
    for (int w : {30, 90, 150, 270, 510}) {
        auto fs = multiscale_stats(flat, 10, w);
        REQUIRE(fs.has_value());
        CHECK(fs->std == doctest::Approx(0.0));
        CHECK(fs->rmssd == doctest::Approx(0.0));
    }

    // fully gated window has no value
    dsp::RateSeries gated(5);
    CHECK_FALSE(multiscale_stats(gated, 2, 30).has_value());
}

namespace {

SessionSignals tiny_session(int n_epochs, unsigned long long seed) {
    Rng rng(seed);
    SessionSignals s;
    s.session_id = "tiny";
    s.start_clock = 23.0 * 3600.0;
    s.frame_rate = 2.0;
    s.waveform.sample_rate = 20.0;
    for (int e = 0; e < n_epochs; ++e) {
        const double f = rng.uniform(0.15, 0.45);
        for (int i = 0; i < 600; ++i)
            s.waveform.samples.push_back(std::sin(2.0 * M_PI * f * i / 20.0));
        s.gated_rates.push_back({60.0 * f, 1.0, true});
        s.moving_fraction.push_back(0.0);
        for (int k = 0; k < 60; ++k)
            s.motion.push_back({static_cast<std::int64_t>(s.motion.size()), false, 0.0});
    }
    return s;
}

}  // namespace

TEST_CASE("feature assembly: shape, determinism, gated rows") {
    auto s = tiny_session(6, 42);
    auto m1 = assemble_feature_matrix(s);
    auto m2 = assemble_feature_matrix(s);
    CHECK(m1.num_epochs() == 6);
    CHECK(m1.width() == 42);
    REQUIRE(m1.feature_names.size() == 42);
    for (int e = 0; e < 6; ++e) {
        CHECK(m1.epochs[e].values == m2.epochs[e].values);  // bit-identical
        for (double v : m1.epochs[e].values) CHECK(std::isfinite(v));
    }

    // gate one epoch entirely: row flagged invalid, indicators set
    auto g = s;
    g.gated_rates[3].valid = false;
    g.moving_fraction[3] = 1.0;
    auto mg = assemble_feature_matrix(g);
    CHECK_FALSE(mg.epochs[3].valid);
    const auto& names = mg.feature_names;
    const auto idx_of = [&](const std::string& n) {
        return static_cast<int>(std::find(names.begin(), names.end(), n) - names.begin());
    };
    CHECK(mg.epochs[3].values[idx_of("imp_rr_30s")] == doctest::Approx(1.0));
    CHECK(mg.epochs[3].values[idx_of("imp_dtw")] == doctest::Approx(1.0));
    // neighbours keep wider windows valid
    CHECK(mg.epochs[2].values[idx_of("imp_rr_90s")] == doctest::Approx(0.0));
}

TEST_CASE("feature csv round trip") {
    auto s = tiny_session(4, 9);
    auto m = assemble_feature_matrix(s);
    const std::string path = "/tmp/somnia_feat_test.csv";
    write_feature_csv(m, path);
    auto back = read_feature_csv(path);
    REQUIRE(back.num_epochs() == m.num_epochs());
    REQUIRE(back.feature_names == m.feature_names);
    for (int e = 0; e < m.num_epochs(); ++e) {
        CHECK(back.epochs[e].values == m.epochs[e].values);
        CHECK(back.epochs[e].valid == m.epochs[e].valid);
    }
}
