#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "somnia/dsp.hpp"
#include "somnia/rng.hpp"
#include "somnia/synth.hpp"

using namespace somnia;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// per-epoch rate series of one synthetic session through the full DSP chain
dsp::RateSeries rates_of(const synth::SynthSession& s, const synth::SynthConfig& cfg) {
    dsp::PhaseSeries ps{s.phase, cfg.sample_rate, s.metadata.lights_off_clock};
    auto wave = dsp::bandpass_respiration(dsp::unwrap_phase(ps));
    return dsp::estimate_rate_series(wave);
}

Hypnogram constant_hypnogram(Stage st, int epochs) {
    Hypnogram h;
    h.stages.assign(epochs, st);
    return h;
}

}  // namespace

TEST_CASE("hypnogram generation: determinism, Wake start, transition validation") {
    synth::SynthConfig cfg;
    auto a = synth::generate_hypnogram(cfg, 42);
    auto b = synth::generate_hypnogram(cfg, 42);
    CHECK(a.stages == b.stages);
    CHECK(a.num_epochs() == static_cast<int>(std::lround(cfg.night_duration_min * 2)));

    for (std::uint64_t seed = 0; seed < 30; ++seed)
        CHECK(synth::generate_hypnogram(cfg, seed).stages[0] == Stage::Wake);

    auto bad = cfg;
    bad.transitions[1][0] = 0.9;  // row no longer sums to 1
    CHECK_THROWS_WITH_AS(synth::generate_hypnogram(bad, 1),
                         doctest::Contains("InvalidTransitionMatrix"), Error);
}

TEST_CASE("deep sleep concentrates in the first half of the night") {
    synth::SynthConfig cfg;
    double first = 0.0, second = 0.0;
    for (int n = 0; n < 200; ++n) {
        auto h = synth::generate_hypnogram(cfg, derive_seed(7, "mc/" + std::to_string(n)));
        const int half = h.num_epochs() / 2;
        for (int e = 0; e < h.num_epochs(); ++e)
            if (h.stages[e] == Stage::Deep) (e < half ? first : second) += kEpochMinutes;
    }
    CHECK(first / 200.0 > second / 200.0);
}

TEST_CASE("aggregate TST over 200 nights sits inside the target band") {
    synth::SynthConfig cfg;
    double tst_sum = 0.0;
    for (int n = 0; n < 200; ++n) {
        auto h = synth::generate_hypnogram(cfg, derive_seed(9, "tst/" + std::to_string(n)));
        tst_sum += summarize_sleep(h).tst_min;
    }
    const double mean_tst = tst_sum / 200.0;
    CHECK(mean_tst >= cfg.tst_target_min - cfg.tst_band_min);
    CHECK(mean_tst <= cfg.tst_target_min + cfg.tst_band_min);
}

TEST_CASE("same seed gives bit-identical cohort files") {
    synth::SynthConfig cfg;
    cfg.night_duration_min = 40.0;
    const std::string d1 = "/tmp/somnia_synth_a", d2 = "/tmp/somnia_synth_b";
    fs::remove_all(d1);
    fs::remove_all(d2);
    auto m1 = synth::write_cohort(cfg, 2, d1);
    auto m2 = synth::write_cohort(cfg, 2, d2);
    CHECK(slurp(m1) == slurp(m2));
    for (const char* f : {"session-0000/phase.csv", "session-0000/frames.csv",
                          "session-0000/hypnogram.csv", "session-0000/metadata.json",
                          "session-0001/phase.csv"})
        CHECK(slurp(d1 + "/" + f) == slurp(d2 + "/" + f));
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("zero movement probability leaves no gated epochs") {
    synth::SynthConfig cfg;
    cfg.night_duration_min = 30.0;
    for (auto& p : cfg.profiles) p.movement_prob_per_frame = 0.0;
    auto meta = synth::sample_metadata(3, 0);
    auto h = synth::generate_hypnogram(cfg, 5);
    auto s = synth::synth_session(h, cfg, 5, meta);
    auto motion = dsp::compute_motion_series(s.frames, dsp::MotionThresholds{});
    auto frac = dsp::epoch_moving_fraction(motion, cfg.frame_rate, h.num_epochs());
    for (double f : frac) CHECK(f <= 0.5);
    auto rates = rates_of(s, cfg);
    auto gated = dsp::gate_resp_rate(rates, frac, 0.5);
    int invalid_from_gate = 0;
    for (std::size_t e = 0; e < gated.size(); ++e)
        if (rates[e].valid && !gated[e].valid) ++invalid_from_gate;
    CHECK(invalid_from_gate == 0);
}

TEST_CASE("Deep-only nights have lower estimated rate SD than REM-only nights") {
    synth::SynthConfig cfg;
    cfg.night_duration_min = 15.0;  // 30 epochs per night keeps this fast
    double deep_sd_sum = 0.0, rem_sd_sum = 0.0;
    const int nights = 50;
    for (int n = 0; n < nights; ++n) {
        for (Stage st : {Stage::Deep, Stage::REM}) {
            auto h = constant_hypnogram(st, 30);
            auto meta = synth::sample_metadata(11, n);
            auto s = synth::synth_session(h, cfg, derive_seed(11, std::to_string(n)), meta);
            auto rates = rates_of(s, cfg);
            double sum = 0.0, sq = 0.0;
            int cnt = 0;
            for (const auto& r : rates)
                if (r.valid) {
                    sum += r.rate_bpm;
                    sq += r.rate_bpm * r.rate_bpm;
                    ++cnt;
                }
            REQUIRE(cnt > 5);
            const double mean = sum / cnt;
            const double sd = std::sqrt(std::max(0.0, sq / cnt - mean * mean));
            (st == Stage::Deep ? deep_sd_sum : rem_sd_sum) += sd;
        }
    }
    CHECK(deep_sd_sum / nights < rem_sd_sum / nights);
}

TEST_CASE("Wake and Deep separate by at least one pooled SD") {
    // calibration gate: per-epoch (rate SD over a 270 s window, moving-frame
    // count) distributions must differ strongly between Wake and Deep
    synth::SynthConfig cfg;
    cfg.night_duration_min = 120.0;
    std::vector<double> wake_move, deep_move, wake_rsd, deep_rsd;
    for (int n = 0; n < 6; ++n) {
        const auto seed = derive_seed(13, "sep/" + std::to_string(n));
        auto meta = synth::sample_metadata(13, n);
        auto h = synth::generate_hypnogram(cfg, seed);
        auto s = synth::synth_session(h, cfg, seed, meta);
        auto rates = rates_of(s, cfg);
        auto motion = dsp::compute_motion_series(s.frames, dsp::MotionThresholds{});
        const int fpe = static_cast<int>(std::lround(30.0 * cfg.frame_rate));
        for (int e = 0; e < h.num_epochs() && e < static_cast<int>(rates.size()); ++e) {
            // moving frames in this epoch
            int moving = 0;
            for (int f = 0; f < fpe; ++f) {
                const std::size_t idx = static_cast<std::size_t>(e) * fpe + f;
                if (idx < motion.size() && motion[idx].moving) ++moving;
            }
            // rate SD in the 270 s window around e
            const int half = 4;
            double sum = 0.0, sq = 0.0;
            int cnt = 0;
            for (int k = std::max(0, e - half);
                 k <= std::min(static_cast<int>(rates.size()) - 1, e + half); ++k)
                if (rates[k].valid) {
                    sum += rates[k].rate_bpm;
                    sq += rates[k].rate_bpm * rates[k].rate_bpm;
                    ++cnt;
                }
            if (cnt < 3) continue;
            const double m = sum / cnt;
            const double sd = std::sqrt(std::max(0.0, sq / cnt - m * m));
            if (h.stages[e] == Stage::Wake) {
                wake_move.push_back(moving);
                wake_rsd.push_back(sd);
            } else if (h.stages[e] == Stage::Deep) {
                deep_move.push_back(moving);
                deep_rsd.push_back(sd);
            }
        }
    }
    REQUIRE(wake_move.size() > 30);
    REQUIRE(deep_move.size() > 30);
    auto mean_sd = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        const double m = s / static_cast<double>(v.size());
        double q = 0.0;
        for (double x : v) q += (x - m) * (x - m);
        return std::pair<double, double>(m, std::sqrt(q / static_cast<double>(v.size())));
    };
    const auto [wm, ws] = mean_sd(wake_rsd);
    const auto [dm, ds] = mean_sd(deep_rsd);
    const double pooled_rsd = std::sqrt(0.5 * (ws * ws + ds * ds));
    CHECK(std::abs(wm - dm) >= pooled_rsd);

    const auto [wmm, wms] = mean_sd(wake_move);
    const auto [dmm, dms] = mean_sd(deep_move);
    const double pooled_move = std::sqrt(0.5 * (wms * wms + dms * dms));
    CHECK(std::abs(wmm - dmm) >= pooled_move);
}

TEST_CASE("synthetic metadata populates every AHI stratum") {
    int counts[4] = {0, 0, 0, 0};
    for (int i = 0; i < 200; ++i) {
        auto m = synth::sample_metadata(1, i);
        CHECK(m.ahi >= 0.0);
        CHECK(m.age >= 18.0);
        if (m.ahi <= 5.0) ++counts[0];
        else if (m.ahi <= 15.0) ++counts[1];
        else if (m.ahi <= 30.0) ++counts[2];
        else ++counts[3];
    }
    for (int g = 0; g < 4; ++g) CHECK(counts[g] > 5);
}
