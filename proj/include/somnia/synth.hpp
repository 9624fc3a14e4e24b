#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "somnia/dataio.hpp"
#include "somnia/dsp.hpp"
#include "somnia/hypnogram.hpp"

namespace somnia::synth {

// Stage-conditioned signal statistics. Rate means/SDs follow the ordinal
// relations of the real stages (slow regular Deep, fast irregular Wake/REM);
// the numbers themselves are generator parameters, not measurements.
struct StageProfile {
    double resp_rate_mean = 14.0;       // breaths/min
    double resp_rate_sd = 1.5;          // between-epoch SD
    double resp_irregularity = 1.0;     // within-epoch short-term multiplier
    double movement_prob_per_frame = 0.03;
    double movement_amp_mean = 1.0;
    double movement_burst_continue = 0.75;  // burst persistence per frame
};

struct SynthConfig {
    std::uint64_t seed = 1;
    double night_duration_min = 534.0;  // time in bed
    double frame_rate = 2.0;
    double sample_rate = 20.0;
    double resp_amp_rad = 0.5;
    double phase_noise_sd = 0.04;

    // rows W, L, D, R, cols W, L, D, R, terminal; diagonal zero, dwell
    // handled by the semi-Markov dwell draws
    std::array<std::array<double, 5>, 5> transitions = {{
        {0.00, 0.92, 0.01, 0.04, 0.03},
        {0.33, 0.00, 0.33, 0.34, 0.00},
        {0.25, 0.70, 0.00, 0.05, 0.00},
        {0.36, 0.61, 0.03, 0.00, 0.00},
        {0.00, 0.00, 0.00, 0.00, 1.00},
    }};
    std::array<double, 4> mean_dwell_epochs = {10.0, 24.0, 20.0, 20.0};
    double sleep_latency_mean_epochs = 70.0;  // first Wake bout

    std::array<StageProfile, 4> profiles = {{
        {16.0, 3.0, 2.0, 0.15, 3.0, 0.90},   // Wake: fast, irregular, mobile
        {14.0, 1.5, 1.0, 0.03, 1.0, 0.75},   // Light
        {12.0, 0.6, 0.4, 0.005, 0.5, 0.75},  // Deep: slow, very regular, still
        {15.0, 2.5, 1.8, 0.01, 0.6, 0.75},   // REM: irregular but atonic
    }};

    // calibration targets (aggregate checks only, not inputs to generation)
    double tst_target_min = 409.3;
    double tst_band_min = 62.0;
};

// Semi-Markov hypnogram: geometric dwells, transition matrix jumps, Wake
// start. Deep entries are down-weighted and REM entries up-weighted linearly
// with night progress. The terminal state fills the rest with Wake.
Hypnogram generate_hypnogram(const SynthConfig& cfg, std::uint64_t seed);

struct SynthSession {
    std::vector<double> times;   // seconds from lights off
    std::vector<double> phase;   // radians
    std::vector<dsp::FramePointSummary> frames;
    Hypnogram reference;         // four-class truth
    io::SubjectMetadata metadata;
};

io::SubjectMetadata sample_metadata(std::uint64_t seed, int subject_index);

// Phase = respiration sinusoid with stage-conditioned instantaneous rate,
// plus noise; movement bursts corrupt the sinusoid with a body-displacement
// random walk. Deterministic in (hypnogram, cfg, seed, metadata).
SynthSession synth_session(const Hypnogram& hypnogram, const SynthConfig& cfg,
                           std::uint64_t seed, const io::SubjectMetadata& metadata);

// Writes a full cohort in the dataio file formats and returns the manifest
// path. Session seeds derive from (cfg.seed, night index).
std::string write_cohort(const SynthConfig& cfg, int nights, const std::string& out_dir);

}  // namespace somnia::synth
