#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "somnia/error.hpp"

namespace somnia::dsp {

constexpr double kInternalRateHz = 20.0;   // fixed processing rate; inputs are resampled
constexpr double kBandLowHz = 0.1;
constexpr double kBandHighHz = 0.6;
constexpr double kRateMinBpm = 6.0;        // physiological band implied by the passband
constexpr double kRateMaxBpm = 30.0;

// Uniformly sampled radar phase from the chest range bin.
struct PhaseSeries {
    std::vector<double> samples;   // radians
    double sample_rate = 0.0;      // Hz
    double start_clock = 0.0;      // seconds since midnight of samples[0]
};

// Band-limited displacement-proportional respiration signal.
struct RespWaveform {
    std::vector<double> samples;
    double sample_rate = 0.0;
};

// Per-frame aggregate of the radar point cloud; spatial structure is assumed
// pre-reduced to a single amplitude upstream.
struct FramePointSummary {
    std::int64_t frame_index = 0;
    int point_count = 0;
    double motion_amplitude = 0.0;
};

struct MotionFrame {
    std::int64_t frame_index = 0;
    bool moving = false;
    double amplitude = 0.0;
};

// One respiration-rate estimate per 30 s epoch. `valid == false` is the
// INVALID marker; rate is meaningless in that case.
struct RateEntry {
    double rate_bpm = 0.0;
    double confidence = 0.0;
    bool valid = false;
};

using RateSeries = std::vector<RateEntry>;

struct MotionThresholds {
    int count_threshold = 5;
    double amp_threshold = 0.5;
    double gate_fraction = 0.5;   // epoch invalid iff moving fraction > this
};

// Second-order sections of the fixed 0.1-0.6 Hz Butterworth bandpass
// (4th-order prototype -> 8 poles) designed for kInternalRateHz.
struct BandpassFilter {
    struct Biquad {
        double b0, b1, b2;  // numerator
        double a1, a2;      // denominator (a0 == 1)
    };
    std::vector<Biquad> sections;

    static BandpassFilter design(double low_hz, double high_hz, double fs, int order = 4);
    // Complex frequency response at f (Hz); used by tests and calibration.
    double magnitude_at(double f_hz, double fs) const;
};

// --- operations -----------------------------------------------------------

// Remove 2*pi discontinuities; output[0] == input[0] and successive
// differences end up in (-pi, pi].
PhaseSeries unwrap_phase(const PhaseSeries& wrapped);

// Linear interpolation of (time, value) pairs onto a uniform grid.
// `supported`, when given, receives per-output-sample flags telling whether
// the grid point was bracketed by finite inputs within `max_gap_seconds`.
PhaseSeries resample_uniform(const std::vector<double>& times,
                             const std::vector<double>& values,
                             double target_rate, double start_clock,
                             std::vector<std::uint8_t>* supported = nullptr,
                             double max_gap_seconds = 0.5);

// Zero-phase 0.1-0.6 Hz bandpass (forward-backward, odd reflective padding
// of three filter lengths). Requires sample_rate >= 2 Hz and >= 10 s of data.
RespWaveform bandpass_respiration(const PhaseSeries& unwrapped);

// Fusion of the peak-based and spectral estimators before the physiological
// band check. `detected == false` means no breath signal was found at all.
struct RawRateEstimate {
    double rate_bpm = 0.0;
    double confidence = 0.0;
    bool detected = false;
};

RawRateEstimate estimate_rate_fused(const double* samples, int n, double sample_rate);

// Fused peak/spectral rate estimate for one window of the waveform; estimates
// outside [6, 30] breaths/min become the INVALID marker rather than throwing.
RateEntry estimate_respiration_rate(const double* samples, int n, double sample_rate);
RateEntry estimate_respiration_rate(const RespWaveform& wave, double epoch_window_seconds);

// Per-epoch rate series over a whole-night waveform (one entry per full
// 30 s epoch; a trailing partial epoch is dropped).
RateSeries estimate_rate_series(const RespWaveform& wave, double epoch_seconds = 30.0);

// Threshold the point-cloud summaries: moving iff point_count or amplitude
// reaches its threshold. Frames must be ordered by frame_index.
std::vector<MotionFrame> compute_motion_series(const std::vector<FramePointSummary>& frames,
                                               const MotionThresholds& thresholds);

// Fraction of moving frames per 30 s epoch given the frame rate.
std::vector<double> epoch_moving_fraction(const std::vector<MotionFrame>& motion,
                                          double frame_rate, int num_epochs);

// Suspend rate estimates in movement-heavy epochs: entries whose moving
// fraction exceeds gate_fraction become invalid with confidence 0.
RateSeries gate_resp_rate(const RateSeries& rates, const std::vector<double>& moving_fraction,
                          double gate_fraction);

// Peak indices used by the rate estimator; exposed for tests.
std::vector<int> detect_breath_peaks(const double* x, int n, double sample_rate);

}  // namespace somnia::dsp
