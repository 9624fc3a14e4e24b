#pragma once

#include <optional>
#include <string>
#include <vector>

#include "somnia/dsp.hpp"
#include "somnia/error.hpp"

namespace somnia::features {

// Statistics of one window of rate samples. Successive-difference metrics
// over fewer than two samples are zero by definition (no pairs), which keeps
// the 30 s scale well defined without an imputation flag.
struct EpochStats {
    double trimmed_mean = 0.0;
    double mean = 0.0;
    double std = 0.0;       // population
    double rmssd = 0.0;
    double mean_abs_succ_diff = 0.0;
    double max_abs_succ_diff = 0.0;
};

// `strict` enforces the >=2 sample precondition for difference metrics and
// throws TooFewSamples; the feature pipeline uses the permissive form.
EpochStats epoch_stats(const std::vector<double>& values, bool strict = false);

struct EpochFeatureVector {
    int epoch_index = 0;
    std::vector<double> values;
    bool valid = true;  // false when respiration was gated for the whole epoch
};

struct FeatureMatrix {
    std::string session_id;
    std::vector<std::string> feature_names;
    std::vector<EpochFeatureVector> epochs;

    int num_epochs() const { return static_cast<int>(epochs.size()); }
    int width() const { return static_cast<int>(feature_names.size()); }
};

struct FeatureConfig {
    std::vector<int> window_seconds = {30, 90, 150, 270, 510};  // odd multiples of 30 s
    double dtw_sample_rate = 2.0;   // epoch waveforms are downsampled to this
    int dtw_band = 10;              // Sakoe-Chiba band half-width, samples
};

// Classic DTW with absolute-difference cost and steps (i-1,j), (i,j-1),
// (i-1,j-1). band < 0 disables the Sakoe-Chiba constraint.
double dtw_distance(const std::vector<double>& a, const std::vector<double>& b, int band = -1);

// DTW between downsampled epoch e-1 and epoch e waveforms, divided by the
// optimal warping path length. Empty when either epoch is missing or gated.
std::optional<double> adjacent_epoch_dtw(const dsp::RespWaveform& wave, int epoch_index,
                                         const std::vector<bool>& epoch_motion_valid,
                                         const FeatureConfig& cfg = {});

struct MovementFeatures {
    int max_consecutive_moving = 0;
    int total_moving = 0;
    double cumulative_amplitude = 0.0;  // over moving frames
};

MovementFeatures movement_features(const std::vector<dsp::MotionFrame>& epoch_frames);

struct TemporalContext {
    double circadian = 0.0;  // [-1, 1], nadir at 03:00
    double progress = 0.0;   // [0, 1] through the night
};

TemporalContext temporal_context_features(double clock_seconds, int epoch_index, int total_epochs);

// Stats of the valid rate samples inside the window_seconds window centered
// on epoch_index (truncated at the session bounds). Empty when the window
// holds no valid sample.
std::optional<EpochStats> multiscale_stats(const dsp::RateSeries& rates, int epoch_index,
                                           int window_seconds);

// All per-epoch inputs for one session, aligned on one epoch grid.
struct SessionSignals {
    std::string session_id;
    dsp::RateSeries gated_rates;            // per epoch
    dsp::RespWaveform waveform;             // filtered, full night
    std::vector<dsp::MotionFrame> motion;   // per frame
    double frame_rate = 2.0;
    std::vector<double> moving_fraction;    // per epoch
    double start_clock = 0.0;               // seconds since midnight of epoch 0
};

// Fixed documented layout: for each window scale the six rate statistics,
// then the adjacent-epoch DTW value, three movement features, two temporal
// features, and one imputation indicator per rate scale plus one for DTW.
std::vector<std::string> feature_layout(const FeatureConfig& cfg = {});

FeatureMatrix assemble_feature_matrix(const SessionSignals& signals, const FeatureConfig& cfg = {});

// CSV round trip: single header row, one row per epoch, feature columns in
// layout order then `valid`.
void write_feature_csv(const FeatureMatrix& m, const std::string& path);
FeatureMatrix read_feature_csv(const std::string& path);

}  // namespace somnia::features
