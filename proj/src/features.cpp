#include "somnia/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace somnia::features {

EpochStats epoch_stats(const std::vector<double>& values, bool strict) {
    const int n = static_cast<int>(values.size());
    require(n >= 1, "TooFewSamples", "epoch_stats needs at least one sample");
    if (strict) require(n >= 2, "TooFewSamples", "difference metrics need two samples");

    EpochStats s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / n;

    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(var / n);

    // trimmed mean: drop floor(0.1 n) from each tail after sorting
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    const int drop = n / 10;
    double tsum = 0.0;
    for (int i = drop; i < n - drop; ++i) tsum += sorted[i];
    s.trimmed_mean = tsum / (n - 2 * drop);

    if (n >= 2) {
        double sq = 0.0, asum = 0.0, amax = 0.0;
        for (int i = 1; i < n; ++i) {
            const double d = values[i] - values[i - 1];
            sq += d * d;
            asum += std::abs(d);
            amax = std::max(amax, std::abs(d));
        }
        s.rmssd = std::sqrt(sq / (n - 1));
        s.mean_abs_succ_diff = asum / (n - 1);
        s.max_abs_succ_diff = amax;
    }
    return s;
}

double dtw_distance(const std::vector<double>& a, const std::vector<double>& b, int band) {
    require(!a.empty() && !b.empty(), "EmptySequence", "dtw on empty sequence");
    const int n = static_cast<int>(a.size());
    const int m = static_cast<int>(b.size());
    const double inf = std::numeric_limits<double>::infinity();

    // two-row DP; band widened so the corner stays reachable when |n-m| > band
    int eff_band = band;
    if (band >= 0) eff_band = std::max(band, std::abs(n - m));

    std::vector<double> prev(m, inf), cur(m, inf);
    for (int i = 0; i < n; ++i) {
        int j_lo = 0, j_hi = m - 1;
        if (eff_band >= 0) {
            // keep |i*m/n - j| within the band, scaled to handle unequal lengths
            const double center = m > 1 && n > 1 ? static_cast<double>(i) * (m - 1) / (n - 1)
                                                 : 0.0;
            j_lo = std::max(0, static_cast<int>(std::floor(center)) - eff_band);
            j_hi = std::min(m - 1, static_cast<int>(std::ceil(center)) + eff_band);
        }
        std::fill(cur.begin(), cur.end(), inf);
        for (int j = j_lo; j <= j_hi; ++j) {
            const double cost = std::abs(a[i] - b[j]);
            double best;
            if (i == 0 && j == 0) {
                best = 0.0;
            } else {
                best = inf;
                if (i > 0) best = std::min(best, prev[j]);
                if (j > 0) best = std::min(best, cur[j - 1]);
                if (i > 0 && j > 0) best = std::min(best, prev[j - 1]);
            }
            cur[j] = cost + best;
        }
        std::swap(prev, cur);
    }
    return prev[m - 1];
}

namespace {

// DTW cumulative cost plus the optimal path length (diagonal preferred on
// ties, then the (i-1,j) predecessor). Used for the path-normalized feature.
double dtw_path_normalized(const std::vector<double>& a, const std::vector<double>& b, int band) {
    const int n = static_cast<int>(a.size());
    const int m = static_cast<int>(b.size());
    const double inf = std::numeric_limits<double>::infinity();
    int eff_band = band >= 0 ? std::max(band, std::abs(n - m)) : -1;

    std::vector<double> dp(static_cast<std::size_t>(n) * m, inf);
    auto at = [&](int i, int j) -> double& { return dp[static_cast<std::size_t>(i) * m + j]; };
    for (int i = 0; i < n; ++i) {
        int j_lo = 0, j_hi = m - 1;
        if (eff_band >= 0) {
            const double center = m > 1 && n > 1 ? static_cast<double>(i) * (m - 1) / (n - 1)
                                                 : 0.0;
            j_lo = std::max(0, static_cast<int>(std::floor(center)) - eff_band);
            j_hi = std::min(m - 1, static_cast<int>(std::ceil(center)) + eff_band);
        }
        for (int j = j_lo; j <= j_hi; ++j) {
            const double cost = std::abs(a[i] - b[j]);
            double best = inf;
            if (i == 0 && j == 0)
                best = 0.0;
            else {
                if (i > 0 && j > 0) best = std::min(best, at(i - 1, j - 1));
                if (i > 0) best = std::min(best, at(i - 1, j));
                if (j > 0) best = std::min(best, at(i, j - 1));
            }
            at(i, j) = cost + best;
        }
    }
    const double total = at(n - 1, m - 1);
    // backtrack to count path steps
    int i = n - 1, j = m - 1, steps = 1;
    while (i > 0 || j > 0) {
        const double d = (i > 0 && j > 0) ? at(i - 1, j - 1) : inf;
        const double u = i > 0 ? at(i - 1, j) : inf;
        const double l = j > 0 ? at(i, j - 1) : inf;
        if (d <= u && d <= l) {
            --i;
            --j;
        } else if (u <= l) {
            --i;
        } else {
            --j;
        }
        ++steps;
    }
    return total / steps;
}

std::vector<double> downsample_epoch(const dsp::RespWaveform& wave, int epoch_index,
                                     double target_rate) {
    const int per_epoch = static_cast<int>(std::lround(30.0 * wave.sample_rate));
    const int stride = std::max(1, static_cast<int>(std::lround(wave.sample_rate / target_rate)));
    const std::size_t begin = static_cast<std::size_t>(epoch_index) * per_epoch;
    std::vector<double> out;
    out.reserve(per_epoch / stride + 1);
    for (int k = 0; k < per_epoch; k += stride) {
        const std::size_t idx = begin + k;
        if (idx >= wave.samples.size()) break;
        out.push_back(wave.samples[idx]);
    }
    return out;
}

}  // namespace

std::optional<double> adjacent_epoch_dtw(const dsp::RespWaveform& wave, int epoch_index,
                                         const std::vector<bool>& epoch_motion_valid,
                                         const FeatureConfig& cfg) {
    if (epoch_index <= 0) return std::nullopt;  // no left neighbor
    if (epoch_index >= static_cast<int>(epoch_motion_valid.size())) return std::nullopt;
    if (!epoch_motion_valid[epoch_index] || !epoch_motion_valid[epoch_index - 1]) return std::nullopt;

    const auto prev = downsample_epoch(wave, epoch_index - 1, cfg.dtw_sample_rate);
    const auto cur = downsample_epoch(wave, epoch_index, cfg.dtw_sample_rate);
    if (prev.empty() || cur.empty()) return std::nullopt;
    return dtw_path_normalized(prev, cur, cfg.dtw_band);
}

MovementFeatures movement_features(const std::vector<dsp::MotionFrame>& epoch_frames) {
    MovementFeatures f;
    int run = 0;
    for (const auto& m : epoch_frames) {
        if (m.moving) {
            ++run;
            ++f.total_moving;
            f.cumulative_amplitude += m.amplitude;
            f.max_consecutive_moving = std::max(f.max_consecutive_moving, run);
        } else {
            run = 0;
        }
    }
    return f;
}

TemporalContext temporal_context_features(double clock_seconds, int epoch_index, int total_epochs) {
    require(total_epochs >= 2, "TooFewSamples", "temporal context needs >= 2 epochs");
    TemporalContext t;
    const double hours = clock_seconds / 3600.0;
    t.circadian = -std::cos(2.0 * M_PI * (hours - 3.0) / 24.0);
    t.progress = static_cast<double>(epoch_index) / (total_epochs - 1);
    return t;
}

std::optional<EpochStats> multiscale_stats(const dsp::RateSeries& rates, int epoch_index,
                                           int window_seconds) {
    require(window_seconds % 30 == 0 && (window_seconds / 30) % 2 == 1, "InternalError",
            "windows must be odd multiples of 30 s");
    const int half = (window_seconds / 30 - 1) / 2;
    const int n = static_cast<int>(rates.size());
    const int lo = std::max(0, epoch_index - half);
    const int hi = std::min(n - 1, epoch_index + half);
    std::vector<double> vals;
    vals.reserve(hi - lo + 1);
    for (int e = lo; e <= hi; ++e)
        if (rates[e].valid) vals.push_back(rates[e].rate_bpm);
    if (vals.empty()) return std::nullopt;
    return epoch_stats(vals);
}

std::vector<std::string> feature_layout(const FeatureConfig& cfg) {
    std::vector<std::string> names;
    const char* stat_names[] = {"trimmed_mean", "mean",          "std",
                                "rmssd",        "mean_abs_diff", "max_abs_diff"};
    for (int w : cfg.window_seconds)
        for (const char* st : stat_names)
            names.push_back("rr_" + std::string(st) + "_" + std::to_string(w) + "s");
    names.push_back("dtw_adjacent");
    names.push_back("move_max_run");
    names.push_back("move_total");
    names.push_back("move_amp");
    names.push_back("circadian");
    names.push_back("night_progress");
    for (int w : cfg.window_seconds) names.push_back("imp_rr_" + std::to_string(w) + "s");
    names.push_back("imp_dtw");
    return names;
}

FeatureMatrix assemble_feature_matrix(const SessionSignals& signals, const FeatureConfig& cfg) {
    const int n_epochs = static_cast<int>(signals.gated_rates.size());
    require(n_epochs >= 2, "GridMisalignment", "need at least two epochs");
    require(signals.moving_fraction.size() == signals.gated_rates.size(), "GridMisalignment",
            "motion fractions not aligned with rate series");
    const int wave_epochs =
        static_cast<int>(signals.waveform.samples.size() /
                         static_cast<std::size_t>(std::lround(30.0 * signals.waveform.sample_rate)));
    require(wave_epochs >= n_epochs, "GridMisalignment", "waveform shorter than epoch grid");

    const int n_windows = static_cast<int>(cfg.window_seconds.size());
    const int n_rate_feats = 6 * n_windows;
    const int width = n_rate_feats + 1 + 3 + 2 + n_windows + 1;

    std::vector<bool> motion_valid(n_epochs);
    for (int e = 0; e < n_epochs; ++e) motion_valid[e] = signals.gated_rates[e].valid;

    const int frames_per_epoch = static_cast<int>(std::lround(30.0 * signals.frame_rate));
    // bucket motion frames by their frame_index (sequences may have gaps)
    std::vector<std::vector<dsp::MotionFrame>> frames_by_epoch(n_epochs);
    for (const auto& mf : signals.motion) {
        const int fe = static_cast<int>(mf.frame_index / frames_per_epoch);
        if (fe >= 0 && fe < n_epochs) frames_by_epoch[fe].push_back(mf);
    }

    FeatureMatrix m;
    m.session_id = signals.session_id;
    m.feature_names = feature_layout(cfg);
    m.epochs.resize(n_epochs);

    // raw values with imputation markers (NaN) first; median-impute after
    std::vector<std::vector<double>> raw(n_epochs, std::vector<double>(width, 0.0));
    const double nan = std::numeric_limits<double>::quiet_NaN();

    for (int e = 0; e < n_epochs; ++e) {
        auto& row = raw[e];
        int col = 0;
        for (int wi = 0; wi < n_windows; ++wi) {
            const auto st = multiscale_stats(signals.gated_rates, e, cfg.window_seconds[wi]);
            if (st) {
                row[col + 0] = st->trimmed_mean;
                row[col + 1] = st->mean;
                row[col + 2] = st->std;
                row[col + 3] = st->rmssd;
                row[col + 4] = st->mean_abs_succ_diff;
                row[col + 5] = st->max_abs_succ_diff;
            } else {
                for (int k = 0; k < 6; ++k) row[col + k] = nan;
                row[n_rate_feats + 6 + wi] = 1.0;  // imputation indicator
            }
            col += 6;
        }
        const auto dtw = adjacent_epoch_dtw(signals.waveform, e, motion_valid, cfg);
        if (dtw) {
            row[col] = *dtw;
        } else {
            row[col] = nan;
            row[width - 1] = 1.0;
        }
        ++col;

        const MovementFeatures mf = movement_features(frames_by_epoch[e]);
        row[col++] = mf.max_consecutive_moving;
        row[col++] = mf.total_moving;
        row[col++] = mf.cumulative_amplitude;

        const TemporalContext tc =
            temporal_context_features(signals.start_clock + e * 30.0, e, n_epochs);
        row[col++] = tc.circadian;
        row[col++] = tc.progress;
    }

    // session-level median imputation per feature column
    for (int c = 0; c < n_rate_feats + 1; ++c) {
        std::vector<double> present;
        for (int e = 0; e < n_epochs; ++e)
            if (!std::isnan(raw[e][c])) present.push_back(raw[e][c]);
        double fill = 0.0;
        if (!present.empty()) {
            std::sort(present.begin(), present.end());
            const std::size_t k = present.size() / 2;
            fill = present.size() % 2 == 1 ? present[k]
                                           : 0.5 * (present[k - 1] + present[k]);
        }
        for (int e = 0; e < n_epochs; ++e)
            if (std::isnan(raw[e][c])) raw[e][c] = fill;
    }

    for (int e = 0; e < n_epochs; ++e) {
        m.epochs[e].epoch_index = e;
        m.epochs[e].values = std::move(raw[e]);
        m.epochs[e].valid = motion_valid[e];
    }
    return m;
}

void write_feature_csv(const FeatureMatrix& m, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), "IoError", "cannot open " + path + " for writing");
    out << "epoch_index";
    for (const auto& n : m.feature_names) out << ',' << n;
    out << ",valid\n";
    char buf[64];
    for (const auto& e : m.epochs) {
        out << e.epoch_index;
        for (double v : e.values) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << ',' << buf;
        }
        out << ',' << (e.valid ? 1 : 0) << '\n';
    }
    require(out.good(), "IoError", "failed writing " + path);
}

FeatureMatrix read_feature_csv(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "IoError", "cannot open " + path);
    FeatureMatrix m;
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), "ParseError", path + ": missing header");
    {
        std::stringstream ss(line);
        std::string tok;
        std::getline(ss, tok, ',');
        require(tok == "epoch_index", "ParseError", path + ": unexpected header");
        while (std::getline(ss, tok, ',')) m.feature_names.push_back(tok);
        require(!m.feature_names.empty() && m.feature_names.back() == "valid", "ParseError",
                path + ": header must end with 'valid'");
        m.feature_names.pop_back();
    }
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        EpochFeatureVector e;
        std::getline(ss, tok, ',');
        e.epoch_index = std::stoi(tok);
        while (std::getline(ss, tok, ',')) {
            std::size_t pos = 0;
            double v = std::stod(tok, &pos);
            require(pos == tok.size(), "ParseError",
                    path + ":" + std::to_string(lineno) + ": bad numeric cell '" + tok + "'");
            e.values.push_back(v);
        }
        require(e.values.size() == m.feature_names.size() + 1, "ParseError",
                path + ":" + std::to_string(lineno) + ": wrong column count");
        e.valid = e.values.back() != 0.0;
        e.values.pop_back();
        m.epochs.push_back(std::move(e));
    }
    return m;
}

}  // namespace somnia::features
