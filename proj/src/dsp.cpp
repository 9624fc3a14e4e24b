#include "somnia/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include "somnia/log.hpp"

namespace somnia::dsp {

namespace {

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

double mean_of(const double* x, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += x[i];
    return n > 0 ? s / n : 0.0;
}

double population_std(const double* x, int n) {
    if (n == 0) return 0.0;
    double m = mean_of(x, n);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        double d = x[i] - m;
        acc += d * d;
    }
    return std::sqrt(acc / n);
}

}  // namespace

// --- phase unwrap -----------------------------------------------------------

PhaseSeries unwrap_phase(const PhaseSeries& wrapped) {
    require(!wrapped.samples.empty(), "EmptySignal", "unwrap_phase on empty series");
    require(all_finite(wrapped.samples), "NonFiniteSample", "unwrap_phase input has non-finite values");

    PhaseSeries out = wrapped;
    const auto& in = wrapped.samples;
    out.samples[0] = in[0];
    for (std::size_t i = 1; i < in.size(); ++i) {
        double d = in[i] - in[i - 1];
        // wrap the jump into (-pi, pi]
        double m = std::ceil((d - M_PI) / (2.0 * M_PI));
        out.samples[i] = out.samples[i - 1] + (d - 2.0 * M_PI * m);
    }
    return out;
}

// --- resampling -------------------------------------------------------------

PhaseSeries resample_uniform(const std::vector<double>& times,
                             const std::vector<double>& values,
                             double target_rate, double start_clock,
                             std::vector<std::uint8_t>* supported,
                             double max_gap_seconds) {
    require(times.size() == values.size(), "LengthMismatch", "times/values size differ");
    require(!times.empty(), "EmptySignal", "resample of empty input");
    require(target_rate > 0.0, "SampleRateTooLow", "target rate must be positive");
    for (std::size_t i = 1; i < times.size(); ++i)
        require(times[i] > times[i - 1], "NonMonotoneTime",
                "timestamps must be strictly increasing (row " + std::to_string(i) + ")");

    // Work on the finite subsequence; non-finite values are gaps.
    std::vector<double> ft, fv;
    ft.reserve(times.size());
    fv.reserve(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (std::isfinite(values[i])) {
            ft.push_back(times[i]);
            fv.push_back(values[i]);
        }
    }

    const double t0 = times.front();
    const double t1 = times.back();
    const int n = static_cast<int>(std::floor((t1 - t0) * target_rate + 1e-9)) + 1;

    PhaseSeries out;
    out.sample_rate = target_rate;
    out.start_clock = start_clock;
    out.samples.resize(n);
    if (supported) supported->assign(n, 0);

    if (ft.empty()) {
        std::fill(out.samples.begin(), out.samples.end(), 0.0);
        return out;
    }

    std::size_t j = 0;  // ft[j] <= t < ft[j+1]
    for (int k = 0; k < n; ++k) {
        const double t = t0 + k / target_rate;
        while (j + 1 < ft.size() && ft[j + 1] <= t) ++j;
        double v;
        bool ok;
        if (t <= ft.front()) {
            v = fv.front();
            ok = (ft.front() - t) <= max_gap_seconds;
        } else if (j + 1 >= ft.size()) {
            v = fv.back();
            ok = (t - ft.back()) <= max_gap_seconds;
        } else {
            const double ta = ft[j], tb = ft[j + 1];
            const double w = (t - ta) / (tb - ta);
            v = fv[j] * (1.0 - w) + fv[j + 1] * w;
            ok = (tb - ta) <= max_gap_seconds;
        }
        out.samples[k] = v;
        if (supported) (*supported)[k] = ok ? 1 : 0;
    }
    return out;
}

// --- Butterworth bandpass design --------------------------------------------

BandpassFilter BandpassFilter::design(double low_hz, double high_hz, double fs, int order) {
    require(fs > 0.0 && low_hz > 0.0 && high_hz > low_hz && high_hz < fs / 2.0,
            "SampleRateTooLow", "invalid bandpass design parameters");
    require(order >= 2 && order % 2 == 0, "InternalError", "bandpass order must be even");

    using cd = std::complex<double>;
    const double fs2 = 2.0 * fs;
    // prewarped analog band edges
    const double w1 = fs2 * std::tan(M_PI * low_hz / fs);
    const double w2 = fs2 * std::tan(M_PI * high_hz / fs);
    const double bw = w2 - w1;
    const double w0sq = w1 * w2;

    // analog Butterworth prototype poles on the unit circle, left half-plane
    std::vector<cd> proto;
    for (int k = 1; k <= order; ++k) {
        double theta = M_PI * (2.0 * k + order - 1.0) / (2.0 * order);
        proto.emplace_back(std::cos(theta), std::sin(theta));
    }

    // lowpass -> bandpass: each prototype pole becomes two
    std::vector<cd> apoles;
    for (const cd& p : proto) {
        cd t = p * (bw / 2.0);
        cd disc = std::sqrt(t * t - w0sq);
        apoles.push_back(t + disc);
        apoles.push_back(t - disc);
    }

    // bilinear transform; `order` analog zeros sit at s = 0
    std::vector<cd> dpoles;
    dpoles.reserve(apoles.size());
    cd den_prod(1.0, 0.0);
    for (const cd& s : apoles) {
        dpoles.push_back((fs2 + s) / (fs2 - s));
        den_prod *= (fs2 - s);
    }
    const double k_analog = std::pow(bw, order);
    const cd num_prod = std::pow(cd(fs2, 0.0), order);  // from zeros at s = 0
    const double k_digital = k_analog * (num_prod / den_prod).real();

    // pair conjugate digital poles into biquads; zeros at +1 and -1 give
    // numerator (1, 0, -1) per section
    std::vector<cd> uppers;
    for (const cd& z : dpoles)
        if (z.imag() > 1e-12) uppers.push_back(z);
    require(static_cast<int>(uppers.size()) == order, "InternalError",
            "unexpected pole configuration in bandpass design");

    BandpassFilter f;
    const int nsec = order;
    const double g = std::pow(std::abs(k_digital), 1.0 / nsec);
    double sign = k_digital < 0.0 ? -1.0 : 1.0;
    for (int s = 0; s < nsec; ++s) {
        const cd& z = uppers[s];
        Biquad q;
        double gs = (s == 0) ? sign * g : g;
        q.b0 = gs;
        q.b1 = 0.0;
        q.b2 = -gs;
        q.a1 = -2.0 * z.real();
        q.a2 = std::norm(z);
        f.sections.push_back(q);
    }
    return f;
}

double BandpassFilter::magnitude_at(double f_hz, double fs) const {
    using cd = std::complex<double>;
    const double w = 2.0 * M_PI * f_hz / fs;
    const cd e1 = std::polar(1.0, -w);
    const cd e2 = std::polar(1.0, -2.0 * w);
    double mag = 1.0;
    for (const auto& q : sections) {
        cd num = cd(q.b0) + cd(q.b1) * e1 + cd(q.b2) * e2;
        cd den = cd(1.0) + cd(q.a1) * e1 + cd(q.a2) * e2;
        mag *= std::abs(num) / std::abs(den);
    }
    return mag;
}

// --- zero-phase filtering ---------------------------------------------------

namespace {

struct BiquadState {
    double z1 = 0.0, z2 = 0.0;
};

// transposed direct form II, in place
void run_sos(const BandpassFilter& f, std::vector<double>& x, std::vector<BiquadState>& zi) {
    for (std::size_t s = 0; s < f.sections.size(); ++s) {
        const auto& q = f.sections[s];
        double z1 = zi[s].z1, z2 = zi[s].z2;
        for (double& v : x) {
            const double in = v;
            const double out = q.b0 * in + z1;
            z1 = q.b1 * in + z2 - q.a1 * out;
            z2 = q.b2 * in - q.a2 * out;
            v = out;
        }
    }
}

// steady-state step-response state per section, scaled so that a constant
// input produces no startup transient (scipy-style sosfilt_zi)
std::vector<BiquadState> step_zi(const BandpassFilter& f, double x0) {
    std::vector<BiquadState> zi(f.sections.size());
    double scale = x0;
    for (std::size_t s = 0; s < f.sections.size(); ++s) {
        const auto& q = f.sections[s];
        const double h1 = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
        zi[s].z1 = scale * (h1 - q.b0);
        zi[s].z2 = scale * (q.b2 - q.a2 * h1);
        scale *= h1;
    }
    return zi;
}

std::vector<double> sos_filtfilt(const BandpassFilter& f, const std::vector<double>& x) {
    const int n = static_cast<int>(x.size());
    const int ntaps = 2 * static_cast<int>(f.sections.size()) + 1;
    int edge = 3 * ntaps;
    if (edge >= n) edge = n - 1;

    // odd reflective extension on both ends
    std::vector<double> ext;
    ext.reserve(n + 2 * edge);
    for (int i = edge; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (int i = 1; i <= edge; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

    auto zi = step_zi(f, ext.front());
    run_sos(f, ext, zi);
    std::reverse(ext.begin(), ext.end());
    zi = step_zi(f, ext.front());
    run_sos(f, ext, zi);
    std::reverse(ext.begin(), ext.end());

    return std::vector<double>(ext.begin() + edge, ext.begin() + edge + n);
}

}  // namespace

RespWaveform bandpass_respiration(const PhaseSeries& unwrapped) {
    require(!unwrapped.samples.empty(), "EmptySignal", "bandpass on empty series");
    require(unwrapped.sample_rate >= 2.0, "SampleRateTooLow",
            "bandpass needs >= 2 Hz sampling, got " + std::to_string(unwrapped.sample_rate));
    require(static_cast<double>(unwrapped.samples.size()) >= 10.0 * unwrapped.sample_rate,
            "SignalTooShort", "bandpass needs >= 10 s of samples");
    require(all_finite(unwrapped.samples), "NonFiniteSample", "bandpass input has non-finite values");

    BandpassFilter f = BandpassFilter::design(kBandLowHz, kBandHighHz, unwrapped.sample_rate);
    // remove the bulk offset up front; the filter kills DC anyway but large
    // offsets inflate the reflective-padding startup transient
    std::vector<double> centered = unwrapped.samples;
    const double m = mean_of(centered.data(), static_cast<int>(centered.size()));
    for (double& v : centered) v -= m;

    RespWaveform out;
    out.sample_rate = unwrapped.sample_rate;
    out.samples = sos_filtfilt(f, centered);
    return out;
}

// --- respiration rate -------------------------------------------------------

std::vector<int> detect_breath_peaks(const double* x, int n, double sample_rate) {
    const double sd = population_std(x, n);
    if (sd <= 0.0) return {};
    const double min_prom = 0.2 * sd;
    const int min_dist = static_cast<int>(std::lround(2.0 * sample_rate));

    struct Cand {
        int idx;
        double prom;
    };
    std::vector<Cand> cands;
    for (int i = 1; i + 1 < n; ++i) {
        if (!(x[i] > x[i - 1] && x[i] >= x[i + 1])) continue;
        // prominence: drop to the higher of the two valley minima, where each
        // valley runs to the nearest strictly higher sample or the window edge
        double lmin = x[i];
        for (int j = i - 1; j >= 0; --j) {
            if (x[j] > x[i]) break;
            lmin = std::min(lmin, x[j]);
        }
        double rmin = x[i];
        for (int j = i + 1; j < n; ++j) {
            if (x[j] > x[i]) break;
            rmin = std::min(rmin, x[j]);
        }
        const double prom = x[i] - std::max(lmin, rmin);
        if (prom >= min_prom) cands.push_back({i, prom});
    }

    // enforce minimum spacing, keeping the most prominent peaks
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.prom != b.prom) return a.prom > b.prom;
        return a.idx < b.idx;
    });
    std::vector<int> kept;
    for (const auto& c : cands) {
        bool blocked = false;
        for (int k : kept) {
            if (std::abs(k - c.idx) < min_dist) {
                blocked = true;
                break;
            }
        }
        if (!blocked) kept.push_back(c.idx);
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

namespace {

struct SpectralPeak {
    double freq_hz = 0.0;
    bool valid = false;
};

// dense Hann-windowed DFT scan of the passband; parabolic refinement
SpectralPeak spectral_rate(const double* x, int n, double fs) {
    SpectralPeak out;
    const double m = mean_of(x, n);
    double rms = 0.0;
    std::vector<double> y(n);
    for (int i = 0; i < n; ++i) {
        const double w = n > 1 ? 0.5 * (1.0 - std::cos(2.0 * M_PI * i / (n - 1))) : 1.0;
        y[i] = (x[i] - m) * w;
        rms += (x[i] - m) * (x[i] - m);
    }
    rms = std::sqrt(rms / std::max(1, n));
    if (rms < 1e-9) return out;  // no measurable oscillation

    const double f_lo = kBandLowHz, f_hi = kBandHighHz, df = 0.002;
    const int nbins = static_cast<int>(std::lround((f_hi - f_lo) / df)) + 1;
    std::vector<double> mag(nbins);
    double mag_sum = 0.0;
    int best = 0;
    for (int k = 0; k < nbins; ++k) {
        const double f = f_lo + k * df;
        const double wstep = 2.0 * M_PI * f / fs;
        // rotate a unit phasor instead of calling sin/cos per sample
        const double rot_c = std::cos(wstep), rot_s = std::sin(wstep);
        double pc = 1.0, ps = 0.0;  // cos(w i), sin(w i)
        double re = 0.0, im = 0.0;
        for (int i = 0; i < n; ++i) {
            re += y[i] * pc;
            im -= y[i] * ps;
            const double npc = pc * rot_c - ps * rot_s;
            ps = pc * rot_s + ps * rot_c;
            pc = npc;
        }
        mag[k] = std::hypot(re, im);
        mag_sum += mag[k];
        if (mag[k] > mag[best]) best = k;
    }
    const double mag_mean = mag_sum / nbins;
    if (mag[best] < 3.0 * mag_mean) return out;  // no dominant component

    double f_star = f_lo + best * df;
    if (best > 0 && best + 1 < nbins) {
        const double a = mag[best - 1], b = mag[best], c = mag[best + 1];
        const double denom = a - 2.0 * b + c;
        if (denom < 0.0) {
            double delta = 0.5 * (a - c) / denom;
            delta = std::clamp(delta, -0.5, 0.5);
            f_star += delta * df;
        }
    }
    out.freq_hz = f_star;
    out.valid = true;
    return out;
}

}  // namespace

RawRateEstimate estimate_rate_fused(const double* samples, int n, double sample_rate) {
    RawRateEstimate entry;
    if (n < 2) return entry;

    const std::vector<int> peaks = detect_breath_peaks(samples, n, sample_rate);
    const SpectralPeak spec = spectral_rate(samples, n, sample_rate);

    double peak_rate = 0.0;
    bool have_peak = false;
    if (peaks.size() >= 2) {
        const double span_s = (peaks.back() - peaks.front()) / sample_rate;
        if (span_s > 0.0) {
            peak_rate = 60.0 * (static_cast<double>(peaks.size()) - 1.0) / span_s;
            have_peak = true;
        }
    }
    const bool have_spec = spec.valid;
    const double spec_rate = 60.0 * spec.freq_hz;

    double rate = 0.0, conf = 0.0;
    if (have_peak && have_spec) {
        if (std::abs(peak_rate - spec_rate) <= 3.0) {
            rate = 0.5 * (peak_rate + spec_rate);
            conf = 1.0;
        } else {
            rate = spec_rate;  // robust to missed/split peaks
            conf = 0.5;
        }
    } else if (have_spec) {
        rate = spec_rate;
        conf = 0.5;
    } else if (have_peak) {
        rate = peak_rate;
        conf = 0.5;
    } else {
        return entry;  // no breath detected
    }

    entry.rate_bpm = rate;
    entry.confidence = conf;
    entry.detected = true;
    return entry;
}

RateEntry estimate_respiration_rate(const double* samples, int n, double sample_rate) {
    RateEntry entry;
    const RawRateEstimate raw = estimate_rate_fused(samples, n, sample_rate);
    // NoBreathDetected and out-of-band estimates both yield the INVALID marker
    if (!raw.detected || raw.rate_bpm < kRateMinBpm || raw.rate_bpm > kRateMaxBpm) return entry;
    entry.rate_bpm = raw.rate_bpm;
    entry.confidence = raw.confidence;
    entry.valid = true;
    return entry;
}

RateEntry estimate_respiration_rate(const RespWaveform& wave, double epoch_window_seconds) {
    require(epoch_window_seconds >= 30.0, "SignalTooShort", "rate window must be >= 30 s");
    const int want = static_cast<int>(std::lround(epoch_window_seconds * wave.sample_rate));
    require(static_cast<int>(wave.samples.size()) >= want, "SignalTooShort",
            "waveform shorter than requested rate window");
    return estimate_respiration_rate(wave.samples.data(), want, wave.sample_rate);
}

RateSeries estimate_rate_series(const RespWaveform& wave, double epoch_seconds) {
    const int per_epoch = static_cast<int>(std::lround(epoch_seconds * wave.sample_rate));
    require(per_epoch > 0, "SampleRateTooLow", "epoch shorter than one sample");
    const int n_epochs = static_cast<int>(wave.samples.size()) / per_epoch;
    RateSeries out(n_epochs);
    for (int e = 0; e < n_epochs; ++e)
        out[e] = estimate_respiration_rate(wave.samples.data() + static_cast<std::size_t>(e) * per_epoch,
                                           per_epoch, wave.sample_rate);
    return out;
}

// --- motion -----------------------------------------------------------------

std::vector<MotionFrame> compute_motion_series(const std::vector<FramePointSummary>& frames,
                                               const MotionThresholds& thresholds) {
    std::vector<MotionFrame> out;
    out.reserve(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (i > 0)
            require(frames[i].frame_index > frames[i - 1].frame_index, "UnorderedFrames",
                    "frame_index not strictly increasing at row " + std::to_string(i));
        MotionFrame m;
        m.frame_index = frames[i].frame_index;
        m.moving = frames[i].point_count >= thresholds.count_threshold ||
                   frames[i].motion_amplitude >= thresholds.amp_threshold;
        m.amplitude = frames[i].motion_amplitude;
        out.push_back(m);
    }
    return out;
}

std::vector<double> epoch_moving_fraction(const std::vector<MotionFrame>& motion,
                                          double frame_rate, int num_epochs) {
    require(frame_rate > 0.0, "SampleRateTooLow", "frame rate must be positive");
    std::vector<double> moving(num_epochs, 0.0);
    std::vector<double> total(num_epochs, 0.0);
    const double frames_per_epoch = 30.0 * frame_rate;
    // bucket by frame_index, not position: frame sequences may have gaps
    for (const auto& m : motion) {
        const int e = static_cast<int>(static_cast<double>(m.frame_index) / frames_per_epoch);
        if (e < 0 || e >= num_epochs) continue;
        total[e] += 1.0;
        if (m.moving) moving[e] += 1.0;
    }
    std::vector<double> frac(num_epochs, 0.0);
    for (int e = 0; e < num_epochs; ++e) frac[e] = total[e] > 0.0 ? moving[e] / total[e] : 0.0;
    return frac;
}

RateSeries gate_resp_rate(const RateSeries& rates, const std::vector<double>& moving_fraction,
                          double gate_fraction) {
    require(rates.size() == moving_fraction.size(), "LengthMismatch",
            "rate series and motion fractions differ in length");
    RateSeries out = rates;
    for (std::size_t e = 0; e < out.size(); ++e) {
        if (moving_fraction[e] > gate_fraction) {
            out[e].valid = false;
            out[e].confidence = 0.0;
            out[e].rate_bpm = 0.0;
        }
    }
    return out;
}

}  // namespace somnia::dsp
