#include "somnia/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "somnia/rng.hpp"

namespace somnia::synth {

namespace fs = std::filesystem;

namespace {

void validate_transitions(const SynthConfig& cfg) {
    for (int r = 0; r < 5; ++r) {
        double sum = 0.0;
        for (int c = 0; c < 5; ++c) {
            require(cfg.transitions[r][c] >= 0.0, "InvalidTransitionMatrix",
                    "negative transition probability");
            sum += cfg.transitions[r][c];
        }
        require(std::abs(sum - 1.0) < 1e-9, "InvalidTransitionMatrix",
                "row " + std::to_string(r) + " sums to " + std::to_string(sum));
    }
    for (double d : cfg.mean_dwell_epochs)
        require(d > 0.0, "InvalidTransitionMatrix", "dwell means must be positive");
}

// next stage (0..3) or 4 = terminal; Deep/REM entries modulated by progress
int sample_transition(const SynthConfig& cfg, int from, double progress, Rng& rng) {
    std::array<double, 5> w{};
    for (int c = 0; c < 5; ++c) w[c] = cfg.transitions[from][c];
    const double deep_w = std::max(0.05, 1.6 - 1.2 * progress);
    const double rem_w = std::max(0.05, 0.4 + 1.2 * progress);
    w[static_cast<int>(Stage::Deep)] *= deep_w;
    w[static_cast<int>(Stage::REM)] *= rem_w;
    if (progress < 0.6) w[4] = 0.0;  // no final awakening before the last part of the night
    double total = 0.0;
    for (double v : w) total += v;
    if (total <= 0.0) return static_cast<int>(Stage::Light);
    double u = rng.uniform() * total;
    for (int c = 0; c < 5; ++c) {
        u -= w[c];
        if (u < 0.0) return c;
    }
    return 4;
}

}  // namespace

Hypnogram generate_hypnogram(const SynthConfig& cfg, std::uint64_t seed) {
    validate_transitions(cfg);
    Rng rng(derive_seed(seed, "hypnogram"));
    const int n_epochs = static_cast<int>(std::lround(cfg.night_duration_min * 2.0));

    Hypnogram h;
    h.stages.reserve(n_epochs);
    int stage = static_cast<int>(Stage::Wake);  // nights start awake
    bool first_bout = true;
    while (static_cast<int>(h.stages.size()) < n_epochs) {
        const double dwell_mean = (first_bout && stage == static_cast<int>(Stage::Wake))
                                      ? cfg.sleep_latency_mean_epochs
                                      : cfg.mean_dwell_epochs[stage];
        first_bout = false;
        const int dwell = rng.geometric_at_least_one(dwell_mean);
        for (int k = 0; k < dwell && static_cast<int>(h.stages.size()) < n_epochs; ++k)
            h.stages.push_back(static_cast<Stage>(stage));
        if (static_cast<int>(h.stages.size()) >= n_epochs) break;
        const double progress = static_cast<double>(h.stages.size()) / n_epochs;
        const int next = sample_transition(cfg, stage, progress, rng);
        if (next == 4) {
            while (static_cast<int>(h.stages.size()) < n_epochs)
                h.stages.push_back(Stage::Wake);  // subject awake until lights on
            break;
        }
        stage = next;
    }
    return h;
}

io::SubjectMetadata sample_metadata(std::uint64_t seed, int subject_index) {
    Rng rng(derive_seed(seed, "metadata/" + std::to_string(subject_index)));
    io::SubjectMetadata m;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "synth-%04d", subject_index);
    m.subject_id = buf;
    m.gender = rng.uniform() < 0.655 ? "M" : "F";
    m.age = std::clamp(rng.normal(44.0, 15.9), 18.0, 90.0);
    m.bmi = std::clamp(rng.normal(26.8, 5.4), 16.0, 50.0);
    // draw the severity class first so every stratum stays populated
    const double u = rng.uniform();
    if (u < 0.45)
        m.ahi = rng.uniform(0.0, 5.0);
    else if (u < 0.66)
        m.ahi = rng.uniform(5.001, 15.0);
    else if (u < 0.81)
        m.ahi = rng.uniform(15.001, 30.0);
    else
        m.ahi = rng.uniform(30.001, 60.0);
    m.lights_off_clock = rng.uniform(22.0 * 3600.0, 24.0 * 3600.0);
    return m;
}

SynthSession synth_session(const Hypnogram& hypnogram, const SynthConfig& cfg,
                           std::uint64_t seed, const io::SubjectMetadata& metadata) {
    require(!hypnogram.stages.empty(), "EmptySignal", "empty hypnogram");
    SynthSession s;
    s.reference = hypnogram;
    s.reference.start_clock = metadata.lights_off_clock;
    s.metadata = metadata;

    Rng rng(derive_seed(seed, "signal"));
    const int n_epochs = hypnogram.num_epochs();
    const int samples_per_epoch = static_cast<int>(std::lround(30.0 * cfg.sample_rate));
    const int frames_per_epoch = static_cast<int>(std::lround(30.0 * cfg.frame_rate));
    const double dt = 1.0 / cfg.sample_rate;

    // --- movement frame process (two-state bursts, stage-conditioned) ---
    std::vector<bool> frame_moving(static_cast<std::size_t>(n_epochs) * frames_per_epoch, false);
    {
        bool moving = false;
        for (int e = 0; e < n_epochs; ++e) {
            const auto& prof = cfg.profiles[static_cast<int>(hypnogram.stages[e])];
            const double pi = std::clamp(prof.movement_prob_per_frame, 0.0, 0.95);
            const double cont = prof.movement_burst_continue;
            const double start = pi <= 0.0 ? 0.0 : std::min(1.0, pi * (1.0 - cont) / (1.0 - pi));
            for (int f = 0; f < frames_per_epoch; ++f) {
                moving = moving ? rng.bernoulli(cont) : rng.bernoulli(start);
                frame_moving[static_cast<std::size_t>(e) * frames_per_epoch + f] = moving;
            }
        }
    }

    s.frames.reserve(frame_moving.size());
    for (std::size_t i = 0; i < frame_moving.size(); ++i) {
        const int e = static_cast<int>(i) / frames_per_epoch;
        const auto& prof = cfg.profiles[static_cast<int>(hypnogram.stages[e])];
        dsp::FramePointSummary f;
        f.frame_index = static_cast<std::int64_t>(i);
        if (frame_moving[i]) {
            f.point_count = 5 + static_cast<int>(rng.below(15));
            f.motion_amplitude = std::abs(rng.normal(prof.movement_amp_mean,
                                                     0.5 * prof.movement_amp_mean)) + 0.1;
        } else {
            f.point_count = static_cast<int>(rng.below(3));
            f.motion_amplitude = std::abs(rng.normal(0.0, 0.05));
        }
        s.frames.push_back(f);
    }

    // --- respiration phase signal ---
    s.times.resize(static_cast<std::size_t>(n_epochs) * samples_per_epoch);
    s.phase.resize(s.times.size());
    double resp_phase = rng.uniform(0.0, 2.0 * M_PI);
    double body_offset = 0.0;  // slow wander from gross movement
    const double frame_per_sample = cfg.frame_rate / cfg.sample_rate;

    for (int e = 0; e < n_epochs; ++e) {
        const auto& prof = cfg.profiles[static_cast<int>(hypnogram.stages[e])];
        const double rate_bpm =
            std::clamp(rng.normal(prof.resp_rate_mean, prof.resp_rate_sd), 7.5, 27.5);
        // short-term wobble: per 5 s segment frequency multiplier
        const int seg_samples = static_cast<int>(std::lround(5.0 * cfg.sample_rate));
        double seg_mult = 1.0;
        for (int k = 0; k < samples_per_epoch; ++k) {
            if (k % seg_samples == 0)
                seg_mult = std::max(0.6, 1.0 + 0.05 * prof.resp_irregularity * rng.normal());
            const std::size_t i = static_cast<std::size_t>(e) * samples_per_epoch + k;
            const double f_inst = rate_bpm / 60.0 * seg_mult;
            resp_phase += 2.0 * M_PI * f_inst * dt;

            const std::size_t frame_idx =
                std::min(frame_moving.size() - 1,
                         static_cast<std::size_t>(static_cast<double>(i) * frame_per_sample));
            const bool moving = frame_moving[frame_idx];
            double amp = cfg.resp_amp_rad;
            if (moving) {
                body_offset += rng.normal(0.0, 0.25);  // gross displacement swamps breathing
                amp *= 0.3;
            } else {
                body_offset *= 0.995;  // settle back toward the chest baseline
            }
            s.times[i] = static_cast<double>(i) * dt;
            s.phase[i] =
                amp * std::sin(resp_phase) + body_offset + cfg.phase_noise_sd * rng.normal();
        }
    }
    return s;
}

std::string write_cohort(const SynthConfig& cfg, int nights, const std::string& out_dir) {
    require(nights >= 1, "EmptyDataset", "need at least one night");
    fs::create_directories(out_dir);
    std::vector<io::ManifestEntry> entries;
    for (int n = 0; n < nights; ++n) {
        const std::uint64_t night_seed = derive_seed(cfg.seed, "night/" + std::to_string(n));
        const io::SubjectMetadata meta = sample_metadata(cfg.seed, n);
        const Hypnogram hyp = generate_hypnogram(cfg, night_seed);
        const SynthSession s = synth_session(hyp, cfg, night_seed, meta);

        char name[64];
        std::snprintf(name, sizeof(name), "session-%04d", n);
        const std::string base = name;
        fs::create_directories(fs::path(out_dir) / base);

        io::ManifestEntry e;
        e.session_id = base;
        e.subject_id = meta.subject_id;
        e.phase_file = base + "/phase.csv";
        e.frames_file = base + "/frames.csv";
        e.hypnogram_file = base + "/hypnogram.csv";
        e.metadata_file = base + "/metadata.json";
        e.frame_rate = cfg.frame_rate;

        io::write_phase_csv(s.times, s.phase, (fs::path(out_dir) / e.phase_file).string());
        io::write_frames_csv(s.frames, (fs::path(out_dir) / e.frames_file).string());
        io::write_metadata_json(meta, (fs::path(out_dir) / e.metadata_file).string());

        // reference emitted in PSG codes: Light splits into N1/N2 (seeded)
        {
            Rng rng(derive_seed(night_seed, "psg-codes"));
            std::ofstream out(fs::path(out_dir) / e.hypnogram_file);
            require(out.good(), "IoError", "cannot write hypnogram");
            out << "epoch_index,stage_code\n";
            for (int ep = 0; ep < s.reference.num_epochs(); ++ep) {
                const Stage st = s.reference.stages[ep];
                const char* code = "W";
                switch (st) {
                    case Stage::Wake: code = "W"; break;
                    case Stage::Light: code = rng.uniform() < 0.25 ? "N1" : "N2"; break;
                    case Stage::Deep: code = "N3"; break;
                    case Stage::REM: code = "REM"; break;
                    default: code = "UNK"; break;
                }
                out << ep << ',' << code << '\n';
            }
        }
        entries.push_back(std::move(e));
    }
    const std::string manifest = (fs::path(out_dir) / "manifest.ndjson").string();
    io::write_manifest(entries, manifest);
    return manifest;
}

}  // namespace somnia::synth
