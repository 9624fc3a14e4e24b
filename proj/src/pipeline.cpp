#include "somnia/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <future>

#include "somnia/log.hpp"

namespace somnia::pipeline {

ProcessedSession process_session(const io::SessionRecord& record,
                                 const dsp::MotionThresholds& thresholds,
                                 const features::FeatureConfig& fcfg) {
    const io::SessionRecord rec = record.qc_applied ? record : io::qc_filter(record);

    auto unwrapped = dsp::unwrap_phase(rec.phase);
    auto wave = dsp::bandpass_respiration(unwrapped);
    auto rates = dsp::estimate_rate_series(wave);
    rates.resize(rec.num_epochs);

    auto motion = dsp::compute_motion_series(rec.frames, thresholds);
    auto moving_fraction = dsp::epoch_moving_fraction(motion, rec.frame_rate, rec.num_epochs);
    auto gated = dsp::gate_resp_rate(rates, moving_fraction, thresholds.gate_fraction);

    features::SessionSignals sig;
    sig.session_id = rec.session_id;
    sig.gated_rates = std::move(gated);
    sig.waveform = std::move(wave);
    sig.motion = std::move(motion);
    sig.frame_rate = rec.frame_rate;
    sig.moving_fraction = std::move(moving_fraction);
    sig.start_clock = rec.metadata.lights_off_clock;

    ProcessedSession out;
    out.session_id = rec.session_id;
    out.subject_id = rec.metadata.subject_id;
    out.metadata = rec.metadata;
    out.features = features::assemble_feature_matrix(sig, fcfg);
    out.labels = rec.reference;
    for (int e = 0; e < rec.num_epochs; ++e)
        if (rec.epoch_excluded[e]) out.labels.stages[e] = Stage::Unscored;
    return out;
}

std::vector<ProcessedSession> process_manifest(const std::string& manifest_path,
                                               const dsp::MotionThresholds& thresholds,
                                               const features::FeatureConfig& fcfg, int jobs,
                                               std::vector<std::string>* rejected) {
    const auto entries = io::read_manifest(manifest_path);
    const std::string base_dir =
        std::filesystem::path(manifest_path).parent_path().string();

    struct Slot {
        bool ok = false;
        bool was_rejected = false;
        std::string id;
        ProcessedSession session;
    };
    auto work = [&](const io::ManifestEntry& e) {
        Slot slot;
        slot.id = e.session_id;
        try {
            auto rec = io::load_session(e, base_dir);
            slot.session = process_session(io::qc_filter(rec), thresholds, fcfg);
            slot.ok = true;
        } catch (const Error& err) {
            if (err.kind() == "SessionRejected") {
                log::warn(std::string("skipping session: ") + err.what());
                slot.was_rejected = true;
            } else {
                throw;
            }
        }
        return slot;
    };

    std::vector<Slot> slots(entries.size());
    if (jobs <= 1) {
        for (std::size_t i = 0; i < entries.size(); ++i) slots[i] = work(entries[i]);
    } else {
        std::vector<std::future<Slot>> futures;
        std::size_t next = 0;
        while (next < entries.size() || !futures.empty()) {
            while (next < entries.size() &&
                   static_cast<int>(futures.size()) < jobs) {
                futures.push_back(std::async(std::launch::async, work, std::cref(entries[next])));
                ++next;
            }
            const std::size_t done = next - futures.size();
            slots[done] = futures.front().get();
            futures.erase(futures.begin());
        }
    }

    std::vector<ProcessedSession> out;
    for (auto& s : slots) {
        if (s.ok)
            out.push_back(std::move(s.session));
        else if (s.was_rejected && rejected)
            rejected->push_back(s.id);
    }
    return out;
}

train::LabeledSession to_labeled(const ProcessedSession& s) {
    return train::make_labeled_session(s.features, s.labels);
}

}  // namespace somnia::pipeline
