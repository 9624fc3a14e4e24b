#pragma once

#include <string>
#include <vector>

#include "somnia/dataio.hpp"
#include "somnia/features.hpp"
#include "somnia/train.hpp"

namespace somnia::pipeline {

// One session after signal processing, feature extraction, and QC. `labels`
// is the reference hypnogram with QC-excluded epochs set to Unscored so
// they drop out of training loss and metrics alike.
struct ProcessedSession {
    std::string session_id;
    std::string subject_id;
    io::SubjectMetadata metadata;
    features::FeatureMatrix features;
    Hypnogram labels;
};

// DSP chain for one loaded session: unwrap, bandpass, rate estimation,
// motion thresholding, gating, multi-scale feature assembly.
ProcessedSession process_session(const io::SessionRecord& record,
                                 const dsp::MotionThresholds& thresholds = {},
                                 const features::FeatureConfig& fcfg = {});

// Loads and processes a whole manifest (optionally in parallel). Sessions
// rejected by QC are logged and skipped; their ids are appended to
// `rejected` when given.
std::vector<ProcessedSession> process_manifest(const std::string& manifest_path,
                                               const dsp::MotionThresholds& thresholds = {},
                                               const features::FeatureConfig& fcfg = {},
                                               int jobs = 1,
                                               std::vector<std::string>* rejected = nullptr);

train::LabeledSession to_labeled(const ProcessedSession& s);

}  // namespace somnia::pipeline
