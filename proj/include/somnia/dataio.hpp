#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "somnia/dsp.hpp"
#include "somnia/error.hpp"
#include "somnia/hypnogram.hpp"
#include "somnia/model.hpp"

namespace somnia::io {

struct SubjectMetadata {
    std::string subject_id;
    std::string gender;            // "M" / "F"
    double age = 0.0;              // years
    double bmi = 0.0;              // kg/m^2
    double ahi = 0.0;              // events/h
    double lights_off_clock = 0.0; // seconds since midnight
};

SubjectMetadata read_metadata_json(const std::string& path);
void write_metadata_json(const SubjectMetadata& m, const std::string& path);

// One line per session; paths are relative to the manifest's directory.
struct ManifestEntry {
    std::string session_id;
    std::string subject_id;
    std::string phase_file;
    std::string frames_file;
    std::string hypnogram_file;
    std::string metadata_file;
    double frame_rate = 2.0;
};

std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);

// raw PSG stage codes on disk: W, N1, N2, N3, REM (anything else -> Unscored)
Stage map_psg_code(const std::string& code);
std::string output_stage_code(Stage s);  // W / L / D / R / U

// hypnogram CSV: header "epoch_index,stage_code"
Hypnogram read_hypnogram_csv(const std::string& path, double start_clock);
void write_hypnogram_csv(const Hypnogram& h, const std::string& path);  // output codes

// phase CSV: header "time_seconds,phase_radians"; values may be nan (gaps)
void read_phase_csv(const std::string& path, std::vector<double>& times,
                    std::vector<double>& values);
void write_phase_csv(const std::vector<double>& times, const std::vector<double>& values,
                     const std::string& path);

// frames CSV: header "frame_index,point_count,motion_amplitude"
std::vector<dsp::FramePointSummary> read_frames_csv(const std::string& path);
void write_frames_csv(const std::vector<dsp::FramePointSummary>& frames, const std::string& path);

struct SessionRecord {
    std::string session_id;
    SubjectMetadata metadata;
    dsp::PhaseSeries phase;            // resampled to the 20 Hz processing grid
    std::vector<std::uint8_t> phase_supported;  // per 20 Hz sample
    std::vector<dsp::FramePointSummary> frames;
    double frame_rate = 2.0;
    Hypnogram reference;               // truncated to the epoch grid
    int num_epochs = 0;
    std::vector<bool> epoch_excluded;  // per-epoch QC exclusions
    bool truncated_hypnogram = false;  // reference was longer than the signal
    bool qc_applied = false;
};

// Load and validate one session; the epoch grid is min(full signal epochs,
// reference length), and a longer reference is truncated with a warning flag.
SessionRecord load_session(const ManifestEntry& entry, const std::string& base_dir);

// Per-epoch exclusion (majority-missing signal or Unscored label) plus
// whole-session rejection (> 30% excluded or no sleep). Throws
// Error("SessionRejected") with a machine-readable reason. Idempotent.
SessionRecord qc_filter(const SessionRecord& session);

// --- subject-level split -------------------------------------------------------

struct SplitAssignment {
    std::map<std::string, bool> in_train;  // subject_id -> partition
    std::uint64_t seed = 0;
    std::string stratification_report;

    std::vector<std::string> train_subjects() const;
    std::vector<std::string> validation_subjects() const;
};

// Buckets by (AHI severity x gender); a seeded shuffle sends
// round(train_fraction * bucket) of each bucket to train.
SplitAssignment stratified_split(const std::vector<SubjectMetadata>& subjects,
                                 double train_fraction, std::uint64_t seed);

// --- checkpoints ----------------------------------------------------------------

// Versioned container: text header with the ModelConfig, then named arrays
// with explicit shapes as little-endian float64, then a checksum. Round
// trips are bit-exact.
void save_checkpoint(const model::ModelWeights& weights, const model::ModelConfig& cfg,
                     const std::string& path);

struct Checkpoint {
    model::ModelConfig config;
    model::ModelWeights weights;
};

Checkpoint load_checkpoint(const std::string& path);

// load + shape/config verification against an expected config
model::ModelWeights load_checkpoint_expecting(const std::string& path,
                                              const model::ModelConfig& expected);

}  // namespace somnia::io
