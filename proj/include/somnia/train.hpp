#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "somnia/features.hpp"
#include "somnia/hypnogram.hpp"
#include "somnia/model.hpp"

namespace somnia::train {

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 2;            // sessions per optimizer step
    int max_epochs = 15;
    int chunk_length = 120;        // epochs per training sequence, 50% overlap
    std::vector<double> class_weights;  // empty -> inverse frequency, mean 1
    double gradient_clip_norm = 5.0;
    std::uint64_t seed = 1;
    int early_stop_patience = 5;   // epochs without val improvement
    int jobs = 1;                  // parallel sessions per batch

    void validate() const {
        require(learning_rate > 0.0, "InternalError", "learning_rate must be > 0");
        require(chunk_length >= 8, "InternalError", "chunk_length must be >= 8");
        require(batch_size >= 1 && max_epochs >= 1 && jobs >= 1, "InternalError",
                "batch_size/max_epochs/jobs must be >= 1");
    }
};

// One training example: a session's features plus aligned labels
// (-1 = masked out of the loss; Unscored epochs map to -1).
struct LabeledSession {
    features::FeatureMatrix features;
    std::vector<int> labels;
    std::string session_id;
};

LabeledSession make_labeled_session(const features::FeatureMatrix& m, const Hypnogram& reference);

struct EpochTrace {
    double train_loss = 0.0;
    double val_loss = 0.0;  // == train_loss when no validation set given
};

struct TrainResult {
    model::ModelWeights weights;  // checkpoint with the best validation loss
    std::vector<EpochTrace> trace;
    std::vector<double> class_weights;  // the weights actually used
    int best_epoch = 0;
};

// Deterministic given (data, configs): chunked BPTT with Adam, global-norm
// gradient clipping, early-stopping checkpointing on validation loss.
TrainResult train(const std::vector<LabeledSession>& train_set,
                  const std::vector<LabeledSession>& val_set, const model::ModelConfig& mcfg,
                  const TrainConfig& tcfg);

// Mean weighted CE of a session set under the given weights (no dropout).
double evaluate_loss(const std::vector<LabeledSession>& set, const model::ModelWeights& w,
                     const model::ModelConfig& mcfg, const std::vector<double>& class_weights,
                     int chunk_length);

// Inverse-frequency class weights normalized to mean 1 over the label set.
std::vector<double> inverse_frequency_weights(const std::vector<LabeledSession>& set,
                                              int num_classes);

// Compare analytic gradients of the full loss against central finite
// differences over every parameter of a (small) random model; returns the
// maximum relative error. Exercises the dropout path with a fixed mask.
double grad_check(const model::ModelConfig& cfg, std::uint64_t seed, int seq_len = 6,
                  double fd_step = 1e-5);

}  // namespace somnia::train
