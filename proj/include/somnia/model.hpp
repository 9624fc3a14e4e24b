#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "somnia/error.hpp"
#include "somnia/hypnogram.hpp"
#include "somnia/mat.hpp"

namespace somnia::model {

using somnia::Mat;

struct ModelConfig {
    int input_dim = 42;
    int hidden_dim = 64;        // per direction
    int num_bilstm_layers = 2;
    int freq_bins_kept = 8;     // gated oscillatory DFT bins (bin 0 rides the residual)
    int head_hidden_dim = 64;
    int num_classes = 4;
    double dropout_rate = 0.3;
    double temperature = 1.0;
    std::uint64_t seed = 1;

    void validate() const {
        require(input_dim >= 1 && hidden_dim >= 1 && num_bilstm_layers >= 1 &&
                    freq_bins_kept >= 1 && head_hidden_dim >= 1 &&
                    (num_classes == 2 || num_classes == 4),
                "ShapeMismatch", "model dimensions must be positive");
        require(temperature > 0.0, "NonPositiveTemperature", "temperature must be > 0");
        require(dropout_rate >= 0.0 && dropout_rate < 1.0, "ShapeMismatch",
                "dropout_rate must be in [0,1)");
    }

    int bilstm_out_dim() const { return 2 * hidden_dim; }
};

// One LSTM direction; the 4H rows of the gate matrices are blocked in the
// order input, forget, cell, output.
struct LstmDirWeights {
    Mat w_in;                  // [4H x I]
    Mat w_rec;                 // [4H x H]
    std::vector<double> bias;  // [4H]
};

struct LstmLayerWeights {
    LstmDirWeights fwd, bwd;
};

struct ModelWeights {
    std::vector<LstmLayerWeights> layers;
    Mat freq_gate;                        // [D x K] raw params, sigmoid-gated
    std::vector<double> ln_gain, ln_bias; // [D]
    Mat head_w1;                          // [Hh x D]
    std::vector<double> head_b1;          // [Hh]
    Mat head_w2;                          // [C x Hh]
    std::vector<double> head_b2;          // [C]

    static ModelWeights zeros(const ModelConfig& cfg);
    static ModelWeights init(const ModelConfig& cfg);  // seeded from cfg.seed
    bool shape_matches(const ModelConfig& cfg) const;
};

// Uniform access to every parameter array, in a fixed documented order; the
// optimizer, gradient check, and checkpoint format all iterate this.
std::vector<std::pair<std::string, std::vector<double>*>> named_arrays(ModelWeights& w);

// --- elementwise pieces -----------------------------------------------------

double h_swish(double x);
void h_swish_inplace(std::vector<double>& x);
double h_swish_grad(double x);

// (x - mean) / sqrt(var + eps) * gain + bias over one vector
std::vector<double> layer_norm(const std::vector<double>& x, const std::vector<double>& gain,
                               const std::vector<double>& bias, double eps = 1e-5);

std::vector<double> temperature_softmax(const std::vector<double>& logits, double temperature);

// --- forward pass -----------------------------------------------------------

struct LstmDirCache {
    Mat gi, gf, gg, go;  // [T x H] post-activation gates
    Mat c, tanh_c, h;    // [T x H]
};

struct ForwardCache {
    // per layer: input sequence and both direction caches
    std::vector<Mat> layer_inputs;              // [T x I_l]
    std::vector<LstmDirCache> dir_fwd, dir_bwd; // per layer
    Mat bilstm_out;                             // [T x D]

    // frequency enhancement
    std::vector<double> chan_mean;              // [D]
    Mat proj_cos, proj_sin;                     // [D x K_eff] basis projections of centered signal
    Mat gate_sig;                               // [D x K_eff]
    int k_eff = 0;
    Mat freq_out;                               // [T x D]

    // head
    Mat ln_xhat;                                // [T x D]
    std::vector<double> ln_inv_std;             // [T]
    Mat ln_out;                                 // [T x D]
    Mat lin1_pre;                               // [T x Hh] after dropout, before h-swish
    Mat drop_mask;                              // [T x Hh] 0 or 1/(1-p)
    Mat act1;                                   // [T x Hh]
    Mat logits;                                 // [T x C]
    Mat probs;                                  // [T x C]
};

// Stacked BiLSTM over the feature sequence; zero initial states, forward and
// time-reversed passes concatenated per step.
Mat bilstm_forward(const Mat& x, const ModelWeights& w, const ModelConfig& cfg,
                   ForwardCache* cache = nullptr);

// Spectral gating with residual: per channel, the DC bin passes through the
// residual path untouched while the K lowest oscillatory DFT bins are scaled
// by learned sigmoid gates. Unit gates give the exact identity.
Mat frequency_enhance(const Mat& h, const Mat& gate_params, int freq_bins_kept,
                      ForwardCache* cache = nullptr);

// Full pipeline: bilstm -> frequency_enhance -> layer_norm -> linear ->
// dropout (train only) -> h-swish -> linear -> temperature softmax.
// `drop_mask` supplies a fixed dropout mask (values 0 or 1/(1-p)); when null
// in train mode the mask is drawn from `dropout_seed`.
Mat model_forward(const Mat& features, const ModelWeights& w, const ModelConfig& cfg,
                  bool train_mode, ForwardCache* cache = nullptr,
                  const Mat* drop_mask = nullptr, std::uint64_t dropout_seed = 0);

// --- loss and gradients -----------------------------------------------------

// -(1/T) sum_t w[label_t] * log(max(p[t,label_t], eps)) over rows with
// label >= 0; labels must lie in [0, C).
double weighted_cross_entropy(const Mat& probs, const std::vector<int>& labels,
                              const std::vector<double>& class_weights, double eps = 1e-12);

struct ModelGradients {
    ModelWeights g;  // same shapes as the weights
    double loss_sum = 0.0;
    int count = 0;   // unmasked epochs
};

// Sum (not mean) of the weighted CE over unmasked epochs plus gradients of
// that sum; the caller normalizes across a whole optimizer step.
void loss_and_gradients(const Mat& features, const std::vector<int>& labels,
                        const std::vector<double>& class_weights, const ModelWeights& w,
                        const ModelConfig& cfg, const Mat* drop_mask, ModelGradients& out);

// --- inference ----------------------------------------------------------

struct Prediction {
    Hypnogram hypnogram;
    Mat probs;  // [T x C]
};

// Argmax per epoch with ties resolved toward the lower class index;
// optional 3-epoch median label smoothing (off by default).
Prediction predict_session(const Mat& features, const ModelWeights& w, const ModelConfig& cfg,
                           double start_clock = 0.0, bool median_smooth = false);

}  // namespace somnia::model
