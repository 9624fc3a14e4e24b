#include "somnia/model.hpp"

#include <algorithm>
#include <cmath>

#include "somnia/rng.hpp"

namespace somnia::model {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void fill_uniform(std::vector<double>& v, Rng& rng, double scale) {
    for (double& x : v) x = rng.uniform(-scale, scale);
}

}  // namespace

// --- weights ---------------------------------------------------------------

ModelWeights ModelWeights::zeros(const ModelConfig& cfg) {
    cfg.validate();
    ModelWeights w;
    const int H = cfg.hidden_dim;
    const int D = cfg.bilstm_out_dim();
    for (int l = 0; l < cfg.num_bilstm_layers; ++l) {
        const int in = l == 0 ? cfg.input_dim : D;
        LstmLayerWeights layer;
        for (LstmDirWeights* d : {&layer.fwd, &layer.bwd}) {
            d->w_in = Mat(4 * H, in);
            d->w_rec = Mat(4 * H, H);
            d->bias.assign(4 * H, 0.0);
        }
        w.layers.push_back(std::move(layer));
    }
    w.freq_gate = Mat(D, cfg.freq_bins_kept);
    w.ln_gain.assign(D, 0.0);
    w.ln_bias.assign(D, 0.0);
    w.head_w1 = Mat(cfg.head_hidden_dim, D);
    w.head_b1.assign(cfg.head_hidden_dim, 0.0);
    w.head_w2 = Mat(cfg.num_classes, cfg.head_hidden_dim);
    w.head_b2.assign(cfg.num_classes, 0.0);
    return w;
}

ModelWeights ModelWeights::init(const ModelConfig& cfg) {
    ModelWeights w = zeros(cfg);
    Rng rng(derive_seed(cfg.seed, "model-init"));
    const int H = cfg.hidden_dim;
    const double s = 1.0 / std::sqrt(static_cast<double>(H));
    for (auto& layer : w.layers) {
        for (LstmDirWeights* d : {&layer.fwd, &layer.bwd}) {
            fill_uniform(d->w_in.v, rng, s);
            fill_uniform(d->w_rec.v, rng, s);
            fill_uniform(d->bias, rng, s);
            // forget-gate bias offset keeps early memory alive
            for (int i = H; i < 2 * H; ++i) d->bias[i] += 1.0;
        }
    }
    // raw 2.0 -> sigmoid ~0.88: near-identity spectral path at start
    std::fill(w.freq_gate.v.begin(), w.freq_gate.v.end(), 2.0);
    std::fill(w.ln_gain.begin(), w.ln_gain.end(), 1.0);
    const int D = cfg.bilstm_out_dim();
    fill_uniform(w.head_w1.v, rng, std::sqrt(6.0 / (D + cfg.head_hidden_dim)));
    fill_uniform(w.head_w2.v, rng, std::sqrt(6.0 / (cfg.head_hidden_dim + cfg.num_classes)));
    return w;
}

bool ModelWeights::shape_matches(const ModelConfig& cfg) const {
    const int H = cfg.hidden_dim;
    const int D = cfg.bilstm_out_dim();
    if (static_cast<int>(layers.size()) != cfg.num_bilstm_layers) return false;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const int in = l == 0 ? cfg.input_dim : D;
        for (const LstmDirWeights* d : {&layers[l].fwd, &layers[l].bwd}) {
            if (d->w_in.rows != 4 * H || d->w_in.cols != in) return false;
            if (d->w_rec.rows != 4 * H || d->w_rec.cols != H) return false;
            if (static_cast<int>(d->bias.size()) != 4 * H) return false;
        }
    }
    return freq_gate.rows == D && freq_gate.cols == cfg.freq_bins_kept &&
           static_cast<int>(ln_gain.size()) == D && static_cast<int>(ln_bias.size()) == D &&
           head_w1.rows == cfg.head_hidden_dim && head_w1.cols == D &&
           static_cast<int>(head_b1.size()) == cfg.head_hidden_dim &&
           head_w2.rows == cfg.num_classes && head_w2.cols == cfg.head_hidden_dim &&
           static_cast<int>(head_b2.size()) == cfg.num_classes;
}

std::vector<std::pair<std::string, std::vector<double>*>> named_arrays(ModelWeights& w) {
    std::vector<std::pair<std::string, std::vector<double>*>> out;
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        const std::string base = "lstm" + std::to_string(l);
        out.emplace_back(base + ".fwd.w_in", &w.layers[l].fwd.w_in.v);
        out.emplace_back(base + ".fwd.w_rec", &w.layers[l].fwd.w_rec.v);
        out.emplace_back(base + ".fwd.bias", &w.layers[l].fwd.bias);
        out.emplace_back(base + ".bwd.w_in", &w.layers[l].bwd.w_in.v);
        out.emplace_back(base + ".bwd.w_rec", &w.layers[l].bwd.w_rec.v);
        out.emplace_back(base + ".bwd.bias", &w.layers[l].bwd.bias);
    }
    out.emplace_back("freq_gate", &w.freq_gate.v);
    out.emplace_back("ln_gain", &w.ln_gain);
    out.emplace_back("ln_bias", &w.ln_bias);
    out.emplace_back("head_w1", &w.head_w1.v);
    out.emplace_back("head_b1", &w.head_b1);
    out.emplace_back("head_w2", &w.head_w2.v);
    out.emplace_back("head_b2", &w.head_b2);
    return out;
}

// --- elementwise pieces ------------------------------------------------------

double h_swish(double x) { return x * std::min(std::max(x + 3.0, 0.0), 6.0) / 6.0; }

void h_swish_inplace(std::vector<double>& x) {
    for (double& v : x) v = h_swish(v);
}

double h_swish_grad(double x) {
    if (x <= -3.0) return 0.0;
    if (x >= 3.0) return 1.0;
    return (2.0 * x + 3.0) / 6.0;
}

std::vector<double> layer_norm(const std::vector<double>& x, const std::vector<double>& gain,
                               const std::vector<double>& bias, double eps) {
    const int n = static_cast<int>(x.size());
    require(n >= 2, "ShapeMismatch", "layer_norm needs a vector of length >= 2");
    require(gain.size() == x.size() && bias.size() == x.size(), "ShapeMismatch",
            "layer_norm gain/bias size");
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = (x[i] - mean) * inv * gain[i] + bias[i];
    return out;
}

std::vector<double> temperature_softmax(const std::vector<double>& logits, double temperature) {
    require(temperature > 0.0, "NonPositiveTemperature", "softmax temperature must be > 0");
    require(!logits.empty(), "ShapeMismatch", "softmax of empty vector");
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp((logits[i] - mx) / temperature);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

// --- LSTM ---------------------------------------------------------------

namespace {

void lstm_dir_forward(const LstmDirWeights& wd, const Mat& x, bool reverse, LstmDirCache& cc) {
    const int T = x.rows;
    const int H = wd.w_rec.cols;
    cc.gi = Mat(T, H);
    cc.gf = Mat(T, H);
    cc.gg = Mat(T, H);
    cc.go = Mat(T, H);
    cc.c = Mat(T, H);
    cc.tanh_c = Mat(T, H);
    cc.h = Mat(T, H);

    std::vector<double> pre(4 * H);
    const int t0 = reverse ? T - 1 : 0;
    const int step = reverse ? -1 : 1;
    for (int n = 0; n < T; ++n) {
        const int t = t0 + n * step;
        const int tp = t - step;  // previous processed step
        std::copy(wd.bias.begin(), wd.bias.end(), pre.begin());
        matvec_add(wd.w_in, x.row(t), pre.data());
        if (n > 0) matvec_add(wd.w_rec, cc.h.row(tp), pre.data());
        double* gi = cc.gi.row(t);
        double* gf = cc.gf.row(t);
        double* gg = cc.gg.row(t);
        double* go = cc.go.row(t);
        double* c = cc.c.row(t);
        double* tc = cc.tanh_c.row(t);
        double* h = cc.h.row(t);
        const double* cp = n > 0 ? cc.c.row(tp) : nullptr;
        for (int i = 0; i < H; ++i) {
            gi[i] = sigmoid(pre[i]);
            gf[i] = sigmoid(pre[H + i]);
            gg[i] = std::tanh(pre[2 * H + i]);
            go[i] = sigmoid(pre[3 * H + i]);
            c[i] = gf[i] * (cp ? cp[i] : 0.0) + gi[i] * gg[i];
            tc[i] = std::tanh(c[i]);
            h[i] = go[i] * tc[i];
        }
    }
}

// BPTT for one direction. dh_out holds the gradient arriving at each h from
// the consumers above (already sliced for this direction). Accumulates
// parameter gradients and the gradient on the layer input.
void lstm_dir_backward(const LstmDirWeights& wd, const LstmDirCache& cc, const Mat& x,
                       const Mat& dh_out, bool reverse, LstmDirWeights& gd, Mat& dx) {
    const int T = x.rows;
    const int H = wd.w_rec.cols;
    std::vector<double> dh(H, 0.0), dc(H, 0.0), dpre(4 * H);

    const int t0 = reverse ? 0 : T - 1;            // reverse of processing order
    const int step = reverse ? 1 : -1;
    for (int n = 0; n < T; ++n) {
        const int t = t0 + n * step;
        const int tp = t + step;  // previous processed step (earlier in time for fwd)
        const bool has_prev = n + 1 < T;

        const double* gi = cc.gi.row(t);
        const double* gf = cc.gf.row(t);
        const double* gg = cc.gg.row(t);
        const double* go = cc.go.row(t);
        const double* tc = cc.tanh_c.row(t);
        const double* cp = has_prev ? cc.c.row(tp) : nullptr;

        for (int i = 0; i < H; ++i) {
            const double dht = dh[i] + dh_out.row(t)[i];
            const double dct = dc[i] + dht * go[i] * (1.0 - tc[i] * tc[i]);
            const double di = dct * gg[i];
            const double df = dct * (cp ? cp[i] : 0.0);
            const double dg = dct * gi[i];
            const double do_ = dht * tc[i];
            dpre[i] = di * gi[i] * (1.0 - gi[i]);
            dpre[H + i] = df * gf[i] * (1.0 - gf[i]);
            dpre[2 * H + i] = dg * (1.0 - gg[i] * gg[i]);
            dpre[3 * H + i] = do_ * go[i] * (1.0 - go[i]);
            dc[i] = dct * gf[i];  // flows to the previous step
        }

        outer_add(gd.w_in, dpre.data(), x.row(t));
        if (has_prev) outer_add(gd.w_rec, dpre.data(), cc.h.row(tp));
        for (int i = 0; i < 4 * H; ++i) gd.bias[i] += dpre[i];

        matvec_t_add(wd.w_in, dpre.data(), dx.row(t));
        std::fill(dh.begin(), dh.end(), 0.0);
        if (has_prev) matvec_t_add(wd.w_rec, dpre.data(), dh.data());
        if (!has_prev) std::fill(dc.begin(), dc.end(), 0.0);
    }
}

}  // namespace

Mat bilstm_forward(const Mat& x, const ModelWeights& w, const ModelConfig& cfg,
                   ForwardCache* cache) {
    cfg.validate();
    require(x.cols == cfg.input_dim, "ShapeMismatch",
            "feature width " + std::to_string(x.cols) + " != input_dim");
    require(x.rows >= 1, "ShapeMismatch", "empty sequence");
    require(w.shape_matches(cfg), "ShapeMismatch", "weights do not match config");

    const int T = x.rows;
    const int H = cfg.hidden_dim;
    ForwardCache local;
    ForwardCache& cc = cache ? *cache : local;
    cc.layer_inputs.clear();
    cc.dir_fwd.assign(cfg.num_bilstm_layers, {});
    cc.dir_bwd.assign(cfg.num_bilstm_layers, {});

    Mat cur = x;
    for (int l = 0; l < cfg.num_bilstm_layers; ++l) {
        cc.layer_inputs.push_back(cur);
        lstm_dir_forward(w.layers[l].fwd, cur, false, cc.dir_fwd[l]);
        lstm_dir_forward(w.layers[l].bwd, cur, true, cc.dir_bwd[l]);
        Mat concat(T, 2 * H);
        for (int t = 0; t < T; ++t) {
            std::copy(cc.dir_fwd[l].h.row(t), cc.dir_fwd[l].h.row(t) + H, concat.row(t));
            std::copy(cc.dir_bwd[l].h.row(t), cc.dir_bwd[l].h.row(t) + H, concat.row(t) + H);
        }
        cur = std::move(concat);
    }
    cc.bilstm_out = cur;
    return cc.bilstm_out;
}

// --- frequency enhancement ---------------------------------------------------

Mat frequency_enhance(const Mat& h, const Mat& gate_params, int freq_bins_kept,
                      ForwardCache* cache) {
    const int T = h.rows;
    const int D = h.cols;
    require(T >= 2, "ShapeMismatch", "frequency_enhance needs T >= 2");
    require(gate_params.rows == D && gate_params.cols == freq_bins_kept, "ShapeMismatch",
            "gate parameter shape");

    const int k_eff = std::min(freq_bins_kept, T / 2);  // oscillatory bins 1..k_eff
    Mat out = h;

    ForwardCache local;
    ForwardCache& cc = cache ? *cache : local;
    cc.k_eff = k_eff;
    cc.chan_mean.assign(D, 0.0);
    cc.proj_cos = Mat(D, std::max(1, k_eff));
    cc.proj_sin = Mat(D, std::max(1, k_eff));
    cc.gate_sig = Mat(D, std::max(1, k_eff));

    if (k_eff == 0) {
        cc.freq_out = out;
        return out;
    }

    // trig tables for bins 1..k_eff
    std::vector<double> cos_tab(static_cast<std::size_t>(k_eff) * T);
    std::vector<double> sin_tab(static_cast<std::size_t>(k_eff) * T);
    for (int k = 1; k <= k_eff; ++k) {
        const double wk = 2.0 * M_PI * k / T;
        for (int t = 0; t < T; ++t) {
            cos_tab[static_cast<std::size_t>(k - 1) * T + t] = std::cos(wk * t);
            sin_tab[static_cast<std::size_t>(k - 1) * T + t] = std::sin(wk * t);
        }
    }

    std::vector<double> z(T);
    for (int d = 0; d < D; ++d) {
        double m = 0.0;
        for (int t = 0; t < T; ++t) m += h.at(t, d);
        m /= T;
        cc.chan_mean[d] = m;
        for (int t = 0; t < T; ++t) z[t] = h.at(t, d) - m;

        for (int k = 1; k <= k_eff; ++k) {
            const double* ct = &cos_tab[static_cast<std::size_t>(k - 1) * T];
            const double* st = &sin_tab[static_cast<std::size_t>(k - 1) * T];
            double A = 0.0, B = 0.0;
            for (int t = 0; t < T; ++t) {
                A += z[t] * ct[t];
                B += z[t] * st[t];
            }
            const double g = sigmoid(gate_params.at(d, k - 1));
            const double ck = (2 * k == T) ? 1.0 / T : 2.0 / T;
            const double coeff = (g - 1.0) * ck;
            cc.proj_cos.at(d, k - 1) = A;
            cc.proj_sin.at(d, k - 1) = B;
            cc.gate_sig.at(d, k - 1) = g;
            if (coeff != 0.0)
                for (int t = 0; t < T; ++t) out.at(t, d) += coeff * (A * ct[t] + B * st[t]);
        }
    }
    cc.freq_out = out;
    return out;
}

namespace {

// gradient through frequency_enhance; adds into dgate, returns dh
Mat frequency_enhance_backward(const Mat& dout, const Mat& gate_params, const ForwardCache& cc,
                               Mat& dgate) {
    const int T = dout.rows;
    const int D = dout.cols;
    Mat dh = dout;  // identity path
    const int k_eff = cc.k_eff;
    if (k_eff == 0) return dh;

    for (int k = 1; k <= k_eff; ++k) {
        const double wk = 2.0 * M_PI * k / T;
        const double ck = (2 * k == T) ? 1.0 / T : 2.0 / T;
        std::vector<double> ct(T), st(T);
        for (int t = 0; t < T; ++t) {
            ct[t] = std::cos(wk * t);
            st[t] = std::sin(wk * t);
        }
        for (int d = 0; d < D; ++d) {
            const double A = cc.proj_cos.at(d, k - 1);
            const double B = cc.proj_sin.at(d, k - 1);
            const double g = cc.gate_sig.at(d, k - 1);
            double gA = 0.0, gB = 0.0;
            for (int t = 0; t < T; ++t) {
                gA += dout.at(t, d) * ct[t];
                gB += dout.at(t, d) * st[t];
            }
            // gate parameter: dL/dtheta = c_k (A gA + B gB) sigma'(theta)
            dgate.at(d, k - 1) += ck * (A * gA + B * gB) * g * (1.0 - g);
            // input path: basis sums are zero-mean, so the centering
            // projection is a no-op and dz feeds h directly
            const double coeff = (g - 1.0) * ck;
            if (coeff != 0.0)
                for (int t = 0; t < T; ++t) dh.at(t, d) += coeff * (ct[t] * gA + st[t] * gB);
        }
    }
    return dh;
}

}  // namespace

// --- full forward --------------------------------------------------------

Mat model_forward(const Mat& features, const ModelWeights& w, const ModelConfig& cfg,
                  bool train_mode, ForwardCache* cache, const Mat* drop_mask,
                  std::uint64_t dropout_seed) {
    ForwardCache local;
    ForwardCache& cc = cache ? *cache : local;

    bilstm_forward(features, w, cfg, &cc);
    frequency_enhance(cc.bilstm_out, w.freq_gate, cfg.freq_bins_kept, &cc);

    const int T = features.rows;
    const int D = cfg.bilstm_out_dim();
    const int Hh = cfg.head_hidden_dim;
    const int C = cfg.num_classes;
    const double eps = 1e-5;

    cc.ln_xhat = Mat(T, D);
    cc.ln_inv_std.assign(T, 0.0);
    cc.ln_out = Mat(T, D);
    cc.lin1_pre = Mat(T, Hh);
    cc.act1 = Mat(T, Hh);
    cc.logits = Mat(T, C);
    cc.probs = Mat(T, C);

    // dropout mask: fixed if provided, else drawn (train mode only)
    cc.drop_mask = Mat(T, Hh);
    if (train_mode && cfg.dropout_rate > 0.0) {
        if (drop_mask) {
            require(drop_mask->rows == T && drop_mask->cols == Hh, "ShapeMismatch",
                    "dropout mask shape");
            cc.drop_mask = *drop_mask;
        } else {
            Rng rng(derive_seed(dropout_seed, "dropout-mask"));
            const double keep = 1.0 - cfg.dropout_rate;
            for (double& v : cc.drop_mask.v) v = rng.uniform() < keep ? 1.0 / keep : 0.0;
        }
    } else {
        std::fill(cc.drop_mask.v.begin(), cc.drop_mask.v.end(), 1.0);
    }

    for (int t = 0; t < T; ++t) {
        // layer norm over the feature dimension
        const double* x = cc.freq_out.row(t);
        double mean = 0.0;
        for (int d = 0; d < D; ++d) mean += x[d];
        mean /= D;
        double var = 0.0;
        for (int d = 0; d < D; ++d) var += (x[d] - mean) * (x[d] - mean);
        var /= D;
        const double inv = 1.0 / std::sqrt(var + eps);
        cc.ln_inv_std[t] = inv;
        for (int d = 0; d < D; ++d) {
            const double xh = (x[d] - mean) * inv;
            cc.ln_xhat.at(t, d) = xh;
            cc.ln_out.at(t, d) = xh * w.ln_gain[d] + w.ln_bias[d];
        }

        // linear -> dropout -> h-swish
        double* pre = cc.lin1_pre.row(t);
        std::copy(w.head_b1.begin(), w.head_b1.end(), pre);
        matvec_add(w.head_w1, cc.ln_out.row(t), pre);
        for (int i = 0; i < Hh; ++i) {
            pre[i] *= cc.drop_mask.at(t, i);
            cc.act1.at(t, i) = h_swish(pre[i]);
        }

        // final projection and calibrated softmax
        double* lg = cc.logits.row(t);
        std::copy(w.head_b2.begin(), w.head_b2.end(), lg);
        matvec_add(w.head_w2, cc.act1.row(t), lg);
        const double mx = *std::max_element(lg, lg + C);
        double sum = 0.0;
        for (int c = 0; c < C; ++c) {
            cc.probs.at(t, c) = std::exp((lg[c] - mx) / cfg.temperature);
            sum += cc.probs.at(t, c);
        }
        for (int c = 0; c < C; ++c) cc.probs.at(t, c) /= sum;
    }
    return cc.probs;
}

// --- loss ------------------------------------------------------------------

double weighted_cross_entropy(const Mat& probs, const std::vector<int>& labels,
                              const std::vector<double>& class_weights, double eps) {
    require(static_cast<int>(labels.size()) == probs.rows, "LengthMismatch",
            "labels/probs row count");
    require(static_cast<int>(class_weights.size()) == probs.cols, "LengthMismatch",
            "class weight count");
    double sum = 0.0;
    int count = 0;
    for (int t = 0; t < probs.rows; ++t) {
        const int y = labels[t];
        if (y < 0) continue;  // masked epoch
        require(y < probs.cols, "LabelOutOfRange", "label " + std::to_string(y));
        sum += class_weights[y] * (-std::log(std::max(probs.at(t, y), eps)));
        ++count;
    }
    return count > 0 ? sum / count : 0.0;
}

void loss_and_gradients(const Mat& features, const std::vector<int>& labels,
                        const std::vector<double>& class_weights, const ModelWeights& w,
                        const ModelConfig& cfg, const Mat* drop_mask, ModelGradients& out) {
    const int T = features.rows;
    const int D = cfg.bilstm_out_dim();
    const int Hh = cfg.head_hidden_dim;
    const int C = cfg.num_classes;
    const int H = cfg.hidden_dim;
    constexpr double eps_p = 1e-12;

    ForwardCache cc;
    model_forward(features, w, cfg, /*train_mode=*/true, &cc, drop_mask);

    if (out.g.layers.empty()) out.g = ModelWeights::zeros(cfg);

    // loss (sum form) and gradient on the logits
    Mat dlogits(T, C);
    for (int t = 0; t < T; ++t) {
        const int y = labels[t];
        if (y < 0) continue;
        require(y < C, "LabelOutOfRange", "label " + std::to_string(y));
        const double py = cc.probs.at(t, y);
        out.loss_sum += class_weights[y] * (-std::log(std::max(py, eps_p)));
        ++out.count;
        // dL/dp then through the tempered softmax jacobian
        const double gy = py > eps_p ? -class_weights[y] / py : 0.0;
        const double dot = gy * py;  // sum_k g_k p_k with one nonzero entry
        for (int c = 0; c < C; ++c) {
            const double gc = c == y ? gy : 0.0;
            dlogits.at(t, c) = cc.probs.at(t, c) * (gc - dot) / cfg.temperature;
        }
    }

    // head backward
    Mat d_ln_out(T, D);
    std::vector<double> dpre1(Hh), dact1(Hh);
    for (int t = 0; t < T; ++t) {
        outer_add(out.g.head_w2, dlogits.row(t), cc.act1.row(t));
        for (int c = 0; c < C; ++c) out.g.head_b2[c] += dlogits.at(t, c);
        std::fill(dact1.begin(), dact1.end(), 0.0);
        matvec_t_add(w.head_w2, dlogits.row(t), dact1.data());
        for (int i = 0; i < Hh; ++i)
            dpre1[i] = dact1[i] * h_swish_grad(cc.lin1_pre.at(t, i)) * cc.drop_mask.at(t, i);
        outer_add(out.g.head_w1, dpre1.data(), cc.ln_out.row(t));
        for (int i = 0; i < Hh; ++i) out.g.head_b1[i] += dpre1[i];
        std::fill(d_ln_out.row(t), d_ln_out.row(t) + D, 0.0);
        matvec_t_add(w.head_w1, dpre1.data(), d_ln_out.row(t));
    }

    // layer norm backward
    Mat d_freq(T, D);
    for (int t = 0; t < T; ++t) {
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (int d = 0; d < D; ++d) {
            const double dout = d_ln_out.at(t, d);
            const double xh = cc.ln_xhat.at(t, d);
            out.g.ln_gain[d] += dout * xh;
            out.g.ln_bias[d] += dout;
            const double dxh = dout * w.ln_gain[d];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xh;
        }
        mean_dxhat /= D;
        mean_dxhat_xhat /= D;
        const double inv = cc.ln_inv_std[t];
        for (int d = 0; d < D; ++d) {
            const double dxh = d_ln_out.at(t, d) * w.ln_gain[d];
            d_freq.at(t, d) = inv * (dxh - mean_dxhat - cc.ln_xhat.at(t, d) * mean_dxhat_xhat);
        }
    }

    // frequency enhancement backward
    Mat d_bilstm = frequency_enhance_backward(d_freq, w.freq_gate, cc, out.g.freq_gate);

    // stacked BiLSTM backward, top layer down
    Mat dH = std::move(d_bilstm);
    for (int l = cfg.num_bilstm_layers - 1; l >= 0; --l) {
        const Mat& xin = cc.layer_inputs[l];
        Mat dx(xin.rows, xin.cols);
        Mat dh_f(T, H), dh_b(T, H);
        for (int t = 0; t < T; ++t) {
            std::copy(dH.row(t), dH.row(t) + H, dh_f.row(t));
            std::copy(dH.row(t) + H, dH.row(t) + 2 * H, dh_b.row(t));
        }
        lstm_dir_backward(w.layers[l].fwd, cc.dir_fwd[l], xin, dh_f, false, out.g.layers[l].fwd, dx);
        lstm_dir_backward(w.layers[l].bwd, cc.dir_bwd[l], xin, dh_b, true, out.g.layers[l].bwd, dx);
        dH = std::move(dx);
    }
}

// --- inference ------------------------------------------------------------

Prediction predict_session(const Mat& features, const ModelWeights& w, const ModelConfig& cfg,
                           double start_clock, bool median_smooth) {
    Prediction p;
    p.probs = model_forward(features, w, cfg, /*train_mode=*/false);
    p.hypnogram.start_clock = start_clock;
    p.hypnogram.stages.resize(features.rows);
    for (int t = 0; t < features.rows; ++t) {
        int best = 0;
        for (int c = 1; c < cfg.num_classes; ++c)
            if (p.probs.at(t, c) > p.probs.at(t, best)) best = c;  // ties keep the lower index
        p.hypnogram.stages[t] = static_cast<Stage>(best);
    }
    if (median_smooth && features.rows >= 3) {
        std::vector<Stage> sm = p.hypnogram.stages;
        for (int t = 1; t + 1 < features.rows; ++t) {
            int a = static_cast<int>(p.hypnogram.stages[t - 1]);
            int b = static_cast<int>(p.hypnogram.stages[t]);
            int c = static_cast<int>(p.hypnogram.stages[t + 1]);
            // median of three
            int lo = std::min({a, b, c}), hi = std::max({a, b, c});
            sm[t] = static_cast<Stage>(a + b + c - lo - hi);
        }
        p.hypnogram.stages = std::move(sm);
    }
    return p;
}

}  // namespace somnia::model
