#include "somnia/train.hpp"

#include <algorithm>
#include <cmath>
#include <future>

#include "somnia/log.hpp"
#include "somnia/rng.hpp"

namespace somnia::train {

using model::Mat;
using model::ModelConfig;
using model::ModelGradients;
using model::ModelWeights;

namespace {

Mat features_as_mat(const features::FeatureMatrix& m, int begin, int len) {
    Mat x(len, m.width());
    for (int t = 0; t < len; ++t) {
        const auto& row = m.epochs[begin + t].values;
        std::copy(row.begin(), row.end(), x.row(t));
    }
    return x;
}

struct Chunk {
    Mat x;
    std::vector<int> labels;  // padded tail epochs carry -1
};

// fixed-length chunks with 50% overlap; the tail chunk is zero-padded and
// its padding masked out of the loss. A session shorter than the chunk
// length becomes one unpadded chunk.
std::vector<Chunk> make_chunks(const LabeledSession& s, int chunk_length) {
    std::vector<Chunk> out;
    const int n = s.features.num_epochs();
    if (n == 0) return out;
    const int L = chunk_length;
    const int width = s.features.width();

    if (n <= L) {
        Chunk c;
        c.x = features_as_mat(s.features, 0, n);
        c.labels.assign(s.labels.begin(), s.labels.end());
        out.push_back(std::move(c));
        return out;
    }

    const int stride = std::max(1, L / 2);
    for (int begin = 0; begin < n; begin += stride) {
        Chunk c;
        c.x = Mat(L, width);
        c.labels.assign(L, -1);
        const int len = std::min(L, n - begin);
        for (int t = 0; t < len; ++t) {
            const auto& row = s.features.epochs[begin + t].values;
            std::copy(row.begin(), row.end(), c.x.row(t));
            c.labels[t] = s.labels[begin + t];
        }
        out.push_back(std::move(c));
        if (begin + L >= n) break;
    }
    return out;
}

double global_grad_norm(ModelWeights& g) {
    double acc = 0.0;
    for (auto& [name, arr] : model::named_arrays(g))
        for (double v : *arr) acc += v * v;
    return std::sqrt(acc);
}

struct AdamState {
    ModelWeights m, v;
    long long step = 0;
};

void adam_update(ModelWeights& w, ModelWeights& g, AdamState& st, double lr, double clip) {
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const double norm = global_grad_norm(g);
    const double scale = (clip > 0.0 && norm > clip) ? clip / norm : 1.0;

    ++st.step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.step));

    auto wa = model::named_arrays(w);
    auto ga = model::named_arrays(g);
    auto ma = model::named_arrays(st.m);
    auto va = model::named_arrays(st.v);
    for (std::size_t a = 0; a < wa.size(); ++a) {
        auto& wv = *wa[a].second;
        auto& gv = *ga[a].second;
        auto& mv = *ma[a].second;
        auto& vv = *va[a].second;
        for (std::size_t i = 0; i < wv.size(); ++i) {
            const double gi = gv[i] * scale;
            mv[i] = beta1 * mv[i] + (1.0 - beta1) * gi;
            vv[i] = beta2 * vv[i] + (1.0 - beta2) * gi * gi;
            wv[i] -= lr * (mv[i] / bc1) / (std::sqrt(vv[i] / bc2) + eps);
        }
    }
}

void zero_weights(ModelWeights& g) {
    for (auto& [name, arr] : model::named_arrays(g)) std::fill(arr->begin(), arr->end(), 0.0);
}

void accumulate(ModelWeights& dst, ModelWeights& src) {
    auto da = model::named_arrays(dst);
    auto sa = model::named_arrays(src);
    for (std::size_t a = 0; a < da.size(); ++a)
        for (std::size_t i = 0; i < da[a].second->size(); ++i)
            (*da[a].second)[i] += (*sa[a].second)[i];
}

// per-session gradient work item; dropout masks derive from (seed, epoch,
// session, chunk) so results do not depend on thread scheduling
ModelGradients session_gradients(const LabeledSession& s, const ModelWeights& w,
                                 const ModelConfig& mcfg, const TrainConfig& tcfg,
                                 const std::vector<double>& class_weights, int epoch,
                                 int session_ordinal) {
    ModelGradients grads;
    grads.g = ModelWeights::zeros(mcfg);
    const auto chunks = make_chunks(s, tcfg.chunk_length);
    int chunk_id = 0;
    for (const auto& c : chunks) {
        Mat mask;
        const Mat* mask_ptr = nullptr;
        if (mcfg.dropout_rate > 0.0) {
            const std::uint64_t ms = derive_seed(
                tcfg.seed, "dropout/" + std::to_string(epoch) + "/" +
                               std::to_string(session_ordinal) + "/" + std::to_string(chunk_id));
            Rng rng(ms);
            mask = Mat(c.x.rows, mcfg.head_hidden_dim);
            const double keep = 1.0 - mcfg.dropout_rate;
            for (double& v : mask.v) v = rng.uniform() < keep ? 1.0 / keep : 0.0;
            mask_ptr = &mask;
        }
        model::loss_and_gradients(c.x, c.labels, class_weights, w, mcfg, mask_ptr, grads);
        ++chunk_id;
    }
    return grads;
}

}  // namespace

LabeledSession make_labeled_session(const features::FeatureMatrix& m, const Hypnogram& reference) {
    require(m.num_epochs() <= reference.num_epochs(), "GridMisalignment",
            "feature matrix longer than reference hypnogram");
    LabeledSession s;
    s.features = m;
    s.session_id = m.session_id;
    s.labels.resize(m.num_epochs());
    for (int e = 0; e < m.num_epochs(); ++e) {
        const Stage st = reference.stages[e];
        s.labels[e] = is_scored(st) ? static_cast<int>(st) : -1;
    }
    return s;
}

std::vector<double> inverse_frequency_weights(const std::vector<LabeledSession>& set,
                                              int num_classes) {
    std::vector<double> counts(num_classes, 0.0);
    for (const auto& s : set)
        for (int y : s.labels)
            if (y >= 0 && y < num_classes) counts[y] += 1.0;
    std::vector<double> w(num_classes, 1.0);
    double mean = 0.0;
    for (int c = 0; c < num_classes; ++c) {
        w[c] = counts[c] > 0.0 ? 1.0 / counts[c] : 0.0;
        mean += w[c];
    }
    mean /= num_classes;
    if (mean <= 0.0) return std::vector<double>(num_classes, 1.0);
    for (double& v : w) v /= mean;
    // classes absent from training keep a neutral weight
    for (int c = 0; c < num_classes; ++c)
        if (counts[c] == 0.0) w[c] = 1.0;
    return w;
}

double evaluate_loss(const std::vector<LabeledSession>& set, const ModelWeights& w,
                     const ModelConfig& mcfg, const std::vector<double>& class_weights,
                     int chunk_length) {
    double loss_sum = 0.0;
    long long count = 0;
    for (const auto& s : set) {
        for (const auto& c : make_chunks(s, chunk_length)) {
            Mat probs = model::model_forward(c.x, w, mcfg, /*train_mode=*/false);
            for (int t = 0; t < probs.rows; ++t) {
                const int y = c.labels[t];
                if (y < 0) continue;
                loss_sum += class_weights[y] * (-std::log(std::max(probs.at(t, y), 1e-12)));
                ++count;
            }
        }
    }
    return count > 0 ? loss_sum / static_cast<double>(count) : 0.0;
}

TrainResult train(const std::vector<LabeledSession>& train_set,
                  const std::vector<LabeledSession>& val_set, const ModelConfig& mcfg,
                  const TrainConfig& tcfg) {
    mcfg.validate();
    tcfg.validate();
    require(!train_set.empty(), "EmptyDataset", "no training sessions");
    for (const auto& s : train_set)
        require(s.features.width() == mcfg.input_dim, "ShapeMismatch",
                "session " + s.session_id + " feature width != input_dim");

    TrainResult result;
    result.class_weights = tcfg.class_weights.empty()
                               ? inverse_frequency_weights(train_set, mcfg.num_classes)
                               : tcfg.class_weights;
    require(static_cast<int>(result.class_weights.size()) == mcfg.num_classes, "LengthMismatch",
            "class_weights size != num_classes");

    ModelWeights w = ModelWeights::init(mcfg);
    AdamState adam;
    adam.m = ModelWeights::zeros(mcfg);
    adam.v = ModelWeights::zeros(mcfg);

    const std::vector<LabeledSession>& holdout = val_set.empty() ? train_set : val_set;
    double best_val = std::numeric_limits<double>::infinity();
    int stale = 0;

    std::vector<int> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
        // seeded reshuffle of session order
        Rng shuffle_rng(derive_seed(tcfg.seed, "shuffle/" + std::to_string(epoch)));
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
            const int j = static_cast<int>(shuffle_rng.below(static_cast<std::uint64_t>(i) + 1));
            std::swap(order[i], order[j]);
        }

        double epoch_loss_sum = 0.0;
        long long epoch_count = 0;

        for (std::size_t b = 0; b < order.size(); b += tcfg.batch_size) {
            const std::size_t e = std::min(order.size(), b + tcfg.batch_size);
            std::vector<std::future<ModelGradients>> futures;
            for (std::size_t i = b; i < e; ++i) {
                const LabeledSession& s = train_set[order[i]];
                const int ordinal = order[i];
                if (tcfg.jobs > 1) {
                    futures.push_back(std::async(std::launch::async, session_gradients,
                                                 std::cref(s), std::cref(w), std::cref(mcfg),
                                                 std::cref(tcfg), std::cref(result.class_weights),
                                                 epoch, ordinal));
                } else {
                    std::promise<ModelGradients> p;
                    p.set_value(session_gradients(s, w, mcfg, tcfg, result.class_weights, epoch,
                                                  ordinal));
                    futures.push_back(p.get_future());
                }
            }
            // deterministic fixed-order reduction regardless of completion order
            ModelWeights grad_sum = ModelWeights::zeros(mcfg);
            double step_loss = 0.0;
            long long step_count = 0;
            for (auto& f : futures) {
                ModelGradients g = f.get();
                accumulate(grad_sum, g.g);
                step_loss += g.loss_sum;
                step_count += g.count;
            }
            if (step_count == 0) continue;
            const double inv = 1.0 / static_cast<double>(step_count);
            for (auto& [name, arr] : model::named_arrays(grad_sum))
                for (double& v : *arr) v *= inv;

            require(std::isfinite(step_loss), "DivergenceDetected", "non-finite training loss");
            adam_update(w, grad_sum, adam, tcfg.learning_rate, tcfg.gradient_clip_norm);
            epoch_loss_sum += step_loss;
            epoch_count += step_count;
        }

        EpochTrace tr;
        tr.train_loss = epoch_count > 0 ? epoch_loss_sum / static_cast<double>(epoch_count) : 0.0;
        tr.val_loss = evaluate_loss(holdout, w, mcfg, result.class_weights, tcfg.chunk_length);
        require(std::isfinite(tr.train_loss) && std::isfinite(tr.val_loss), "DivergenceDetected",
                "non-finite loss at epoch " + std::to_string(epoch));
        result.trace.push_back(tr);
        log::info("epoch " + std::to_string(epoch) + " train_loss " +
                  std::to_string(tr.train_loss) + " val_loss " + std::to_string(tr.val_loss));

        if (tr.val_loss < best_val - 1e-6) {
            best_val = tr.val_loss;
            result.weights = w;
            result.best_epoch = epoch;
            stale = 0;
        } else if (++stale > tcfg.early_stop_patience) {
            log::info("early stop after epoch " + std::to_string(epoch));
            break;
        }
    }
    if (result.weights.layers.empty()) result.weights = w;
    return result;
}

double grad_check(const ModelConfig& cfg, std::uint64_t seed, int seq_len, double fd_step) {
    cfg.validate();
    Rng rng(derive_seed(seed, "grad-check"));

    Mat x(seq_len, cfg.input_dim);
    for (double& v : x.v) v = rng.normal(0.0, 1.0);
    std::vector<int> labels(seq_len);
    for (int& y : labels) y = static_cast<int>(rng.below(cfg.num_classes));
    std::vector<double> cw(cfg.num_classes);
    for (double& v : cw) v = rng.uniform(0.5, 2.0);

    ModelConfig c = cfg;
    c.seed = seed;
    ModelWeights w = ModelWeights::init(c);
    // perturb away from the symmetric init a little
    for (auto& [name, arr] : model::named_arrays(w))
        for (double& v : *arr) v += rng.normal(0.0, 0.1);

    // fixed dropout mask so the finite-difference loss is smooth
    Mat mask(seq_len, cfg.head_hidden_dim);
    const double keep = 1.0 - cfg.dropout_rate;
    for (double& v : mask.v) v = rng.uniform() < keep ? 1.0 / keep : 0.0;
    const Mat* mask_ptr = cfg.dropout_rate > 0.0 ? &mask : nullptr;

    ModelGradients analytic;
    model::loss_and_gradients(x, labels, cw, w, c, mask_ptr, analytic);

    auto loss_at = [&]() {
        model::ForwardCache cc;
        Mat probs = model::model_forward(x, w, c, true, &cc, mask_ptr);
        double sum = 0.0;
        for (int t = 0; t < seq_len; ++t)
            sum += cw[labels[t]] * (-std::log(std::max(probs.at(t, labels[t]), 1e-12)));
        return sum;
    };

    double max_rel = 0.0;
    auto wa = model::named_arrays(w);
    auto ga = model::named_arrays(analytic.g);
    for (std::size_t a = 0; a < wa.size(); ++a) {
        auto& wv = *wa[a].second;
        auto& gv = *ga[a].second;
        for (std::size_t i = 0; i < wv.size(); ++i) {
            const double orig = wv[i];
            wv[i] = orig + fd_step;
            const double lp = loss_at();
            wv[i] = orig - fd_step;
            const double lm = loss_at();
            wv[i] = orig;
            const double num = (lp - lm) / (2.0 * fd_step);
            const double rel = std::abs(num - gv[i]) / std::max({1e-3, std::abs(num), std::abs(gv[i])});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace somnia::train
