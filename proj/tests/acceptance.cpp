// Acceptance battery: every release gate in one binary, one line per
// criterion. Exits nonzero if any gate fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "somnia/dataio.hpp"
#include "somnia/eval.hpp"
#include "somnia/features.hpp"
#include "somnia/oracle.hpp"
#include "somnia/pipeline.hpp"
#include "somnia/rng.hpp"
#include "somnia/synth.hpp"
#include "somnia/train.hpp"

using namespace somnia;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

struct Criterion {
    const char* name;
    double started;
    bool ok = true;
    std::string detail;

    explicit Criterion(const char* n) : name(n), started(now_seconds()) {}
    void expect(bool cond, const std::string& what) {
        if (!cond && ok) detail = what;
        ok = ok && cond;
    }
    ~Criterion() {
        const double secs = now_seconds() - started;
        std::printf("[%s] %s (%.1f s)%s%s\n", ok ? "PASS" : "FAIL", name, secs,
                    detail.empty() ? "" : " -- ", detail.c_str());
        std::fflush(stdout);
        if (!ok) ++g_failures;
    }
};

dsp::PhaseSeries sinusoid(double freq_hz, double seconds, double fs) {
    dsp::PhaseSeries p;
    p.sample_rate = fs;
    const int n = static_cast<int>(seconds * fs);
    p.samples.resize(n);
    for (int i = 0; i < n; ++i) p.samples[i] = std::sin(2.0 * M_PI * freq_hz * i / fs);
    return p;
}

double mid_amplitude(const std::vector<double>& x) {
    double lo = 0.0, hi = 0.0;
    for (std::size_t i = x.size() / 4; i < 3 * x.size() / 4; ++i) {
        lo = std::min(lo, x[i]);
        hi = std::max(hi, x[i]);
    }
    return 0.5 * (hi - lo);
}

void criterion_1_filter() {
    Criterion c("criterion 1: bandpass template and zero group delay");
    const double fs = 20.0;
    for (double f = 0.15; f <= 0.5001; f += 0.05) {
        const auto out = dsp::bandpass_respiration(sinusoid(f, 240.0, fs));
        const double gain_db = 20.0 * std::log10(mid_amplitude(out.samples));
        c.expect(gain_db >= -1.0,
                 "passband gain " + std::to_string(gain_db) + " dB at f=" + std::to_string(f));
    }
    for (double f : {0.05, 1.2}) {
        const auto out = dsp::bandpass_respiration(sinusoid(f, 240.0, fs));
        const double gain_db = 20.0 * std::log10(mid_amplitude(out.samples));
        c.expect(gain_db <= -20.0,
                 "stopband gain " + std::to_string(gain_db) + " dB at f=" + std::to_string(f));
    }
    // group delay: cross-correlation peak of a mid-band sinusoid at lag 0
    const auto x = sinusoid(0.3, 240.0, fs);
    const auto y = dsp::bandpass_respiration(x);
    const int n = static_cast<int>(x.samples.size());
    int best_lag = -1;
    double best = -1e300;
    for (int lag = -40; lag <= 40; ++lag) {
        double acc = 0.0;
        for (int i = std::max(0, -lag); i < std::min(n, n - lag); ++i)
            acc += x.samples[i] * y.samples[i + lag];
        if (acc > best) {
            best = acc;
            best_lag = lag;
        }
    }
    c.expect(best_lag == 0, "group delay lag " + std::to_string(best_lag));
}

void criterion_2_rate() {
    Criterion c("criterion 2: respiration-rate accuracy on the 0.01 Hz grid");
    for (int k = 0;; ++k) {
        const double f = 0.12 + 0.01 * k;
        if (f > 0.5501) break;
        const auto x = sinusoid(f, 30.0, 20.0);
        const auto r =
            dsp::estimate_rate_fused(x.samples.data(), static_cast<int>(x.samples.size()), 20.0);
        c.expect(r.detected, "no rate detected at f=" + std::to_string(f));
        if (r.detected)
            c.expect(std::abs(r.rate_bpm - 60.0 * f) <= 0.5,
                     "error " + std::to_string(std::abs(r.rate_bpm - 60.0 * f)) + " bpm at f=" +
                         std::to_string(f));
    }
}

void criterion_3_dtw() {
    Criterion c("criterion 3: DTW equals brute-force DP on 200 random pairs");
    Rng rng(101);
    for (int t = 0; t < 200; ++t) {
        const int n = 1 + static_cast<int>(rng.below(12));
        const int m = 1 + static_cast<int>(rng.below(12));
        std::vector<double> a(n), b(m);
        for (auto& v : a) v = rng.uniform(-5.0, 5.0);
        for (auto& v : b) v = rng.uniform(-5.0, 5.0);
        c.expect(features::dtw_distance(a, b) == oracle::dtw_bruteforce(a, b),
                 "dtw mismatch at trial " + std::to_string(t));
    }
}

void criterion_4_stats() {
    Criterion c("criterion 4: statistics match the reference within 1e-9 on 1000 sequences");
    Rng rng(102);
    for (int t = 0; t < 1000; ++t) {
        const int n = 2 + static_cast<int>(rng.below(80));
        std::vector<double> v(n);
        for (auto& x : v) x = rng.uniform(-100.0, 100.0);
        const auto got = features::epoch_stats(v);
        const auto want = oracle::naive_stats(v);
        c.expect(std::abs(got.trimmed_mean - want.trimmed_mean) < 1e-9 &&
                     std::abs(got.mean - want.mean) < 1e-9 &&
                     std::abs(got.std - want.std) < 1e-9 &&
                     std::abs(got.rmssd - want.rmssd) < 1e-9,
                 "stat mismatch at trial " + std::to_string(t));
    }
}

void criterion_5_gradients() {
    Criterion c("criterion 5: analytic gradients vs finite differences on 20 models");
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        model::ModelConfig cfg;
        cfg.input_dim = 2 + static_cast<int>(seed % 3);
        cfg.hidden_dim = 3 + static_cast<int>(seed % 4);
        cfg.num_bilstm_layers = 1 + static_cast<int>(seed % 2);
        cfg.freq_bins_kept = 1 + static_cast<int>(seed % 3);
        cfg.head_hidden_dim = 3 + static_cast<int>(seed % 3);
        cfg.dropout_rate = seed % 4 == 0 ? 0.3 : 0.0;
        cfg.temperature = seed % 3 == 0 ? 1.7 : 1.0;
        cfg.seed = seed;
        const double err = train::grad_check(cfg, seed, 4 + static_cast<int>(seed % 3));
        worst = std::max(worst, err);
    }
    c.expect(worst < 1e-4, "max relative error " + std::to_string(worst));
    c.detail = "max relative error " + std::to_string(worst);
}

void criterion_6_head_contracts() {
    Criterion c("criterion 6: softmax rows, temperature argmax, h-swish, unit-gate identity");
    Rng rng(103);

    model::ModelConfig cfg;
    cfg.input_dim = 5;
    cfg.hidden_dim = 6;
    cfg.seed = 11;
    auto w = model::ModelWeights::init(cfg);
    Mat x(40, cfg.input_dim);
    for (double& v : x.v) v = rng.normal();
    const Mat probs = model::model_forward(x, w, cfg, false);
    for (int t = 0; t < probs.rows; ++t) {
        double sum = 0.0;
        for (int k = 0; k < probs.cols; ++k) sum += probs.at(t, k);
        c.expect(std::abs(sum - 1.0) < 1e-9, "row sum off by " + std::to_string(sum - 1.0));
    }

    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> logits(4);
        for (auto& v : logits) v = rng.normal(0.0, 3.0);
        auto argmax = [](const std::vector<double>& q) {
            int best = 0;
            for (int i = 1; i < static_cast<int>(q.size()); ++i)
                if (q[i] > q[best]) best = i;
            return best;
        };
        const int base = argmax(model::temperature_softmax(logits, 1.0));
        for (double T : {0.05, 0.3, 2.0, 50.0, 1e4})
            c.expect(argmax(model::temperature_softmax(logits, T)) == base,
                     "argmax changed under temperature");
    }

    c.expect(model::h_swish(0.0) == 0.0 && model::h_swish(3.0) == 3.0 &&
                 model::h_swish(-3.0) == 0.0,
             "h-swish fixed points");

    Mat h(64, 8);
    for (double& v : h.v) v = rng.normal(0.0, 2.0);
    Mat gates(8, 4);
    std::fill(gates.v.begin(), gates.v.end(), 60.0);  // sigmoid == 1
    const Mat id = model::frequency_enhance(h, gates, 4);
    for (std::size_t i = 0; i < h.v.size(); ++i)
        c.expect(std::abs(id.v[i] - h.v[i]) < 1e-9, "unit-gate identity deviation");
}

void criterion_7_metric_oracles() {
    Criterion c("criterion 7: metric oracles and the exact 2x2 hand case");
    eval::ConfusionMatrix cm;
    cm.class_names = {"a", "b"};
    cm.counts = {{45, 5}, {10, 40}};
    const auto m = eval::classification_metrics(cm);
    c.expect(m.accuracy == 0.85, "accuracy " + std::to_string(m.accuracy));
    c.expect(std::abs(m.kappa - 0.70) < 1e-15, "kappa " + std::to_string(m.kappa));

    Rng rng(104);
    for (int t = 0; t < 100; ++t) {
        const int n = 5 + static_cast<int>(rng.below(995));
        std::vector<int> truth(n), pred(n);
        for (int i = 0; i < n; ++i) {
            truth[i] = static_cast<int>(rng.below(4));
            pred[i] = rng.uniform() < 0.55 ? truth[i] : static_cast<int>(rng.below(4));
        }
        const auto got = eval::classification_metrics(eval::confusion_from_labels(truth, pred, 4));
        const auto want = oracle::counting_metrics(truth, pred, 4);
        c.expect(std::abs(got.accuracy - want.accuracy) < 1e-12 &&
                     std::abs(got.macro_f1 - want.macro_f1) < 1e-12 &&
                     std::abs(got.kappa - want.kappa) < 1e-12,
                 "metric mismatch at trial " + std::to_string(t));
        for (int k = 0; k < 4; ++k)
            c.expect(std::abs(got.recall[k] - want.recall[k]) < 1e-12 &&
                         std::abs(got.precision[k] - want.precision[k]) < 1e-12,
                     "per-class mismatch at trial " + std::to_string(t));
    }
}

void criterion_8_paper_arithmetic() {
    Criterion c("criterion 8: published duration-agreement arithmetic reproduces");
    const double true_means[] = {125.4, 225.4, 89.1, 94.8};
    const double pred_means[] = {120.4, 220.2, 90.6, 103.6};
    const double want_bias[] = {-5.0, -5.2, 1.5, 8.8};
    for (int s = 0; s < 4; ++s) {
        std::vector<double> td = {true_means[s] - 20.0, true_means[s], true_means[s] + 20.0};
        std::vector<double> pd = {pred_means[s] - 20.0, pred_means[s], pred_means[s] + 20.0};
        const auto r = eval::stage_duration_bland_altman(td, pd);
        c.expect(std::abs(r.bias - want_bias[s]) <= 0.05,
                 "bias " + std::to_string(r.bias) + " for stage " + std::to_string(s));
    }
    // LoA width implied by the published diff SD
    const double width = 2.0 * 1.96 * 24.5;
    c.expect(std::abs(width - 96.04) < 1e-9, "LoA width " + std::to_string(width));
    c.expect(std::abs(width - 95.7) <= 0.5, "LoA width vs published value");

    c.expect(eval::ahi_group(5.0) == eval::AhiGroup::Normal, "AHI 5.0 bin");
    c.expect(eval::ahi_group(15.0) == eval::AhiGroup::Mild, "AHI 15.0 bin");
    c.expect(eval::ahi_group(30.0) == eval::AhiGroup::Moderate, "AHI 30.0 bin");
    c.expect(eval::ahi_group(30.01) == eval::AhiGroup::Severe, "AHI 30.01 bin");
    c.expect(eval::se_group(80.0) == eval::SeGroup::High, "SE 80 bin");
}

void criterion_9_boundary_recovery() {
    Criterion c("criterion 9: constant epoch shifts recover exactly");
    Rng rng(105);
    for (int k : {1, 2, 3, 6}) {
        std::vector<double> diffs;
        for (int s = 0; s < 10; ++s) {
            Hypnogram t;
            const int onset = 6 + static_cast<int>(rng.below(30));
            const int offset = 900 + static_cast<int>(rng.below(60));
            for (int e = 0; e < 1000; ++e)
                t.stages.push_back(e >= onset && e < offset ? Stage::Light : Stage::Wake);
            Hypnogram p;
            for (int e = 0; e < 1000; ++e) {
                const int src = e - k;
                p.stages.push_back(src >= 0 ? t.stages[src] : Stage::Wake);
            }
            const auto bt = eval::sleep_boundaries(t);
            const auto bp = eval::sleep_boundaries(p);
            diffs.push_back(bp.onset_min - bt.onset_min);
        }
        const auto r = eval::boundary_error_stats(diffs);
        c.expect(r.bias == 0.5 * k, "bias " + std::to_string(r.bias) + " for k=" + std::to_string(k));
        c.expect(r.mae == 0.5 * k, "mae for k=" + std::to_string(k));
    }
    const auto zero = eval::boundary_error_stats({0.0, 0.0, 0.0, 0.0});
    c.expect(zero.bias == 0.0 && zero.mae == 0.0, "identical hypnograms");
}

void criterion_10_end_to_end() {
    Criterion c("criterion 10: end-to-end synthetic train/eval gate");
    const double start = now_seconds();

    const std::string dir = "/tmp/somnia_acceptance_cohort";
    fs::remove_all(dir);
    synth::SynthConfig scfg;  // defaults, fixed seed
    scfg.seed = 7;
    const std::string manifest = synth::write_cohort(scfg, 50, dir);

    const int jobs = 2;
    std::vector<std::string> rejected;
    auto sessions = pipeline::process_manifest(manifest, {}, {}, jobs, &rejected);
    c.expect(sessions.size() >= 48, "too many QC rejections: " + std::to_string(rejected.size()));

    // first 40 nights train (with an internal validation split), last 10 held out
    std::vector<train::LabeledSession> train_set, val_set, test_set;
    std::vector<const pipeline::ProcessedSession*> test_sessions;
    for (std::size_t i = 0; i < sessions.size(); ++i) {
        if (i < 40) {
            if (i % 8 == 7)
                val_set.push_back(pipeline::to_labeled(sessions[i]));
            else
                train_set.push_back(pipeline::to_labeled(sessions[i]));
        } else {
            test_set.push_back(pipeline::to_labeled(sessions[i]));
            test_sessions.push_back(&sessions[i]);
        }
    }

    model::ModelConfig mcfg;  // defaults
    mcfg.input_dim = sessions.front().features.width();
    mcfg.seed = 7;
    train::TrainConfig tcfg;  // defaults
    tcfg.seed = 7;
    tcfg.jobs = jobs;
    const auto result = train::train(train_set, val_set, mcfg, tcfg);

    // score the held-out nights
    std::vector<eval::SessionEval> evals;
    for (const auto* s : test_sessions) {
        Mat x(s->features.num_epochs(), s->features.width());
        for (int t = 0; t < x.rows; ++t)
            std::copy(s->features.epochs[t].values.begin(), s->features.epochs[t].values.end(),
                      x.row(t));
        const auto pred = model::predict_session(x, result.weights, mcfg,
                                                 s->metadata.lights_off_clock);
        evals.push_back(eval::make_session_eval(s->session_id, s->subject_id, s->metadata.ahi,
                                                s->labels, pred.hypnogram));
    }
    const auto report = eval::evaluate_cohort(evals);
    const double elapsed = now_seconds() - start;
    c.expect(report.pooled.accuracy >= 0.85,
             "four-class accuracy " + std::to_string(report.pooled.accuracy));
    c.expect(report.pooled.kappa >= 0.75, "kappa " + std::to_string(report.pooled.kappa));
    c.expect(elapsed < 600.0, "runtime " + std::to_string(elapsed) + " s");
    c.detail = "accuracy " + std::to_string(report.pooled.accuracy) + ", kappa " +
               std::to_string(report.pooled.kappa) + ", " + std::to_string(elapsed) + " s";
    fs::remove_all(dir);
}

void criterion_11_split_integrity() {
    Criterion c("criterion 11: split exclusivity, exhaustiveness, stratum balance");
    Rng rng(106);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<io::SubjectMetadata> cohort;
        const int n = 8 + static_cast<int>(rng.below(80));
        for (int i = 0; i < n; ++i) {
            io::SubjectMetadata m;
            m.subject_id = "t" + std::to_string(trial) + "-" + std::to_string(i);
            m.gender = rng.uniform() < 0.5 ? "M" : "F";
            m.age = 40.0;
            m.bmi = 25.0;
            m.ahi = rng.uniform(0.0, 45.0);
            cohort.push_back(m);
        }
        const auto split = io::stratified_split(cohort, 0.75, 5000 + trial);
        c.expect(split.in_train.size() == cohort.size(), "assignment not exhaustive");

        std::map<std::string, std::pair<int, int>> strata;
        for (const auto& m : cohort) {
            const auto key =
                std::to_string(static_cast<int>(eval::ahi_group(m.ahi))) + "/" + m.gender;
            auto& [tr, tot] = strata[key];
            ++tot;
            if (split.in_train.at(m.subject_id)) ++tr;
        }
        for (const auto& [key, counts] : strata) {
            if (counts.second < 2) continue;  // pooled-fallback strata
            const double ideal = 0.75 * counts.second;
            c.expect(std::abs(counts.first - ideal) <= 1.0,
                     "stratum " + key + " imbalance " + std::to_string(counts.first) + "/" +
                         std::to_string(counts.second));
        }
    }
}

void criterion_12_checkpoint() {
    Criterion c("criterion 12: checkpoint round trip is bit exact");
    model::ModelConfig cfg;
    cfg.input_dim = 42;
    cfg.hidden_dim = 16;
    cfg.seed = 31;
    auto w = model::ModelWeights::init(cfg);
    const std::string path = "/tmp/somnia_acceptance.ckpt";
    io::save_checkpoint(w, cfg, path);
    auto ck = io::load_checkpoint(path);

    auto wa = model::named_arrays(w);
    auto ra = model::named_arrays(ck.weights);
    for (std::size_t a = 0; a < wa.size(); ++a)
        c.expect(*wa[a].second == *ra[a].second, "array " + wa[a].first + " differs");

    Rng rng(107);
    Mat x(60, cfg.input_dim);
    for (double& v : x.v) v = rng.normal();
    const auto p1 = model::predict_session(x, w, cfg);
    const auto p2 = model::predict_session(x, ck.weights, ck.config);
    c.expect(p1.probs.v == p2.probs.v, "probabilities differ after round trip");
    c.expect(p1.hypnogram.stages == p2.hypnogram.stages, "stages differ after round trip");
    fs::remove(path);
}

}  // namespace

int main() {
    std::printf("somnia acceptance suite\n");
    criterion_1_filter();
    criterion_2_rate();
    criterion_3_dtw();
    criterion_4_stats();
    criterion_5_gradients();
    criterion_6_head_contracts();
    criterion_7_metric_oracles();
    criterion_8_paper_arithmetic();
    criterion_9_boundary_recovery();
    criterion_10_end_to_end();
    criterion_11_split_integrity();
    criterion_12_checkpoint();
    std::printf("%d criterion(s) failed\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
