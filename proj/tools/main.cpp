// somnia: synthesize radar sleep cohorts, extract features, train the
// staging model, and score predictions against reference hypnograms.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "somnia/dataio.hpp"
#include "somnia/eval.hpp"
#include "somnia/log.hpp"
#include "somnia/oracle.hpp"
#include "somnia/pipeline.hpp"
#include "somnia/rng.hpp"
#include "somnia/synth.hpp"
#include "somnia/train.hpp"

namespace fs = std::filesystem;
using namespace somnia;
using nlohmann::json;

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

struct Options {
    std::string manifest;
    std::string out = ".";
    std::string checkpoint;
    std::uint64_t seed = 1;
    int jobs = static_cast<int>(std::thread::hardware_concurrency());
    int nights = 5;
    std::vector<std::string> config_kv;
};

// every recognized --config key with a handler; unknown keys are refused
struct ConfigOverrides {
    model::ModelConfig model;
    train::TrainConfig train;
    synth::SynthConfig synth;
    dsp::MotionThresholds motion;
    double train_fraction = 0.8;
    bool median_smooth = false;

    void apply(const std::vector<std::string>& kvs) {
        const std::map<std::string, std::function<void(const std::string&)>> handlers = {
            {"model.hidden_dim", [&](const std::string& v) { model.hidden_dim = std::stoi(v); }},
            {"model.num_bilstm_layers",
             [&](const std::string& v) { model.num_bilstm_layers = std::stoi(v); }},
            {"model.freq_bins_kept",
             [&](const std::string& v) { model.freq_bins_kept = std::stoi(v); }},
            {"model.head_hidden_dim",
             [&](const std::string& v) { model.head_hidden_dim = std::stoi(v); }},
            {"model.num_classes", [&](const std::string& v) { model.num_classes = std::stoi(v); }},
            {"model.dropout_rate",
             [&](const std::string& v) { model.dropout_rate = std::stod(v); }},
            {"model.temperature", [&](const std::string& v) { model.temperature = std::stod(v); }},
            {"train.learning_rate",
             [&](const std::string& v) { train.learning_rate = std::stod(v); }},
            {"train.batch_size", [&](const std::string& v) { train.batch_size = std::stoi(v); }},
            {"train.max_epochs", [&](const std::string& v) { train.max_epochs = std::stoi(v); }},
            {"train.chunk_length",
             [&](const std::string& v) { train.chunk_length = std::stoi(v); }},
            {"train.gradient_clip_norm",
             [&](const std::string& v) { train.gradient_clip_norm = std::stod(v); }},
            {"train.early_stop_patience",
             [&](const std::string& v) { train.early_stop_patience = std::stoi(v); }},
            {"train.train_fraction", [&](const std::string& v) { train_fraction = std::stod(v); }},
            {"synth.night_duration_min",
             [&](const std::string& v) { synth.night_duration_min = std::stod(v); }},
            {"synth.frame_rate", [&](const std::string& v) { synth.frame_rate = std::stod(v); }},
            {"dsp.count_threshold",
             [&](const std::string& v) { motion.count_threshold = std::stoi(v); }},
            {"dsp.amp_threshold",
             [&](const std::string& v) { motion.amp_threshold = std::stod(v); }},
            {"dsp.gate_fraction",
             [&](const std::string& v) { motion.gate_fraction = std::stod(v); }},
            {"predict.median_smooth",
             [&](const std::string& v) { median_smooth = v == "1" || v == "true"; }},
        };
        for (const std::string& kv : kvs) {
            const auto eq = kv.find('=');
            require(eq != std::string::npos, "UsageError",
                    "--config expects key=value, got '" + kv + "'");
            const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
            const auto it = handlers.find(key);
            require(it != handlers.end(), "UsageError", "unknown --config key '" + key + "'");
            try {
                it->second(val);
            } catch (const std::exception&) {
                fail("UsageError", "bad value for --config " + key + "='" + val + "'");
            }
        }
    }
};

Mat features_as_mat(const features::FeatureMatrix& m) {
    Mat x(m.num_epochs(), m.width());
    for (int t = 0; t < m.num_epochs(); ++t)
        std::copy(m.epochs[t].values.begin(), m.epochs[t].values.end(), x.row(t));
    return x;
}

int cmd_synth(const Options& opt, ConfigOverrides cfg) {
    cfg.synth.seed = opt.seed;
    const std::string manifest = synth::write_cohort(cfg.synth, opt.nights, opt.out);
    std::printf("wrote %d nights under %s\n", opt.nights, opt.out.c_str());
    std::printf("manifest: %s\n", manifest.c_str());
    return 0;
}

int cmd_features(const Options& opt, const ConfigOverrides& cfg) {
    require(!opt.manifest.empty(), "UsageError", "features requires --manifest");
    std::vector<std::string> rejected;
    auto sessions = pipeline::process_manifest(opt.manifest, cfg.motion, {}, opt.jobs, &rejected);
    fs::create_directories(opt.out);
    for (const auto& s : sessions) {
        const std::string path = (fs::path(opt.out) / (s.session_id + ".features.csv")).string();
        features::write_feature_csv(s.features, path);
    }
    std::printf("wrote %zu feature matrices to %s (%zu sessions rejected by QC)\n",
                sessions.size(), opt.out.c_str(), rejected.size());
    return 0;
}

int cmd_train(const Options& opt, ConfigOverrides cfg) {
    require(!opt.manifest.empty(), "UsageError", "train requires --manifest");
    std::vector<std::string> rejected;
    auto sessions = pipeline::process_manifest(opt.manifest, cfg.motion, {}, opt.jobs, &rejected);
    require(!sessions.empty(), "EmptyDataset", "no usable sessions in manifest");

    cfg.model.input_dim = sessions.front().features.width();
    cfg.model.seed = derive_seed(opt.seed, "model");
    cfg.train.seed = derive_seed(opt.seed, "train");
    cfg.train.jobs = opt.jobs;

    // subject-level split for early stopping
    std::map<std::string, io::SubjectMetadata> by_subject;
    for (const auto& s : sessions) by_subject[s.subject_id] = s.metadata;
    std::vector<io::SubjectMetadata> subjects;
    for (auto& [id, m] : by_subject) subjects.push_back(m);
    const auto split =
        io::stratified_split(subjects, cfg.train_fraction, derive_seed(opt.seed, "split"));

    std::vector<train::LabeledSession> train_set, val_set;
    for (const auto& s : sessions) {
        (split.in_train.at(s.subject_id) ? train_set : val_set)
            .push_back(pipeline::to_labeled(s));
    }
    log::info("training on " + std::to_string(train_set.size()) + " sessions, validating on " +
              std::to_string(val_set.size()));

    const auto result = train::train(train_set, val_set, cfg.model, cfg.train);

    fs::create_directories(opt.out);
    const std::string ckpt = (fs::path(opt.out) / "model.ckpt").string();
    io::save_checkpoint(result.weights, cfg.model, ckpt);
    {
        std::ofstream out(fs::path(opt.out) / "loss_trace.csv");
        out << "epoch,train_loss,val_loss\n";
        for (std::size_t i = 0; i < result.trace.size(); ++i)
            out << i << ',' << result.trace[i].train_loss << ',' << result.trace[i].val_loss
                << '\n';
    }
    {
        json j;
        j["seed"] = opt.seed;
        j["best_epoch"] = result.best_epoch;
        j["class_weights"] = result.class_weights;
        j["train_subjects"] = split.train_subjects();
        j["validation_subjects"] = split.validation_subjects();
        j["rejected_sessions"] = rejected;
        std::ofstream out(fs::path(opt.out) / "training.json");
        out << j.dump(2) << "\n";
    }
    std::printf("checkpoint: %s (best epoch %d, %zu trace rows)\n", ckpt.c_str(),
                result.best_epoch, result.trace.size());
    return 0;
}

int cmd_eval(const Options& opt, ConfigOverrides cfg) {
    require(!opt.manifest.empty(), "UsageError", "eval requires --manifest");
    require(!opt.checkpoint.empty(), "UsageError", "eval requires --checkpoint");
    auto ck = io::load_checkpoint(opt.checkpoint);

    std::vector<std::string> rejected;
    auto sessions = pipeline::process_manifest(opt.manifest, cfg.motion, {}, opt.jobs, &rejected);
    require(!sessions.empty(), "EmptyDataset", "no usable sessions in manifest");

    fs::create_directories(fs::path(opt.out) / "predictions");
    std::vector<eval::SessionEval> evals;
    for (const auto& s : sessions) {
        require(s.features.width() == ck.config.input_dim, "VersionMismatch",
                "feature width does not match the checkpoint input_dim");
        auto pred = model::predict_session(features_as_mat(s.features), ck.weights, ck.config,
                                           s.metadata.lights_off_clock, cfg.median_smooth);
        io::write_hypnogram_csv(
            pred.hypnogram,
            (fs::path(opt.out) / "predictions" / (s.session_id + ".hypnogram.csv")).string());
        evals.push_back(eval::make_session_eval(s.session_id, s.subject_id, s.metadata.ahi,
                                                s.labels, pred.hypnogram));
    }
    const auto report = eval::evaluate_cohort(evals);
    eval::write_reports(report, evals, opt.out);
    std::printf("%s", eval::render_text_report(report).c_str());
    std::printf("\nreports written to %s\n", opt.out.c_str());
    return 0;
}

int cmd_report(const Options& opt) {
    require(!opt.manifest.empty(), "UsageError",
            "report requires --manifest pointing at a report.json");
    std::ifstream in(opt.manifest);
    require(in.good(), "IoError", "cannot open " + opt.manifest);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail("ParseError", opt.manifest + ": " + e.what());
    }
    std::ostringstream os;
    os << "=== staging agreement summary (" << j.value("n_sessions", 0) << " sessions) ===\n";
    const auto& pooled = j.at("pooled");
    os << "4-class pooled: accuracy " << pooled.value("accuracy", 0.0) << ", macro-F1 "
       << pooled.value("macro_f1", 0.0) << ", kappa " << pooled.value("kappa", 0.0) << "\n";
    const auto& pb = j.at("pooled_binary");
    os << "binary pooled:  accuracy " << pb.value("accuracy", 0.0) << ", kappa "
       << pb.value("kappa", 0.0) << "\n";
    if (j.contains("subject_level")) {
        const auto& sl = j["subject_level"];
        os << "subject-level kappa: " << sl.at("kappa").value("mean", 0.0) << " +/- "
           << sl.at("kappa").value("sd", 0.0) << "\n";
    }
    if (j.contains("by_ahi"))
        for (const auto& g : j["by_ahi"])
            os << "  " << g.value("group", "") << ": N=" << g.value("n", 0) << " accuracy "
               << g.at("accuracy").value("mean", 0.0) << "\n";
    const std::string text = os.str();
    if (!opt.out.empty() && opt.out != ".") {
        fs::create_directories(fs::path(opt.out).parent_path().empty()
                                   ? "."
                                   : fs::path(opt.out).parent_path().string());
        std::ofstream out(opt.out);
        out << text;
    }
    std::printf("%s", text.c_str());
    return 0;
}

// compact oracle/invariant battery; one line per check
int cmd_selftest(const Options& opt) {
    int failures = 0;
    const auto check = [&](const char* name, bool ok) {
        std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", name);
        if (!ok) ++failures;
    };

    {
        Rng rng(derive_seed(opt.seed, "selftest-dtw"));
        bool ok = true;
        for (int t = 0; t < 200 && ok; ++t) {
            const int n = 1 + static_cast<int>(rng.below(12));
            const int m = 1 + static_cast<int>(rng.below(12));
            std::vector<double> a(n), b(m);
            for (auto& x : a) x = rng.uniform(-5.0, 5.0);
            for (auto& x : b) x = rng.uniform(-5.0, 5.0);
            ok = std::abs(features::dtw_distance(a, b) - oracle::dtw_bruteforce(a, b)) < 1e-12;
        }
        check("dtw matches brute-force dynamic programming (200 pairs)", ok);
    }
    {
        Rng rng(derive_seed(opt.seed, "selftest-stats"));
        bool ok = true;
        for (int t = 0; t < 1000 && ok; ++t) {
            const int n = 2 + static_cast<int>(rng.below(50));
            std::vector<double> v(n);
            for (auto& x : v) x = rng.uniform(-100.0, 100.0);
            const auto got = features::epoch_stats(v);
            const auto want = oracle::naive_stats(v);
            ok = std::abs(got.trimmed_mean - want.trimmed_mean) < 1e-9 &&
                 std::abs(got.std - want.std) < 1e-9 && std::abs(got.rmssd - want.rmssd) < 1e-9;
        }
        check("epoch statistics match the high-precision reference (1000 sequences)", ok);
    }
    {
        Rng rng(derive_seed(opt.seed, "selftest-metrics"));
        bool ok = true;
        for (int t = 0; t < 100 && ok; ++t) {
            const int n = 10 + static_cast<int>(rng.below(500));
            std::vector<int> truth(n), pred(n);
            for (int i = 0; i < n; ++i) {
                truth[i] = static_cast<int>(rng.below(4));
                pred[i] = rng.uniform() < 0.5 ? truth[i] : static_cast<int>(rng.below(4));
            }
            const auto m =
                eval::classification_metrics(eval::confusion_from_labels(truth, pred, 4));
            const auto want = oracle::counting_metrics(truth, pred, 4);
            ok = std::abs(m.accuracy - want.accuracy) < 1e-12 &&
                 std::abs(m.macro_f1 - want.macro_f1) < 1e-12 &&
                 std::abs(m.kappa - want.kappa) < 1e-12;
        }
        check("agreement metrics match the counting oracle (100 pairs)", ok);
    }
    {
        bool ok = true;
        for (std::uint64_t s = 1; s <= 5 && ok; ++s) {
            model::ModelConfig c;
            c.input_dim = 3;
            c.hidden_dim = 4;
            c.num_bilstm_layers = 2;
            c.freq_bins_kept = 2;
            c.head_hidden_dim = 4;
            c.dropout_rate = 0.0;
            c.seed = s;
            ok = train::grad_check(c, s) < 1e-4;
        }
        check("analytic gradients match finite differences (5 models)", ok);
    }
    {
        const auto f = dsp::BandpassFilter::design(0.1, 0.6, 20.0);
        bool ok = true;
        for (double fr = 0.15; fr <= 0.5001; fr += 0.05)
            ok = ok && 40.0 * std::log10(f.magnitude_at(fr, 20.0)) >= -1.0;
        ok = ok && 40.0 * std::log10(f.magnitude_at(0.05, 20.0)) <= -20.0;
        ok = ok && 40.0 * std::log10(f.magnitude_at(1.2, 20.0)) <= -20.0;
        check("bandpass response inside the passband/stopband template", ok);
    }
    {
        bool ok = std::abs(model::h_swish(0.0)) < 1e-15 &&
                  std::abs(model::h_swish(3.0) - 3.0) < 1e-15 &&
                  std::abs(model::h_swish(-3.0)) < 1e-15;
        const auto probs = model::temperature_softmax({0.3, -1.2, 2.0, 0.0}, 2.5);
        double sum = 0.0;
        for (double p : probs) sum += p;
        ok = ok && std::abs(sum - 1.0) < 1e-9;
        Rng rng(derive_seed(opt.seed, "selftest-freq"));
        Mat h(12, 3);
        for (double& v : h.v) v = rng.normal();
        Mat gates(3, 2);
        std::fill(gates.v.begin(), gates.v.end(), 60.0);
        const Mat id = model::frequency_enhance(h, gates, 2);
        for (int i = 0; i < 36 && ok; ++i) ok = std::abs(id.v[i] - h.v[i]) < 1e-9;
        check("head contracts: h-swish points, softmax rows, unit-gate identity", ok);
    }

    std::printf("%s\n", failures == 0 ? "selftest passed" : "selftest FAILED");
    return failures == 0 ? 0 : 1;
}

int classify_error_exit(const Error& e) {
    static const std::set<std::string> data_kinds = {
        "ParseError",        "IoError",        "MissingMetadataField", "NonMonotoneTime",
        "SessionRejected",   "CorruptCheckpoint", "VersionMismatch",   "LengthMismatch",
        "EmptyDataset",      "SignalTooShort", "EmptySignal",          "UnorderedFrames",
        "GridMisalignment",
    };
    if (e.kind() == "UsageError") return kExitUsage;
    return data_kinds.count(e.kind()) ? kExitData : kExitInternal;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"contactless radar sleep staging toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // --seed/--jobs/--config are accepted after the subcommand
    const char* global_footer =
        "Global flags (before or after the subcommand): --seed N, --jobs N, --config key=value "
        "(repeatable). RADAR_SOMNIA_LOG={error,warn,info,debug} controls logging.";
    app.footer(global_footer);

    Options opt;
    if (opt.jobs <= 0) opt.jobs = 1;
    app.add_option("--seed", opt.seed, "master seed; all randomness derives from it");
    app.add_option("--jobs", opt.jobs, "parallel sessions (default: hardware threads)");
    app.add_option("--config", opt.config_kv, "override key=value (repeatable)");

    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic radar-PSG cohort");
    synth_cmd->add_option("--nights", opt.nights, "number of nights to generate");
    synth_cmd->add_option("--out", opt.out, "output directory")->required();

    auto* features_cmd =
        app.add_subcommand("features", "extract per-epoch feature matrices from a cohort");
    features_cmd->add_option("--manifest", opt.manifest, "cohort manifest")->required();
    features_cmd->add_option("--out", opt.out, "output directory")->required();

    auto* train_cmd = app.add_subcommand("train", "train the staging model on a cohort");
    train_cmd->add_option("--manifest", opt.manifest, "cohort manifest")->required();
    train_cmd->add_option("--out", opt.out, "output directory")->required();

    auto* eval_cmd = app.add_subcommand("eval", "score predictions against the reference");
    eval_cmd->add_option("--manifest", opt.manifest, "cohort manifest")->required();
    eval_cmd->add_option("--checkpoint", opt.checkpoint, "model checkpoint")->required();
    eval_cmd->add_option("--out", opt.out, "output directory")->required();

    auto* report_cmd = app.add_subcommand("report", "render a text summary from report.json");
    report_cmd->add_option("--manifest", opt.manifest, "path to report.json")->required();
    report_cmd->add_option("--out", opt.out, "optional output text file");

    auto* selftest_cmd =
        app.add_subcommand("selftest", "run the oracle and invariant battery");
    for (CLI::App* sub : {synth_cmd, features_cmd, train_cmd, eval_cmd, report_cmd, selftest_cmd})
        sub->footer(global_footer);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        ConfigOverrides cfg;
        cfg.apply(opt.config_kv);
        if (app.got_subcommand("synth")) return cmd_synth(opt, cfg);
        if (app.got_subcommand("features")) return cmd_features(opt, cfg);
        if (app.got_subcommand("train")) return cmd_train(opt, cfg);
        if (app.got_subcommand("eval")) return cmd_eval(opt, cfg);
        if (app.got_subcommand("report")) return cmd_report(opt);
        if (app.got_subcommand("selftest")) return cmd_selftest(opt);
        return kExitUsage;
    } catch (const Error& e) {
        log::error(e.what());
        std::fprintf(stderr, "error: %s\n", e.what());
        return classify_error_exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return kExitInternal;
    }
}
