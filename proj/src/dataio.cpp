#include "somnia/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "somnia/eval.hpp"
#include "somnia/log.hpp"
#include "somnia/rng.hpp"

namespace somnia::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

// strict numeric cell: the whole token must parse ("nan"/"inf" count as
// numeric and come back non-finite)
double parse_cell(const std::string& tok, const std::string& path, int lineno) {
    require(!tok.empty(), "ParseError", path + ":" + std::to_string(lineno) + ": empty cell");
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    require(end == tok.c_str() + tok.size(), "ParseError",
            path + ":" + std::to_string(lineno) + ": non-numeric cell '" + tok + "'");
    return v;
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "IoError", "cannot open " + path);
    return in;
}

}  // namespace

// --- metadata / manifest -----------------------------------------------------

SubjectMetadata read_metadata_json(const std::string& path) {
    auto in = open_input(path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail("ParseError", path + ": " + e.what());
    }
    SubjectMetadata m;
    for (const char* field : {"subject_id", "gender", "age", "bmi", "ahi", "lights_off_clock"})
        require(j.contains(field), "MissingMetadataField", path + ": missing '" + field + "'");
    m.subject_id = j["subject_id"].get<std::string>();
    m.gender = j["gender"].get<std::string>();
    m.age = j["age"].get<double>();
    m.bmi = j["bmi"].get<double>();
    m.ahi = j["ahi"].get<double>();
    m.lights_off_clock = j["lights_off_clock"].get<double>();
    require(m.age > 0.0, "MissingMetadataField", path + ": age must be positive");
    require(m.ahi >= 0.0, "MissingMetadataField", path + ": ahi must be non-negative");
    return m;
}

void write_metadata_json(const SubjectMetadata& m, const std::string& path) {
    json j{{"subject_id", m.subject_id}, {"gender", m.gender},
           {"age", m.age},               {"bmi", m.bmi},
           {"ahi", m.ahi},               {"lights_off_clock", m.lights_off_clock}};
    std::ofstream out(path);
    require(out.good(), "IoError", "cannot write " + path);
    out << j.dump(2) << "\n";
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    auto in = open_input(path);
    std::vector<ManifestEntry> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail("ParseError", path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        ManifestEntry e;
        for (const char* field :
             {"session_id", "subject_id", "phase_file", "frames_file", "hypnogram_file",
              "metadata_file"})
            require(j.contains(field), "ParseError",
                    path + ":" + std::to_string(lineno) + ": missing '" + field + "'");
        e.session_id = j["session_id"].get<std::string>();
        e.subject_id = j["subject_id"].get<std::string>();
        e.phase_file = j["phase_file"].get<std::string>();
        e.frames_file = j["frames_file"].get<std::string>();
        e.hypnogram_file = j["hypnogram_file"].get<std::string>();
        e.metadata_file = j["metadata_file"].get<std::string>();
        if (j.contains("frame_rate")) e.frame_rate = j["frame_rate"].get<double>();
        entries.push_back(std::move(e));
    }
    return entries;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), "IoError", "cannot write " + path);
    for (const auto& e : entries) {
        json j{{"session_id", e.session_id},     {"subject_id", e.subject_id},
               {"phase_file", e.phase_file},     {"frames_file", e.frames_file},
               {"hypnogram_file", e.hypnogram_file}, {"metadata_file", e.metadata_file},
               {"frame_rate", e.frame_rate}};
        out << j.dump() << "\n";
    }
}

// --- stage codes ---------------------------------------------------------------

Stage map_psg_code(const std::string& code) {
    if (code == "W") return Stage::Wake;
    if (code == "N1" || code == "N2") return Stage::Light;
    if (code == "N3") return Stage::Deep;
    if (code == "REM") return Stage::REM;
    return Stage::Unscored;  // unknown codes are total-mapped to Unscored
}

std::string output_stage_code(Stage s) { return std::string(1, stage_code(s)); }

Hypnogram read_hypnogram_csv(const std::string& path, double start_clock) {
    auto in = open_input(path);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), "ParseError", path + ": missing header");
    {
        auto cells = split_csv_line(line);
        require(cells.size() == 2 && cells[0] == "epoch_index" && cells[1] == "stage_code",
                "ParseError", path + ": expected header 'epoch_index,stage_code'");
    }
    Hypnogram h;
    h.start_clock = start_clock;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        require(cells.size() == 2, "ParseError",
                path + ":" + std::to_string(lineno) + ": expected 2 columns");
        const int idx = static_cast<int>(parse_cell(cells[0], path, lineno));
        require(idx == static_cast<int>(h.stages.size()), "ParseError",
                path + ":" + std::to_string(lineno) + ": epoch_index not contiguous");
        h.stages.push_back(map_psg_code(cells[1]));
    }
    require(!h.stages.empty(), "ParseError", path + ": no epochs");
    return h;
}

void write_hypnogram_csv(const Hypnogram& h, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), "IoError", "cannot write " + path);
    out << "epoch_index,stage_code\n";
    for (int e = 0; e < h.num_epochs(); ++e)
        out << e << ',' << output_stage_code(h.stages[e]) << '\n';
}

// --- signal tables ---------------------------------------------------------------

void read_phase_csv(const std::string& path, std::vector<double>& times,
                    std::vector<double>& values) {
    auto in = open_input(path);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), "ParseError", path + ": missing header");
    {
        auto cells = split_csv_line(line);
        require(cells.size() == 2 && cells[0] == "time_seconds" && cells[1] == "phase_radians",
                "ParseError", path + ": expected header 'time_seconds,phase_radians'");
    }
    times.clear();
    values.clear();
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        require(cells.size() == 2, "ParseError",
                path + ":" + std::to_string(lineno) + ": expected 2 columns");
        const double t = parse_cell(cells[0], path, lineno);
        require(std::isfinite(t), "ParseError",
                path + ":" + std::to_string(lineno) + ": non-finite timestamp");
        times.push_back(t);
        values.push_back(parse_cell(cells[1], path, lineno));  // nan allowed: gap
    }
    require(!times.empty(), "ParseError", path + ": no samples");
}

void write_phase_csv(const std::vector<double>& times, const std::vector<double>& values,
                     const std::string& path) {
    require(times.size() == values.size(), "LengthMismatch", "times/values sizes differ");
    std::ofstream out(path);
    require(out.good(), "IoError", "cannot write " + path);
    out << "time_seconds,phase_radians\n";
    char buf[80];
    for (std::size_t i = 0; i < times.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.6f,%.9g\n", times[i], values[i]);
        out << buf;
    }
    require(out.good(), "IoError", "failed writing " + path);
}

std::vector<dsp::FramePointSummary> read_frames_csv(const std::string& path) {
    auto in = open_input(path);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), "ParseError", path + ": missing header");
    {
        auto cells = split_csv_line(line);
        require(cells.size() == 3 && cells[0] == "frame_index" && cells[1] == "point_count" &&
                    cells[2] == "motion_amplitude",
                "ParseError",
                path + ": expected header 'frame_index,point_count,motion_amplitude'");
    }
    std::vector<dsp::FramePointSummary> frames;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        require(cells.size() == 3, "ParseError",
                path + ":" + std::to_string(lineno) + ": expected 3 columns");
        dsp::FramePointSummary f;
        f.frame_index = static_cast<std::int64_t>(parse_cell(cells[0], path, lineno));
        f.point_count = static_cast<int>(parse_cell(cells[1], path, lineno));
        f.motion_amplitude = parse_cell(cells[2], path, lineno);
        require(f.point_count >= 0 && f.motion_amplitude >= 0.0, "ParseError",
                path + ":" + std::to_string(lineno) + ": negative count or amplitude");
        frames.push_back(f);
    }
    return frames;
}

void write_frames_csv(const std::vector<dsp::FramePointSummary>& frames,
                      const std::string& path) {
    std::ofstream out(path);
    require(out.good(), "IoError", "cannot write " + path);
    out << "frame_index,point_count,motion_amplitude\n";
    char buf[80];
    for (const auto& f : frames) {
        std::snprintf(buf, sizeof(buf), "%lld,%d,%.6g\n", static_cast<long long>(f.frame_index),
                      f.point_count, f.motion_amplitude);
        out << buf;
    }
}

// --- session loading ------------------------------------------------------------

SessionRecord load_session(const ManifestEntry& entry, const std::string& base_dir) {
    const auto resolve = [&](const std::string& p) {
        return fs::path(p).is_absolute() ? p : (fs::path(base_dir) / p).string();
    };

    SessionRecord rec;
    rec.session_id = entry.session_id;
    rec.metadata = read_metadata_json(resolve(entry.metadata_file));
    rec.frame_rate = entry.frame_rate;

    std::vector<double> times, values;
    read_phase_csv(resolve(entry.phase_file), times, values);

    // median native spacing bounds the interpolation gap tolerance
    std::vector<double> dts;
    for (std::size_t i = 1; i < times.size(); ++i) dts.push_back(times[i] - times[i - 1]);
    double median_dt = 0.05;
    if (!dts.empty()) {
        std::nth_element(dts.begin(), dts.begin() + dts.size() / 2, dts.end());
        median_dt = dts[dts.size() / 2];
    }
    const double max_gap = std::max(0.5, 3.0 * median_dt);
    rec.phase = dsp::resample_uniform(times, values, dsp::kInternalRateHz,
                                      rec.metadata.lights_off_clock, &rec.phase_supported,
                                      max_gap);

    rec.frames = read_frames_csv(resolve(entry.frames_file));
    rec.reference = read_hypnogram_csv(resolve(entry.hypnogram_file),
                                       rec.metadata.lights_off_clock);

    const int samples_per_epoch = static_cast<int>(std::lround(30.0 * dsp::kInternalRateHz));
    const int signal_epochs = static_cast<int>(rec.phase.samples.size()) / samples_per_epoch;
    require(signal_epochs >= 1, "SignalTooShort",
            entry.session_id + ": less than one full epoch of signal");

    rec.num_epochs = std::min(signal_epochs, rec.reference.num_epochs());
    if (rec.reference.num_epochs() > rec.num_epochs) {
        rec.truncated_hypnogram = true;
        log::warn(entry.session_id + ": hypnogram longer than signal, truncating to " +
                  std::to_string(rec.num_epochs) + " epochs");
        rec.reference.stages.resize(rec.num_epochs);
    }
    rec.epoch_excluded.assign(rec.num_epochs, false);
    return rec;
}

SessionRecord qc_filter(const SessionRecord& session) {
    SessionRecord out = session;
    const int samples_per_epoch = static_cast<int>(std::lround(30.0 * dsp::kInternalRateHz));
    int excluded = 0;
    for (int e = 0; e < out.num_epochs; ++e) {
        bool bad = false;
        // epoch is excluded when most of its signal is missing
        if (!out.phase_supported.empty()) {
            int missing = 0;
            const std::size_t begin = static_cast<std::size_t>(e) * samples_per_epoch;
            for (int k = 0; k < samples_per_epoch; ++k) {
                const std::size_t idx = begin + k;
                if (idx >= out.phase_supported.size() || !out.phase_supported[idx]) ++missing;
            }
            if (missing > samples_per_epoch / 2) bad = true;
        }
        if (!is_scored(out.reference.stages[e])) bad = true;
        out.epoch_excluded[e] = bad;
        if (bad) ++excluded;
    }
    if (excluded > 0.3 * out.num_epochs)
        fail("SessionRejected", out.session_id + ": TooManyExcludedEpochs (" +
                                    std::to_string(excluded) + "/" +
                                    std::to_string(out.num_epochs) + ")");
    bool any_sleep = false;
    for (int e = 0; e < out.num_epochs; ++e)
        if (!out.epoch_excluded[e] && is_sleep(out.reference.stages[e])) any_sleep = true;
    if (!any_sleep) fail("SessionRejected", out.session_id + ": NoSleep");
    out.qc_applied = true;
    return out;
}

// --- stratified split -------------------------------------------------------------

std::vector<std::string> SplitAssignment::train_subjects() const {
    std::vector<std::string> out;
    for (const auto& [id, t] : in_train)
        if (t) out.push_back(id);
    return out;
}

std::vector<std::string> SplitAssignment::validation_subjects() const {
    std::vector<std::string> out;
    for (const auto& [id, t] : in_train)
        if (!t) out.push_back(id);
    return out;
}

SplitAssignment stratified_split(const std::vector<SubjectMetadata>& subjects,
                                 double train_fraction, std::uint64_t seed) {
    require(train_fraction > 0.0 && train_fraction < 1.0, "InternalError",
            "train_fraction must be in (0,1)");
    SplitAssignment a;
    a.seed = seed;

    std::map<std::string, std::vector<std::string>> buckets;
    for (const auto& s : subjects) {
        require(!a.in_train.count(s.subject_id), "InternalError",
                "duplicate subject_id " + s.subject_id);
        a.in_train[s.subject_id] = false;
        const auto g = eval::ahi_group(s.ahi);
        buckets[std::to_string(static_cast<int>(g)) + "/" + s.gender].push_back(s.subject_id);
    }

    // strata too small to split are pooled and assigned together
    std::vector<std::string> pooled;
    std::ostringstream report;
    for (auto& [key, ids] : buckets) {
        if (ids.size() < 2) {
            pooled.insert(pooled.end(), ids.begin(), ids.end());
            continue;
        }
        std::sort(ids.begin(), ids.end());
        Rng rng(derive_seed(seed, "split/" + key));
        for (int i = static_cast<int>(ids.size()) - 1; i > 0; --i)
            std::swap(ids[i], ids[rng.below(static_cast<std::uint64_t>(i) + 1)]);
        const int n_train =
            static_cast<int>(std::lround(train_fraction * static_cast<double>(ids.size())));
        for (int i = 0; i < n_train; ++i) a.in_train[ids[i]] = true;
        report << key << ": " << n_train << "/" << ids.size() << " train\n";
    }
    if (!pooled.empty()) {
        std::sort(pooled.begin(), pooled.end());
        Rng rng(derive_seed(seed, "split/pooled"));
        for (int i = static_cast<int>(pooled.size()) - 1; i > 0; --i)
            std::swap(pooled[i], pooled[rng.below(static_cast<std::uint64_t>(i) + 1)]);
        const int n_train =
            static_cast<int>(std::lround(train_fraction * static_cast<double>(pooled.size())));
        for (int i = 0; i < n_train; ++i) a.in_train[pooled[i]] = true;
        report << "pooled singletons: " << n_train << "/" << pooled.size() << " train\n";
    }
    a.stratification_report = report.str();
    return a;
}

// --- checkpoints --------------------------------------------------------------------

namespace {

constexpr const char* kMagic = "SOMNIA-CKPT";
constexpr int kFormatVersion = 1;

std::uint64_t fnv1a_update(std::uint64_t h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

void put_u64(std::ostream& out, std::uint64_t v, std::uint64_t& crc) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 8);
    crc = fnv1a_update(crc, b, 8);
}

bool get_u64(std::istream& in, std::uint64_t& v, std::uint64_t& crc) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) return false;
    v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    crc = fnv1a_update(crc, b, 8);
    return true;
}

void put_f64(std::ostream& out, double d, std::uint64_t& crc) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(out, bits, crc);
}

bool get_f64(std::istream& in, double& d, std::uint64_t& crc) {
    std::uint64_t bits;
    if (!get_u64(in, bits, crc)) return false;
    std::memcpy(&d, &bits, 8);
    return true;
}

// rank + dims for each named array, derived from the config
std::vector<std::vector<std::uint64_t>> array_shapes(const model::ModelConfig& cfg) {
    std::vector<std::vector<std::uint64_t>> shapes;
    const auto H = static_cast<std::uint64_t>(cfg.hidden_dim);
    const auto D = static_cast<std::uint64_t>(cfg.bilstm_out_dim());
    for (int l = 0; l < cfg.num_bilstm_layers; ++l) {
        const std::uint64_t in = l == 0 ? cfg.input_dim : D;
        for (int dir = 0; dir < 2; ++dir) {
            shapes.push_back({4 * H, in});
            shapes.push_back({4 * H, H});
            shapes.push_back({4 * H});
        }
    }
    shapes.push_back({D, static_cast<std::uint64_t>(cfg.freq_bins_kept)});
    shapes.push_back({D});
    shapes.push_back({D});
    shapes.push_back({static_cast<std::uint64_t>(cfg.head_hidden_dim), D});
    shapes.push_back({static_cast<std::uint64_t>(cfg.head_hidden_dim)});
    shapes.push_back({static_cast<std::uint64_t>(cfg.num_classes),
                      static_cast<std::uint64_t>(cfg.head_hidden_dim)});
    shapes.push_back({static_cast<std::uint64_t>(cfg.num_classes)});
    return shapes;
}

}  // namespace

void save_checkpoint(const model::ModelWeights& weights, const model::ModelConfig& cfg,
                     const std::string& path) {
    require(weights.shape_matches(cfg), "ShapeMismatch", "weights do not match config");
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "IoError", "cannot write " + path);

    char buf[128];
    out << kMagic << " v" << kFormatVersion << "\n";
    out << "input_dim=" << cfg.input_dim << "\n";
    out << "hidden_dim=" << cfg.hidden_dim << "\n";
    out << "num_bilstm_layers=" << cfg.num_bilstm_layers << "\n";
    out << "freq_bins_kept=" << cfg.freq_bins_kept << "\n";
    out << "head_hidden_dim=" << cfg.head_hidden_dim << "\n";
    out << "num_classes=" << cfg.num_classes << "\n";
    std::snprintf(buf, sizeof(buf), "dropout_rate=%.17g\n", cfg.dropout_rate);
    out << buf;
    std::snprintf(buf, sizeof(buf), "temperature=%.17g\n", cfg.temperature);
    out << buf;
    out << "seed=" << cfg.seed << "\n";

    auto& mutable_weights = const_cast<model::ModelWeights&>(weights);
    auto arrays = model::named_arrays(mutable_weights);
    const auto shapes = array_shapes(cfg);
    require(arrays.size() == shapes.size(), "InternalError", "array/shape descriptor mismatch");
    out << "arrays=" << arrays.size() << "\n";

    std::uint64_t crc = 0xCBF29CE484222325ULL;
    for (std::size_t a = 0; a < arrays.size(); ++a) {
        const std::string& name = arrays[a].first;
        put_u64(out, name.size(), crc);
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        crc = fnv1a_update(crc, name.data(), name.size());
        put_u64(out, shapes[a].size(), crc);
        std::uint64_t count = 1;
        for (std::uint64_t d : shapes[a]) {
            put_u64(out, d, crc);
            count *= d;
        }
        require(count == arrays[a].second->size(), "InternalError",
                "shape descriptor disagrees with array " + name);
        for (double v : *arrays[a].second) put_f64(out, v, crc);
    }
    std::uint64_t dummy = 0;
    put_u64(out, crc, dummy);
    require(out.good(), "IoError", "failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "IoError", "cannot open " + path);

    std::string line;
    require(static_cast<bool>(std::getline(in, line)), "CorruptCheckpoint", path + ": empty file");
    require(line == std::string(kMagic) + " v" + std::to_string(kFormatVersion),
            "VersionMismatch", path + ": unknown format '" + line + "'");

    std::map<std::string, std::string> kv;
    std::size_t n_arrays = 0;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        require(eq != std::string::npos, "CorruptCheckpoint", path + ": bad header line");
        const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "arrays") {
            n_arrays = static_cast<std::size_t>(std::stoull(val));
            break;
        }
        kv[key] = val;
    }
    require(n_arrays > 0, "CorruptCheckpoint", path + ": missing arrays header");

    Checkpoint ck;
    try {
        ck.config.input_dim = std::stoi(kv.at("input_dim"));
        ck.config.hidden_dim = std::stoi(kv.at("hidden_dim"));
        ck.config.num_bilstm_layers = std::stoi(kv.at("num_bilstm_layers"));
        ck.config.freq_bins_kept = std::stoi(kv.at("freq_bins_kept"));
        ck.config.head_hidden_dim = std::stoi(kv.at("head_hidden_dim"));
        ck.config.num_classes = std::stoi(kv.at("num_classes"));
        ck.config.dropout_rate = std::stod(kv.at("dropout_rate"));
        ck.config.temperature = std::stod(kv.at("temperature"));
        ck.config.seed = std::stoull(kv.at("seed"));
    } catch (const std::exception&) {
        fail("CorruptCheckpoint", path + ": incomplete config header");
    }

    ck.weights = model::ModelWeights::zeros(ck.config);
    auto arrays = model::named_arrays(ck.weights);
    const auto shapes = array_shapes(ck.config);
    require(arrays.size() == n_arrays, "VersionMismatch",
            path + ": array count does not match config");

    std::uint64_t crc = 0xCBF29CE484222325ULL;
    for (std::size_t a = 0; a < arrays.size(); ++a) {
        std::uint64_t name_len = 0;
        require(get_u64(in, name_len, crc), "CorruptCheckpoint", path + ": truncated");
        std::string name(name_len, '\0');
        require(static_cast<bool>(in.read(name.data(), static_cast<std::streamsize>(name_len))),
                "CorruptCheckpoint", path + ": truncated");
        crc = fnv1a_update(crc, name.data(), name.size());
        require(name == arrays[a].first, "CorruptCheckpoint",
                path + ": unexpected array '" + name + "'");
        std::uint64_t rank = 0;
        require(get_u64(in, rank, crc), "CorruptCheckpoint", path + ": truncated");
        require(rank == shapes[a].size(), "CorruptCheckpoint", path + ": bad rank for " + name);
        std::uint64_t count = 1;
        for (std::uint64_t r = 0; r < rank; ++r) {
            std::uint64_t dim = 0;
            require(get_u64(in, dim, crc), "CorruptCheckpoint", path + ": truncated");
            require(dim == shapes[a][r], "CorruptCheckpoint", path + ": bad shape for " + name);
            count *= dim;
        }
        auto& vec = *arrays[a].second;
        require(count == vec.size(), "CorruptCheckpoint", path + ": bad size for " + name);
        for (std::size_t i = 0; i < vec.size(); ++i)
            require(get_f64(in, vec[i], crc), "CorruptCheckpoint", path + ": truncated");
    }
    std::uint64_t stored = 0, dummy = 0;
    require(get_u64(in, stored, dummy), "CorruptCheckpoint", path + ": missing checksum");
    require(stored == crc, "CorruptCheckpoint", path + ": checksum mismatch");
    return ck;
}

model::ModelWeights load_checkpoint_expecting(const std::string& path,
                                              const model::ModelConfig& expected) {
    Checkpoint ck = load_checkpoint(path);
    const bool same = ck.config.input_dim == expected.input_dim &&
                      ck.config.hidden_dim == expected.hidden_dim &&
                      ck.config.num_bilstm_layers == expected.num_bilstm_layers &&
                      ck.config.freq_bins_kept == expected.freq_bins_kept &&
                      ck.config.head_hidden_dim == expected.head_hidden_dim &&
                      ck.config.num_classes == expected.num_classes;
    require(same, "VersionMismatch", path + ": checkpoint config differs from expectation");
    return std::move(ck.weights);
}

}  // namespace somnia::io
