#include "mbfd/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>
#include <yaml-cpp/yaml.h>

#include "mbfd/error.hpp"

namespace mbfd {

namespace fs = std::filesystem;
using nlohmann::json;

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.empty()) throw ShapeError("accuracy: empty label list");
    if (predicted.size() != truth.size()) throw ShapeError("accuracy: label lists differ in length");
    std::size_t m = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) m += predicted[i] == truth[i];
    return 100.0 * static_cast<double>(m) / static_cast<double>(predicted.size());
}

std::string_view to_string(Pipeline p) {
    switch (p) {
        case Pipeline::ML_BASELINE: return "ML_BASELINE";
        case Pipeline::SDLM: return "SDLM";
        case Pipeline::S_SDLM: return "S_SDLM";
        case Pipeline::U_SDLM: return "U_SDLM";
        case Pipeline::ROBUST_MBFD: return "ROBUST_MBFD";
    }
    return "?";
}

Pipeline parse_pipeline(std::string_view name) {
    std::string up;
    for (char c : name) up.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    for (auto p : {Pipeline::ML_BASELINE, Pipeline::SDLM, Pipeline::S_SDLM, Pipeline::U_SDLM, Pipeline::ROBUST_MBFD})
        if (up == to_string(p)) return p;
    if (up == "ML") return Pipeline::ML_BASELINE;
    throw ConfigError("unknown pipeline: " + std::string(name));
}

std::optional<Architecture> architecture_of(Pipeline p) {
    switch (p) {
        case Pipeline::ML_BASELINE: return std::nullopt;
        case Pipeline::SDLM: return Architecture::SDLM;
        case Pipeline::S_SDLM: return Architecture::S_SDLM;
        case Pipeline::U_SDLM: return Architecture::U_SDLM;
        case Pipeline::ROBUST_MBFD: return Architecture::ROBUST_MBFD;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------- synthetic

namespace {

struct SyntheticId {
    std::size_t cls = 0;
    bool train = true;
    std::size_t k = 0;
};

SyntheticId parse_synthetic_id(const std::string& id) {
    SyntheticId out;
    const auto dash = id.find('-');
    if (id.size() < 2 || id[0] != 'S' || dash == std::string::npos)
        throw MissingDataError("not a synthetic source id: " + id);
    auto num = [&](std::string_view s, std::size_t& v) {
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size()) throw MissingDataError("not a synthetic source id: " + id);
    };
    num(std::string_view(id).substr(1, dash - 1), out.cls);
    std::string_view rest = std::string_view(id).substr(dash + 1);
    if (rest.starts_with("train")) {
        rest.remove_prefix(5);
    } else if (rest.starts_with("test")) {
        out.train = false;
        rest.remove_prefix(4);
    } else {
        throw MissingDataError("not a synthetic source id: " + id);
    }
    num(rest, out.k);
    return out;
}

std::string synthetic_id(std::size_t cls, bool train, std::size_t k) {
    return fmt::format("S{}-{}{}", cls, train ? "train" : "test", k);
}

}  // namespace

SplitSpec synthetic_split(const SyntheticConfig& cfg) {
    if (cfg.classes < 2) throw ConfigError("synthetic split needs at least two classes");
    if (cfg.train_recordings == 0 || cfg.test_recordings == 0) throw ConfigError("synthetic split needs recordings");
    SplitSpec s;
    s.name = "SYNTHETIC";
    s.dataset = DatasetKind::SYNTHETIC;
    s.rule = SegmentationRule::SEGMENT_400MS_50PCT;
    s.window_ms = cfg.window_ms;
    for (std::size_t c = 0; c < cfg.classes; ++c) {
        SplitClass sc;
        sc.label = {static_cast<int>(c), fmt::format("S{}", c)};
        for (std::size_t k = 0; k < cfg.train_recordings; ++k) sc.train.push_back(synthetic_id(c, true, k));
        for (std::size_t k = 0; k < cfg.test_recordings; ++k) sc.test.push_back(synthetic_id(c, false, k));
        s.classes.push_back(std::move(sc));
    }
    return s;
}

VibrationRecording synthetic_recording(const SyntheticConfig& cfg, const std::string& source_id, std::uint64_t seed) {
    const auto id = parse_synthetic_id(source_id);
    if (id.cls >= cfg.classes) throw MissingDataError("synthetic class out of range: " + source_id);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(id.cls), static_cast<std::uint32_t>(id.train),
                      static_cast<std::uint32_t>(id.k)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> jitter(0.9, 1.1);
    std::normal_distribution<double> noise(0.0, cfg.noise);

    const double nyquist = cfg.sample_rate / 2.0;
    const double f1 = nyquist * (0.05 + 0.45 * static_cast<double>(id.cls) / static_cast<double>(cfg.classes));
    const double f2 = f1 + 0.4 * nyquist;
    const double p1 = phase(rng), p2 = phase(rng);
    const double a1 = jitter(rng), a2 = 0.5 * jitter(rng);

    VibrationRecording rec;
    rec.source_id = source_id;
    rec.dataset = DatasetKind::SYNTHETIC;
    rec.sample_rate = cfg.sample_rate;
    const auto n = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.sample_rate));
    rec.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / cfg.sample_rate;
        rec.samples[i] = a1 * std::sin(2.0 * std::numbers::pi * f1 * t + p1) +
                         a2 * std::sin(2.0 * std::numbers::pi * f2 * t + p2) + noise(rng);
    }
    return rec;
}

// ------------------------------------------------------------------- config

namespace {

json synthetic_to_json(const SyntheticConfig& c) {
    return {{"classes", c.classes},         {"sample_rate", c.sample_rate},
            {"duration_s", c.duration_s},   {"window_ms", c.window_ms},
            {"train_recordings", c.train_recordings}, {"test_recordings", c.test_recordings},
            {"noise", c.noise}};
}

SyntheticConfig synthetic_from_json(const json& j) {
    SyntheticConfig c;
    c.classes = j.value("classes", c.classes);
    c.sample_rate = j.value("sample_rate", c.sample_rate);
    c.duration_s = j.value("duration_s", c.duration_s);
    c.window_ms = j.value("window_ms", c.window_ms);
    c.train_recordings = j.value("train_recordings", c.train_recordings);
    c.test_recordings = j.value("test_recordings", c.test_recordings);
    c.noise = j.value("noise", c.noise);
    if (!(c.sample_rate > 0.0) || !(c.duration_s > 0.0) || !(c.window_ms > 0.0))
        throw ConfigError("synthetic rates and durations must be positive");
    return c;
}

void reject_unknown(const json& j, const json& reference, std::string_view section) {
    if (!j.is_object()) throw ConfigError(fmt::format("{} must be a mapping", section));
    for (const auto& [key, _] : j.items())
        if (!reference.contains(key)) throw ConfigError(fmt::format("unknown key '{}' in {}", key, section));
}

bool is_known_split(const std::string& name) {
    if (name == "SYNTHETIC" || name == "PU-C2") return true;
    const auto names = split_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

}  // namespace

json to_json(const ExperimentConfig& cfg) {
    json j = {{"split", cfg.split},
              {"pipeline", std::string(to_string(cfg.pipeline))},
              {"normalization", std::string(preprocess::to_string(cfg.normalization))},
              {"backend", std::string(to_string(cfg.backend))},
              {"backend_params", to_json(cfg.backend_params)},
              {"seed", cfg.seed},
              {"output_dir", cfg.output_dir.string()}};
    if (cfg.pipeline == Pipeline::ML_BASELINE) {
        j["domain"] = std::string(features::to_string(cfg.domain));
    } else {
        j["loss"] = losses::to_json(cfg.loss);
        j["train"] = to_json(cfg.train);
        j["backbone"] = to_json(cfg.backbone);
    }
    if (cfg.split == "SYNTHETIC") j["synthetic"] = synthetic_to_json(cfg.synthetic);
    if (cfg.strict_disjoint) j["strict_disjoint"] = true;
    if (!cfg.data_dir.empty()) j["data_dir"] = cfg.data_dir.string();
    return j;
}

ExperimentConfig experiment_config_from_json(const json& j) {
    static const json allowed = {{"split", 0},  {"pipeline", 0}, {"domain", 0},     {"normalization", 0},
                                 {"backend", 0}, {"backend_params", 0}, {"loss", 0}, {"train", 0},
                                 {"backbone", 0}, {"synthetic", 0}, {"seed", 0},   {"strict_disjoint", 0},
                                 {"output_dir", 0}, {"data_dir", 0}};
    reject_unknown(j, allowed, "experiment config");

    ExperimentConfig cfg;
    try {
        cfg.split = j.value("split", cfg.split);
        if (j.contains("pipeline")) cfg.pipeline = parse_pipeline(j.at("pipeline").get<std::string>());
        if (j.contains("normalization"))
            cfg.normalization = preprocess::parse_method(j.at("normalization").get<std::string>());
        if (j.contains("backend")) cfg.backend = parse_backend(j.at("backend").get<std::string>());
        cfg.seed = j.value("seed", cfg.seed);
        cfg.strict_disjoint = j.value("strict_disjoint", false);
        if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
        if (j.contains("data_dir")) cfg.data_dir = j.at("data_dir").get<std::string>();

        const bool ml = cfg.pipeline == Pipeline::ML_BASELINE;
        if (j.contains("domain")) {
            if (!ml) throw ConfigError("domain applies to the ML_BASELINE pipeline only");
            cfg.domain = features::parse_domain(j.at("domain").get<std::string>());
        }
        for (const char* key : {"loss", "train", "backbone"})
            if (ml && j.contains(key))
                throw ConfigError(fmt::format("'{}' has no meaning for the ML_BASELINE pipeline", key));

        if (j.contains("backend_params")) {
            reject_unknown(j["backend_params"], to_json(BackendParams{}), "backend_params");
            cfg.backend_params = backend_params_from_json(j["backend_params"]);
        }
        if (j.contains("loss")) {
            reject_unknown(j["loss"], losses::to_json(losses::LossConfig{}), "loss");
            cfg.loss = losses::loss_config_from_json(j["loss"]);
        }
        if (j.contains("train")) {
            reject_unknown(j["train"], to_json(TrainConfig{}), "train");
            cfg.train = train_config_from_json(j["train"]);
        }
        if (j.contains("backbone")) {
            const auto& b = j["backbone"];
            if (b.is_string()) {
                const auto name = b.get<std::string>();
                if (name == "full") cfg.backbone = BackboneConfig{};
                else if (name == "mini") cfg.backbone = BackboneConfig::mini();
                else throw ConfigError("backbone must be 'full', 'mini' or a mapping");
            } else {
                reject_unknown(b, to_json(BackboneConfig{}), "backbone");
                cfg.backbone = backbone_config_from_json(b);
            }
        }
        if (j.contains("synthetic")) {
            if (cfg.split != "SYNTHETIC") throw ConfigError("'synthetic' is only valid with split SYNTHETIC");
            reject_unknown(j["synthetic"], synthetic_to_json(SyntheticConfig{}), "synthetic");
            cfg.synthetic = synthetic_from_json(j["synthetic"]);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed experiment config: ") + e.what());
    }

    for (const char* key : {"train", "backend_params"})
        if (j.contains(key) && j[key].contains("seed") && j[key]["seed"] != cfg.seed)
            throw ConfigError(fmt::format("{}.seed differs from the top-level seed, which drives every stage", key));
    cfg.train.seed = cfg.seed;
    cfg.backend_params.seed = cfg.seed;

    if (!is_known_split(cfg.split)) throw ConfigError("unknown split: " + cfg.split);
    if (cfg.strict_disjoint && !cfg.split.starts_with("MFPT"))
        throw ConfigError("strict_disjoint applies to the MFPT split only");
    if (cfg.backend_params.nearest_neighbor && cfg.backend != BackendKind::EUCLIDEAN &&
        cfg.backend != BackendKind::COSINE)
        throw ConfigError("nearest_neighbor applies to EUCLIDEAN and COSINE back-ends only");
    return cfg;
}

namespace {

json yaml_node_to_json(const YAML::Node& node) {
    switch (node.Type()) {
        case YAML::NodeType::Null:
        case YAML::NodeType::Undefined: return nullptr;
        case YAML::NodeType::Sequence: {
            json arr = json::array();
            for (const auto& item : node) arr.push_back(yaml_node_to_json(item));
            return arr;
        }
        case YAML::NodeType::Map: {
            json obj = json::object();
            for (const auto& kv : node) obj[kv.first.as<std::string>()] = yaml_node_to_json(kv.second);
            return obj;
        }
        case YAML::NodeType::Scalar: break;
    }
    const std::string s = node.Scalar();
    if (node.Tag() == "!") return s;  // quoted
    if (s == "true" || s == "True") return true;
    if (s == "false" || s == "False") return false;
    if (s == "null" || s == "~") return nullptr;
    {
        std::int64_t i = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), i);
        if (ec == std::errc{} && p == s.data() + s.size()) {
            if (i >= 0) return static_cast<std::uint64_t>(i);
            return i;
        }
    }
    {
        double d = 0.0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), d);
        if (ec == std::errc{} && p == s.data() + s.size()) return d;
    }
    return s;
}

}  // namespace

json yaml_to_json(const std::string& text) {
    try {
        return yaml_node_to_json(YAML::Load(text));
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("malformed YAML: ") + e.what());
    }
}

ExperimentConfig load_experiment_config(const fs::path& yaml_path) {
    std::ifstream in(yaml_path);
    if (!in) throw ConfigError("cannot read config file: " + yaml_path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return experiment_config_from_json(yaml_to_json(ss.str()));
}

namespace {

std::string sha256_hex(std::string_view text) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    std::string out;
    for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
    return out;
}

json digest_body(const ExperimentConfig& cfg) {
    json j = to_json(cfg);
    j.erase("output_dir");
    j.erase("data_dir");
    j["code_version"] = kCodeVersion;
    return j;
}

// Everything that shapes the trained network, without the back-end.
std::string training_digest(const ExperimentConfig& cfg) {
    json j = digest_body(cfg);
    j.erase("backend");
    j.erase("backend_params");
    return sha256_hex(j.dump());
}

}  // namespace

std::string config_digest(const ExperimentConfig& cfg) { return sha256_hex(digest_body(cfg).dump()); }

// ------------------------------------------------------------------- record

std::size_t ResultRecord::correct() const {
    std::size_t m = 0;
    for (std::size_t i = 0; i < confusion.size(); ++i) m += confusion[i][i];
    return m;
}

std::size_t ResultRecord::total() const {
    std::size_t n = 0;
    for (const auto& row : confusion)
        for (auto v : row) n += v;
    return n;
}

double recomputed_accuracy(const ResultRecord& r) {
    if (!r.sub_results.empty()) {
        double sum = 0.0;
        for (const auto& s : r.sub_results) sum += recomputed_accuracy(s);
        return sum / static_cast<double>(r.sub_results.size());
    }
    const auto n = r.total();
    if (n == 0) throw ShapeError("record has an empty confusion matrix");
    return 100.0 * static_cast<double>(r.correct()) / static_cast<double>(n);
}

std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const int> predicted, std::span<const int> truth,
                                                       std::size_t class_count) {
    if (predicted.size() != truth.size()) throw ShapeError("confusion_matrix: label lists differ in length");
    std::vector<std::vector<std::size_t>> m(class_count, std::vector<std::size_t>(class_count, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto t = static_cast<std::size_t>(truth[i]);
        const auto p = static_cast<std::size_t>(predicted[i]);
        if (truth[i] < 0 || predicted[i] < 0 || t >= class_count || p >= class_count)
            throw ShapeError("confusion_matrix: label out of range");
        ++m[t][p];
    }
    return m;
}

json to_json(const ResultRecord& r) {
    json j = {{"format", "mbfd-record-1"},
              {"digest", r.digest},
              {"split", r.split},
              {"pipeline", std::string(to_string(r.pipeline))},
              {"normalization", std::string(preprocess::to_string(r.normalization))},
              {"backend", std::string(to_string(r.backend))},
              {"seed", r.seed},
              {"accuracy", r.accuracy},
              {"correct", r.correct()},
              {"total", r.total()},
              {"confusion", r.confusion}};
    if (r.domain) j["domain"] = std::string(features::to_string(*r.domain));
    if (!r.sub_results.empty()) {
        json subs = json::array();
        for (const auto& s : r.sub_results) subs.push_back(to_json(s));
        j["sub_results"] = std::move(subs);
    }
    return j;
}

ResultRecord result_from_json(const json& j) {
    try {
        if (j.value("format", std::string{}) != "mbfd-record-1") throw FormatError("not an mbfd result record");
        ResultRecord r;
        r.digest = j.at("digest").get<std::string>();
        r.split = j.at("split").get<std::string>();
        r.pipeline = parse_pipeline(j.at("pipeline").get<std::string>());
        r.normalization = preprocess::parse_method(j.at("normalization").get<std::string>());
        r.backend = parse_backend(j.at("backend").get<std::string>());
        r.seed = j.at("seed").get<std::uint64_t>();
        r.accuracy = j.at("accuracy").get<double>();
        r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
        if (j.contains("domain")) r.domain = features::parse_domain(j.at("domain").get<std::string>());
        if (j.contains("sub_results"))
            for (const auto& s : j.at("sub_results")) r.sub_results.push_back(result_from_json(s));
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed result record: ") + e.what());
    }
}

std::string record_csv(const ResultRecord& r) {
    std::string out = "digest,split,pipeline,domain,normalization,backend,seed,accuracy,correct,total\n";
    auto line = [&](const ResultRecord& x) {
        out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", x.digest, x.split, to_string(x.pipeline),
                           x.domain ? features::to_string(*x.domain) : std::string_view{},
                           preprocess::to_string(x.normalization), to_string(x.backend), x.seed, x.accuracy,
                           x.correct(), x.total());
    };
    line(r);
    for (const auto& s : r.sub_results) line(s);
    return out;
}

// --------------------------------------------------------------------- data

RecordingLoader directory_loader(const fs::path& root) {
    return [root](DatasetKind kind, const std::string& id) {
        const fs::path base = root / std::string(to_string(kind));
        std::vector<VibrationRecording> out;
        for (const char* ext : {".mat", ".f32"}) {
            const fs::path file = base / (id + ext);
            if (fs::is_regular_file(file)) {
                out.push_back(load_recording(file, kind, id));
                return out;
            }
        }
        const fs::path dir = base / id;
        if (!fs::is_directory(dir)) throw MissingDataError("no recording for " + id + " under " + base.string());
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file() && (e.path().extension() == ".mat" || e.path().extension() == ".f32"))
                files.push_back(e.path());
        std::sort(files.begin(), files.end());
        if (files.empty()) throw MissingDataError("no recordings inside " + dir.string());
        for (const auto& f : files) out.push_back(load_recording(f, kind, id));
        return out;
    };
}

fs::path resolve_data_dir(const ExperimentConfig& cfg) {
    if (!cfg.data_dir.empty()) return cfg.data_dir;
    if (const char* env = std::getenv("MBFD_DATA_DIR"); env && *env) return env;
    throw MissingDataError("dataset root not configured; set MBFD_DATA_DIR or data_dir");
}

SplitSpec resolve_split(const ExperimentConfig& cfg) {
    if (cfg.split == "SYNTHETIC") return synthetic_split(cfg.synthetic);
    if (cfg.split == "PU-C2") throw ConfigError("PU-C2 expands to ten combinations; pick one of PU-C2-1..10");
    if (cfg.split == "MFPT" && cfg.strict_disjoint) return mfpt_split(true);
    return split_by_name(cfg.split);
}

SplitSamples load_split(const ExperimentConfig& cfg, const SplitSpec& spec) {
    RecordingLoader loader;
    if (spec.dataset == DatasetKind::SYNTHETIC) {
        loader = [&cfg](DatasetKind, const std::string& id) {
            return std::vector<VibrationRecording>{synthetic_recording(cfg.synthetic, id, cfg.seed)};
        };
    } else {
        loader = directory_loader(resolve_data_dir(cfg));
    }
    auto samples = materialize(spec, loader);
    if (samples.train.empty() || samples.test.empty())
        throw MissingDataError("split " + spec.name + " produced no train or no test samples");
    return samples;
}

// ------------------------------------------------------------------ running

namespace {

std::vector<int> labels_of(const std::vector<VibrationSample>& samples) {
    std::vector<int> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.label ? s.label->index : -1);
    return out;
}

std::size_t class_count_of(const SplitSpec& spec) {
    int top = -1;
    for (const auto& c : spec.classes) top = std::max(top, c.label.index);
    return static_cast<std::size_t>(top + 1);
}

// Rows cut to `length` values. Mixed sample rates (MFPT) give windows of
// different lengths; all are truncated to the shortest training window.
Matrix window_matrix(const std::vector<VibrationSample>& samples, std::size_t length) {
    Matrix m(samples.size(), length);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].length() < length)
            throw ShapeError(fmt::format("sample from {} has {} values, network expects {}",
                                         samples[i].origin.source_id, samples[i].length(), length));
        std::copy_n(samples[i].values.begin(), length, m.row(i).begin());
    }
    return m;
}

struct DlInputs {
    TrainingSet train;
    Matrix test_windows, test_features;
    json transforms;
};

DlInputs prepare_dl_inputs(const ExperimentConfig& cfg, Architecture arch, const SplitSpec& spec,
                           const SplitSamples& data) {
    DlInputs in;
    in.train.labels = labels_of(data.train);
    in.train.class_count = class_count_of(spec);
    in.transforms = json::object();
    if (uses_cnn(arch)) {
        std::size_t length = data.train.front().length();
        for (const auto& s : data.train) length = std::min(length, s.length());
        const auto raw_train = window_matrix(data.train, length);
        const auto t = preprocess::fit(cfg.normalization, raw_train);
        in.train.windows = preprocess::apply(t, raw_train);
        in.test_windows = preprocess::apply(t, window_matrix(data.test, length));
        in.transforms["windows"] = preprocess::to_json(t);
    }
    if (uses_mlp(arch)) {
        const auto raw_train = features::extract_matrix(data.train);
        const auto t = preprocess::fit(cfg.normalization, raw_train);
        in.train.features = preprocess::apply(t, raw_train);
        in.test_features = preprocess::apply(t, features::extract_matrix(data.test));
        in.transforms["features"] = preprocess::to_json(t);
    }
    return in;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Fingerprint of the normalized training inputs, so a checkpoint is only
// reused for the data it was trained on.
std::string training_set_digest(const TrainingSet& set) {
    std::string bytes;
    auto append = [&](const void* p, std::size_t n) { bytes.append(static_cast<const char*>(p), n); };
    for (const Matrix* m : {&set.windows, &set.features}) {
        const std::uint64_t shape[2] = {m->rows, m->cols};
        append(shape, sizeof shape);
        append(m->data.data(), m->data.size() * sizeof(double));
    }
    append(set.labels.data(), set.labels.size() * sizeof(int));
    return sha256_hex(bytes);
}

ModelState train_or_load_impl(const ExperimentConfig& cfg, const TrainingSet& set, const fs::path& dir) {
    const auto arch = *architecture_of(cfg.pipeline);
    const auto digest = training_digest(cfg) + " " + training_set_digest(set);
    if (fs::exists(dir / "checkpoint.json") && fs::exists(dir / "digest.txt") &&
        read_text(dir / "digest.txt") == digest + "\n") {
        spdlog::info("reusing checkpoint in {}", dir.string());
        return load_checkpoint(dir);
    }
    auto result = train(arch, set, cfg.train, cfg.loss, cfg.backbone);
    save_checkpoint(result.state, dir);
    result.log.write(dir);
    write_text(dir / "digest.txt", digest + "\n");
    return std::move(result.state);
}

ResultRecord run_single(const ExperimentConfig& cfg, const SplitSpec& spec, const fs::path& dir) {
    spdlog::info("{} on {} ({} / {})", to_string(cfg.pipeline), spec.name, preprocess::to_string(cfg.normalization),
                 to_string(cfg.backend));
    const auto data = load_split(cfg, spec);
    const auto truth_train = labels_of(data.train);
    const auto truth_test = labels_of(data.test);
    const auto classes = class_count_of(spec);

    Matrix x_train, x_test;
    json transforms;
    if (cfg.pipeline == Pipeline::ML_BASELINE) {
        const auto f_train = features::select_domain(features::extract_matrix(data.train), cfg.domain);
        const auto f_test = features::select_domain(features::extract_matrix(data.test), cfg.domain);
        const auto t = preprocess::fit(cfg.normalization, f_train);
        x_train = preprocess::apply(t, f_train);
        x_test = preprocess::apply(t, f_test);
        transforms["features"] = preprocess::to_json(t);
    } else {
        auto in = prepare_dl_inputs(cfg, *architecture_of(cfg.pipeline), spec, data);
        const auto state = train_or_load_impl(cfg, in.train, dir / "model");
        x_train = extract_features(state, in.train.windows, in.train.features);
        x_test = extract_features(state, in.test_windows, in.test_features);
        transforms = std::move(in.transforms);
    }

    const auto model = fit_backend(cfg.backend, x_train, truth_train, cfg.backend_params);
    const auto predicted = predict(model, x_test);
    save_backend(model, dir / "backend");
    write_text(dir / "transforms.json", transforms.dump(2) + "\n");

    std::string preds = "source_id,start_index,truth,predicted\n";
    for (std::size_t i = 0; i < data.test.size(); ++i)
        preds += fmt::format("{},{},{},{}\n", data.test[i].origin.source_id, data.test[i].origin.start_index,
                             truth_test[i], predicted[i]);
    write_text(dir / "predictions.csv", preds);

    ResultRecord r;
    ExperimentConfig single = cfg;
    single.split = spec.name;
    r.digest = config_digest(single);
    r.split = spec.name;
    r.pipeline = cfg.pipeline;
    if (cfg.pipeline == Pipeline::ML_BASELINE) r.domain = cfg.domain;
    r.normalization = cfg.normalization;
    r.backend = cfg.backend;
    r.seed = cfg.seed;
    r.accuracy = accuracy(predicted, truth_test);
    r.confusion = confusion_matrix(predicted, truth_test, classes);
    spdlog::info("{}: accuracy {:.2f}%", spec.name, r.accuracy);
    return r;
}

}  // namespace

ModelState train_or_load(const ExperimentConfig& cfg, const SplitSpec& spec, const SplitSamples& data,
                         const fs::path& dir) {
    const auto arch = architecture_of(cfg.pipeline);
    if (!arch) throw ConfigError("ML_BASELINE has no network to train");
    const auto in = prepare_dl_inputs(cfg, *arch, spec, data);
    return train_or_load_impl(cfg, in.train, dir);
}

ResultRecord run_experiment(const ExperimentConfig& cfg, bool reuse) {
    const auto digest = config_digest(cfg);
    const fs::path record_path = cfg.output_dir / "record.json";
    if (reuse && fs::exists(record_path)) {
        try {
            auto cached = result_from_json(json::parse(read_text(record_path)));
            if (cached.digest == digest) {
                spdlog::info("reusing {}", record_path.string());
                return cached;
            }
        } catch (const std::exception& e) {
            spdlog::warn("ignoring unreadable {}: {}", record_path.string(), e.what());
        }
    }

    const auto start = std::chrono::steady_clock::now();
    ResultRecord r;
    if (cfg.split == "PU-C2") {
        r.digest = digest;
        r.split = cfg.split;
        r.pipeline = cfg.pipeline;
        if (cfg.pipeline == Pipeline::ML_BASELINE) r.domain = cfg.domain;
        r.normalization = cfg.normalization;
        r.backend = cfg.backend;
        r.seed = cfg.seed;
        for (const auto& spec : pu_c2_combinations())
            r.sub_results.push_back(run_single(cfg, spec, cfg.output_dir / spec.name));
        for (const auto& s : r.sub_results) {
            if (r.confusion.empty()) r.confusion = s.confusion;
            else
                for (std::size_t i = 0; i < r.confusion.size(); ++i)
                    for (std::size_t k = 0; k < r.confusion[i].size(); ++k) r.confusion[i][k] += s.confusion[i][k];
        }
        r.accuracy = recomputed_accuracy(r);
    } else {
        const auto spec = resolve_split(cfg);
        r = run_single(cfg, spec, cfg.output_dir);
        r.digest = digest;
        r.split = spec.name;
    }
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    write_text(record_path, to_json(r).dump(2) + "\n");
    write_text(cfg.output_dir / "record.csv", record_csv(r));
    write_text(cfg.output_dir / "timing.json", json{{"wall_seconds", r.wall_seconds}}.dump(2) + "\n");
    write_text(cfg.output_dir / "config.json", to_json(cfg).dump(2) + "\n");
    return r;
}

// ------------------------------------------------------------------- tables

namespace {

constexpr BackendKind kTableBackends[] = {BackendKind::SVM, BackendKind::RF, BackendKind::KNN, BackendKind::EUCLIDEAN,
                                          BackendKind::COSINE};

std::string backend_label(BackendKind k) {
    switch (k) {
        case BackendKind::SVM: return "SVM";
        case BackendKind::KNN: return "kNN";
        case BackendKind::RF: return "RF";
        case BackendKind::EUCLIDEAN: return "Euclidean";
        case BackendKind::COSINE: return "Cosine";
    }
    return "?";
}

std::string domain_label(features::Domain d) {
    switch (d) {
        case features::Domain::Time: return "Time";
        case features::Domain::Frequency: return "Frequency";
        case features::Domain::Both: return "Time & Frequency";
    }
    return "?";
}

std::vector<std::string> method_labels() {
    std::vector<std::string> out;
    for (auto m : preprocess::kAllMethods) out.emplace_back(preprocess::to_string(m));
    return out;
}

// Later records overwrite earlier ones with the same key.
template <class RowKey, class ColKey>
void fill(Table& t, std::span<const ResultRecord> records, auto&& keep, RowKey row_of, ColKey col_of) {
    t.cells.assign(t.rows.size(), std::vector<std::optional<double>>(t.columns.size()));
    for (const auto& r : records) {
        if (!keep(r)) continue;
        const auto row = row_of(r);
        const auto col = col_of(r);
        if (row && col) t.cells[*row][*col] = recomputed_accuracy(r);
    }
}

template <class T>
std::optional<std::size_t> position(std::span<const T> values, const T& v) {
    const auto it = std::find(values.begin(), values.end(), v);
    if (it == values.end()) return std::nullopt;
    return static_cast<std::size_t>(it - values.begin());
}

void drop_empty_rows(Table& t) {
    Table out = t;
    out.rows.clear();
    out.cells.clear();
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        if (std::none_of(t.cells[i].begin(), t.cells[i].end(), [](const auto& c) { return c.has_value(); })) continue;
        out.rows.push_back(t.rows[i]);
        out.cells.push_back(t.cells[i]);
    }
    t = std::move(out);
}

std::optional<std::size_t> method_col(const ResultRecord& r) {
    return position<preprocess::Method>(preprocess::kAllMethods, r.normalization);
}

std::optional<std::size_t> backend_row(const ResultRecord& r) {
    return position<BackendKind>(kTableBackends, r.backend);
}

}  // namespace

std::vector<std::string> table_layouts() { return {"res_01", "res_02", "res_03", "res_04", "res_05", "mfpt"}; }

Table emit_table(std::span<const ResultRecord> records, std::string_view layout) {
    Table t;
    t.id = std::string(layout);
    if (layout == "res_01") {
        t.title = "ML baselines on PU-C1";
        constexpr features::Domain domains[] = {features::Domain::Time, features::Domain::Frequency,
                                                features::Domain::Both};
        constexpr BackendKind backends[] = {BackendKind::SVM, BackendKind::KNN, BackendKind::RF};
        for (auto d : domains)
            for (auto b : backends) t.columns.push_back(domain_label(d) + " " + backend_label(b));
        t.rows = method_labels();
        fill(
            t, records, [](const ResultRecord& r) { return r.split == "PU-C1" && r.pipeline == Pipeline::ML_BASELINE; },
            method_col,
            [&](const ResultRecord& r) -> std::optional<std::size_t> {
                const auto d = position<features::Domain>(domains, r.domain.value_or(features::Domain::Both));
                const auto b = position<BackendKind>(backends, r.backend);
                if (!d || !b) return std::nullopt;
                return *d * std::size(backends) + *b;
            });
    } else if (layout == "res_02") {
        t.title = "SDLM on PU-C1";
        t.columns = method_labels();
        for (auto b : kTableBackends) t.rows.push_back(backend_label(b));
        fill(
            t, records, [](const ResultRecord& r) { return r.split == "PU-C1" && r.pipeline == Pipeline::SDLM; },
            backend_row, method_col);
    } else if (layout == "res_03") {
        t.title = "Single deep models on PU-C1 with Normalizer";
        constexpr Pipeline models[] = {Pipeline::SDLM, Pipeline::S_SDLM, Pipeline::U_SDLM};
        t.columns = {"SDLM", "S-SDLM", "U-SDLM"};
        for (auto b : kTableBackends) t.rows.push_back(backend_label(b));
        fill(
            t, records,
            [](const ResultRecord& r) { return r.split == "PU-C1" && r.normalization == preprocess::Method::N; },
            backend_row, [&](const ResultRecord& r) { return position<Pipeline>(models, r.pipeline); });
    } else if (layout == "res_04") {
        t.title = "Robust-MBFD on PU-C2";
        t.columns = method_labels();
        for (auto b : kTableBackends) t.rows.push_back(backend_label(b));
        fill(
            t, records,
            [](const ResultRecord& r) { return r.split == "PU-C2" && r.pipeline == Pipeline::ROBUST_MBFD; },
            backend_row, method_col);
    } else if (layout == "res_05") {
        t.title = "Robust-MBFD on CWRU";
        t.columns = method_labels();
        const std::vector<std::string> splits = {"CWRU-C1", "CWRU-C2", "CWRU-C3", "CWRU-C4"};
        for (const auto& s : splits)
            for (auto b : kTableBackends) t.rows.push_back(s + " " + backend_label(b));
        fill(
            t, records, [](const ResultRecord& r) { return r.pipeline == Pipeline::ROBUST_MBFD; },
            [&](const ResultRecord& r) -> std::optional<std::size_t> {
                const auto s = position<std::string>(splits, r.split);
                const auto b = backend_row(r);
                if (!s || !b) return std::nullopt;
                return *s * std::size(kTableBackends) + *b;
            },
            method_col);
    } else if (layout == "mfpt") {
        t.title = "Robust-MBFD on MFPT";
        t.columns = method_labels();
        for (auto b : kTableBackends) t.rows.push_back(backend_label(b));
        fill(
            t, records,
            [](const ResultRecord& r) {
                return (r.split == "MFPT" || r.split == "MFPT-STRICT") && r.pipeline == Pipeline::ROBUST_MBFD;
            },
            backend_row, method_col);
    } else {
        throw ConfigError("unknown table layout: " + std::string(layout));
    }
    drop_empty_rows(t);
    return t;
}

namespace {

std::string cell_text(const std::optional<double>& v) { return v ? fmt::format("{:.2f}", *v) : "—"; }

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string render_csv(const Table& t) {
    std::string out;
    for (const auto& c : t.columns) out += "," + csv_field(c);
    out += "\n";
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        out += csv_field(t.rows[i]);
        for (const auto& v : t.cells[i]) out += "," + cell_text(v);
        out += "\n";
    }
    return out;
}

std::string render_markdown(const Table& t) {
    std::string out = "|";
    for (const auto& c : t.columns) out += " | " + c;
    out += " |\n|---";
    for (std::size_t i = 0; i < t.columns.size(); ++i) out += "|---:";
    out += "|\n";
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        out += "| " + t.rows[i];
        for (const auto& v : t.cells[i]) out += " | " + cell_text(v);
        out += " |\n";
    }
    return out;
}

}  // namespace mbfd
