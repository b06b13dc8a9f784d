#include "mbfd/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <regex>

#include <nlohmann/json.hpp>

#include "mbfd/error.hpp"
#include "mbfd/matfile.hpp"

namespace mbfd {
namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::PU: return "PU";
        case DatasetKind::CWRU: return "CWRU";
        case DatasetKind::MFPT: return "MFPT";
        case DatasetKind::SYNTHETIC: return "SYNTHETIC";
    }
    return "?";
}

DatasetKind parse_dataset(std::string_view name) {
    std::string upper(name);
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
    for (auto k : {DatasetKind::PU, DatasetKind::CWRU, DatasetKind::MFPT, DatasetKind::SYNTHETIC})
        if (upper == to_string(k)) return k;
    throw ConfigError("unknown dataset '" + std::string(name) + "'");
}

AdapterConfig default_adapter(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::CWRU: return {"~X\\d+_DE_time", "", 12000.0};
        case DatasetKind::MFPT: return {"bearing.gs", "bearing.sr", std::nullopt};
        case DatasetKind::PU: return {"*.Y[Name=vibration_1].Data", "", 64000.0};
        case DatasetKind::SYNTHETIC: break;
    }
    throw ConfigError("no MAT-file adapter for dataset " + std::string(to_string(kind)));
}

AdapterConfig load_adapter_config(const fs::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw MissingDataError("adapter config not found: " + json_path.string());
    try {
        const json j = json::parse(in);
        AdapterConfig cfg;
        cfg.channel_path = j.at("channel_path").get<std::string>();
        cfg.sample_rate_path = j.value("sample_rate_path", std::string{});
        if (j.contains("fixed_sample_rate") && !j["fixed_sample_rate"].is_null())
            cfg.fixed_sample_rate = j["fixed_sample_rate"].get<double>();
        return cfg;
    } catch (const json::exception& e) {
        throw ConfigError("bad adapter config " + json_path.string() + ": " + e.what());
    }
}

namespace {

struct PathStep {
    std::string name;  // "*", "~regex" or a literal
    std::string filter_field;
    std::string filter_value;
};

std::vector<PathStep> parse_path(const std::string& path) {
    std::vector<PathStep> steps;
    std::string cur;
    int depth = 0;
    auto flush = [&] {
        if (cur.empty()) throw ConfigError("empty step in variable path '" + path + "'");
        PathStep step;
        const auto lb = cur.find('[');
        step.name = cur.substr(0, lb);
        if (lb != std::string::npos) {
            const auto eq = cur.find('=', lb);
            const auto rb = cur.rfind(']');
            if (eq == std::string::npos || rb == std::string::npos || rb < eq)
                throw ConfigError("bad filter in variable path '" + path + "'");
            step.filter_field = cur.substr(lb + 1, eq - lb - 1);
            step.filter_value = cur.substr(eq + 1, rb - eq - 1);
        }
        steps.push_back(std::move(step));
        cur.clear();
    };
    for (char c : path) {
        if (c == '[') ++depth;
        if (c == ']') --depth;
        if (c == '.' && depth == 0)
            flush();
        else
            cur.push_back(c);
    }
    flush();
    return steps;
}

bool name_matches(const std::string& pattern, const std::string& name) {
    if (pattern == "*") return true;
    if (!pattern.empty() && pattern[0] == '~') return std::regex_match(name, std::regex(pattern.substr(1)));
    return pattern == name;
}

struct Node {
    const mat::Array* array;
    std::size_t element;
};

// Applies the optional [Field=value] filter; returns false when nothing matches.
bool apply_filter(const PathStep& step, const mat::Array& a, Node& out) {
    if (step.filter_field.empty()) {
        out = {&a, 0};
        return true;
    }
    for (std::size_t e = 0; e < a.numel(); ++e) {
        const mat::Array* f = a.field(step.filter_field, e);
        if (f && f->cls == mat::ArrayClass::Char && f->text == step.filter_value) {
            out = {&a, e};
            return true;
        }
    }
    return false;
}

const mat::Array* resolve_from(const Node& node, const std::vector<PathStep>& steps, std::size_t i) {
    if (i == steps.size()) return node.array->is_numeric() || steps.empty() ? node.array : nullptr;
    const auto& step = steps[i];
    const mat::Array& a = *node.array;
    if (a.cls != mat::ArrayClass::Struct) return nullptr;
    for (std::size_t f = 0; f < a.fields.size(); ++f) {
        if (!name_matches(step.name, a.fields[f])) continue;
        const mat::Array* member = a.field(a.fields[f], node.element);
        Node next{};
        if (member && apply_filter(step, *member, next))
            if (const mat::Array* hit = resolve_from(next, steps, i + 1)) return hit;
    }
    return nullptr;
}

const mat::Array* resolve(const std::vector<mat::Array>& vars, const std::string& path) {
    const auto steps = parse_path(path);
    for (const auto& v : vars) {
        if (!name_matches(steps[0].name, v.name)) continue;
        Node node{};
        if (!apply_filter(steps[0], v, node)) continue;
        if (const mat::Array* hit = resolve_from(node, steps, 1)) return hit;
    }
    return nullptr;
}

void require_finite(const VibrationRecording& rec) {
    for (std::size_t i = 0; i < rec.samples.size(); ++i)
        if (!std::isfinite(rec.samples[i]))
            throw NumericError("recording '" + rec.source_id + "' has a non-finite value at index " +
                               std::to_string(i));
}

VibrationRecording load_mat(const fs::path& path, DatasetKind dataset, const std::string& source_id,
                            const AdapterConfig& adapter) {
    const auto vars = mat::read_file(path);
    const mat::Array* channel = resolve(vars, adapter.channel_path);
    if (channel == nullptr || channel->real.empty())
        throw FormatError(path.string() + ": channel '" + adapter.channel_path + "' not found");
    VibrationRecording rec;
    rec.samples = channel->real;
    rec.source_id = source_id;
    rec.dataset = dataset;
    if (!adapter.sample_rate_path.empty()) {
        if (const mat::Array* rate = resolve(vars, adapter.sample_rate_path); rate && rate->real.size() == 1)
            rec.sample_rate = rate->real[0];
    }
    if (rec.sample_rate <= 0.0 && adapter.fixed_sample_rate) rec.sample_rate = *adapter.fixed_sample_rate;
    if (!(rec.sample_rate > 0.0)) throw FormatError(path.string() + ": sample rate unavailable");
    require_finite(rec);
    return rec;
}

fs::path strip_container_ext(const fs::path& p) {
    if (p.extension() == ".f32" || p.extension() == ".json") return fs::path(p).replace_extension();
    return p;
}

}  // namespace

VibrationRecording load_recording(const fs::path& path, DatasetKind dataset, const std::string& source_id) {
    if (path.extension() == ".mat") return load_mat(path, dataset, source_id, default_adapter(dataset));
    auto rec = load_canonical(path);
    if (!source_id.empty()) rec.source_id = source_id;
    rec.dataset = dataset;
    return rec;
}

VibrationRecording load_recording(const fs::path& path, DatasetKind dataset, const std::string& source_id,
                                  const AdapterConfig& adapter) {
    if (path.extension() == ".mat") return load_mat(path, dataset, source_id, adapter);
    return load_recording(path, dataset, source_id);
}

void save_canonical(const VibrationRecording& rec, const fs::path& base_in) {
    const fs::path base = strip_container_ext(base_in);
    if (base.has_parent_path()) fs::create_directories(base.parent_path());
    {
        std::ofstream out(fs::path(base).concat(".f32"), std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + base.string() + ".f32");
        for (double v : rec.samples) {
            const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
            const unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                        static_cast<unsigned char>(bits >> 16),
                                        static_cast<unsigned char>(bits >> 24)};
            out.write(reinterpret_cast<const char*>(b), 4);
        }
    }
    json meta;
    meta["sample_rate"] = rec.sample_rate;
    meta["source_id"] = rec.source_id;
    meta["dataset"] = std::string(to_string(rec.dataset));
    meta["label"] = rec.label ? json{{"index", rec.label->index}, {"name", rec.label->name}} : json(nullptr);
    std::ofstream out(fs::path(base).concat(".json"), std::ios::trunc);
    out << meta.dump(2) << '\n';
}

VibrationRecording load_canonical(const fs::path& path) {
    const fs::path base = strip_container_ext(path);
    const fs::path payload = fs::path(base).concat(".f32");
    const fs::path sidecar = fs::path(base).concat(".json");
    if (!fs::exists(payload)) throw MissingDataError("recording payload not found: " + payload.string());
    if (!fs::exists(sidecar)) throw MissingDataError("recording sidecar not found: " + sidecar.string());

    VibrationRecording rec;
    try {
        std::ifstream in(sidecar);
        const json meta = json::parse(in);
        rec.sample_rate = meta.at("sample_rate").get<double>();
        rec.source_id = meta.at("source_id").get<std::string>();
        rec.dataset = parse_dataset(meta.at("dataset").get<std::string>());
        if (meta.contains("label") && !meta["label"].is_null()) {
            const auto& l = meta["label"];
            rec.label = l.is_string() ? ClassLabel{0, l.get<std::string>()}
                                      : ClassLabel{l.at("index").get<int>(), l.at("name").get<std::string>()};
        }
    } catch (const json::exception& e) {
        throw FormatError("bad sidecar " + sidecar.string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw FormatError("bad sidecar " + sidecar.string() + ": " + e.what());
    }
    if (!(rec.sample_rate > 0.0)) throw FormatError(sidecar.string() + ": sample_rate must be positive");

    std::ifstream in(payload, std::ios::binary);
    const auto bytes = fs::file_size(payload);
    if (bytes % 4 != 0) throw FormatError(payload.string() + ": size is not a multiple of 4 bytes");
    if (bytes == 0) throw FormatError(payload.string() + ": empty recording");
    rec.samples.resize(bytes / 4);
    std::vector<unsigned char> raw(bytes);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw FormatError(payload.string() + ": short read");
    for (std::size_t i = 0; i < rec.samples.size(); ++i) {
        const std::uint32_t bits = std::uint32_t(raw[4 * i]) | std::uint32_t(raw[4 * i + 1]) << 8 |
                                   std::uint32_t(raw[4 * i + 2]) << 16 | std::uint32_t(raw[4 * i + 3]) << 24;
        rec.samples[i] = std::bit_cast<float>(bits);
    }
    require_finite(rec);
    return rec;
}

std::size_t window_length(double window_ms, double sample_rate) {
    if (!(window_ms > 0.0) || !(sample_rate > 0.0)) throw ConfigError("window and sample rate must be positive");
    return static_cast<std::size_t>(std::floor(window_ms / 1000.0 * sample_rate));
}

std::size_t hop_length(std::size_t window, double overlap_fraction) {
    if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) throw ConfigError("overlap must be in [0, 1)");
    return static_cast<std::size_t>(std::floor(static_cast<double>(window) * (1.0 - overlap_fraction)));
}

std::size_t segment_count(std::size_t length, std::size_t window, std::size_t hop) {
    if (window == 0 || hop == 0 || length < window) return 0;
    return (length - window) / hop + 1;
}

std::vector<VibrationSample> segment(const VibrationRecording& rec, double window_ms, double overlap_fraction) {
    const std::size_t w = window_length(window_ms, rec.sample_rate);
    if (w < 1) throw ConfigError("window shorter than one sample");
    const std::size_t hop = hop_length(w, overlap_fraction);
    if (hop == 0) throw ConfigError("segment hop is zero");
    if (rec.length() < w)
        throw ShapeError("recording '" + rec.source_id + "' (" + std::to_string(rec.length()) +
                         " samples) is shorter than one window of " + std::to_string(w));
    const std::size_t n = segment_count(rec.length(), w, hop);
    std::vector<VibrationSample> out;
    out.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        const std::size_t start = s * hop;
        VibrationSample sample;
        sample.values.assign(rec.samples.begin() + static_cast<std::ptrdiff_t>(start),
                             rec.samples.begin() + static_cast<std::ptrdiff_t>(start + w));
        sample.sample_rate = rec.sample_rate;
        sample.label = rec.label;
        sample.origin = {rec.source_id, start};
        out.push_back(std::move(sample));
    }
    return out;
}

std::pair<VibrationRecording, VibrationRecording> time_split(const VibrationRecording& rec, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must be in (0, 1)");
    const auto cut = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(rec.length())));
    if (cut == 0 || cut == rec.length())
        throw ShapeError("time split of '" + rec.source_id + "' leaves an empty part");
    VibrationRecording head = rec, tail = rec;
    head.samples.assign(rec.samples.begin(), rec.samples.begin() + static_cast<std::ptrdiff_t>(cut));
    tail.samples.assign(rec.samples.begin() + static_cast<std::ptrdiff_t>(cut), rec.samples.end());
    return {std::move(head), std::move(tail)};
}

VibrationSample whole_recording_sample(const VibrationRecording& rec, std::size_t max_length) {
    if (rec.length() < max_length)
        throw ShapeError("recording '" + rec.source_id + "' has " + std::to_string(rec.length()) +
                         " samples, need " + std::to_string(max_length));
    VibrationSample s;
    s.values.assign(rec.samples.begin(), rec.samples.begin() + static_cast<std::ptrdiff_t>(max_length));
    s.sample_rate = rec.sample_rate;
    s.label = rec.label;
    s.origin = {rec.source_id, 0};
    return s;
}

}  // namespace mbfd
