#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mbfd {

enum class DatasetKind { PU, CWRU, MFPT, SYNTHETIC };

std::string_view to_string(DatasetKind kind);
// Accepts the enum spelling, case-insensitively. Throws ConfigError otherwise.
DatasetKind parse_dataset(std::string_view name);

struct ClassLabel {
    int index = 0;
    std::string name;
    friend bool operator==(const ClassLabel&, const ClassLabel&) = default;
};

struct VibrationRecording {
    std::vector<double> samples;
    double sample_rate = 0.0;
    std::string source_id;
    DatasetKind dataset = DatasetKind::SYNTHETIC;
    std::optional<ClassLabel> label;

    std::size_t length() const { return samples.size(); }
};

struct SampleOrigin {
    std::string source_id;
    std::size_t start_index = 0;
};

struct VibrationSample {
    std::vector<double> values;
    double sample_rate = 0.0;
    std::optional<ClassLabel> label;
    SampleOrigin origin;

    std::size_t length() const { return values.size(); }
};

// Where a dataset adapter finds the vibration channel inside a MAT-file.
//
// channel_path is a dot-separated path through the variable tree:
//   "bearing.gs"                 field gs of top-level variable bearing
//   "~X\\d+_DE_time"              top-level variable matching a regex
//   "*.Y[Name=vibration_1].Data"  any top-level variable, then the element of
//                                 struct array Y whose char field Name equals
//                                 vibration_1, then its Data field
// sample_rate_path follows the same syntax and must resolve to a scalar; when
// empty (or unresolvable and a fixed rate is given) fixed_sample_rate is used.
struct AdapterConfig {
    std::string channel_path;
    std::string sample_rate_path;
    std::optional<double> fixed_sample_rate;
};

// The per-dataset defaults: CWRU drive-end accelerometer at 12 kHz, MFPT
// bearing.gs with rate bearing.sr, PU vibration_1 at 64 kHz.
AdapterConfig default_adapter(DatasetKind kind);
// Reads {"channel_path": ..., "sample_rate_path": ..., "fixed_sample_rate": ...}.
AdapterConfig load_adapter_config(const std::filesystem::path& json_path);

// Paderborn samples are whole recordings cut to this many points.
inline constexpr std::size_t kPuSampleLength = 255'900;

// Loads one recording. A ".mat" path goes through the dataset adapter; any
// other path is read as a canonical container (".f32" payload + ".json"
// sidecar, either may be named).
VibrationRecording load_recording(const std::filesystem::path& path, DatasetKind dataset,
                                  const std::string& source_id);
VibrationRecording load_recording(const std::filesystem::path& path, DatasetKind dataset,
                                  const std::string& source_id, const AdapterConfig& adapter);

// Canonical container: <base>.f32 holds little-endian float32 amplitudes and
// <base>.json holds {"sample_rate", "source_id", "dataset", "label": {"index", "name"} or null}.
void save_canonical(const VibrationRecording& rec, const std::filesystem::path& base);
VibrationRecording load_canonical(const std::filesystem::path& path);

std::size_t window_length(double window_ms, double sample_rate);
std::size_t hop_length(std::size_t window, double overlap_fraction);
// floor((L - w) / hop) + 1, or 0 when L < w.
std::size_t segment_count(std::size_t length, std::size_t window, std::size_t hop);

std::vector<VibrationSample> segment(const VibrationRecording& rec, double window_ms, double overlap_fraction);

std::pair<VibrationRecording, VibrationRecording> time_split(const VibrationRecording& rec, double train_fraction);

// The whole recording as one sample, truncated to max_length from the start.
// Throws when the recording is shorter than max_length.
VibrationSample whole_recording_sample(const VibrationRecording& rec, std::size_t max_length);

}  // namespace mbfd
