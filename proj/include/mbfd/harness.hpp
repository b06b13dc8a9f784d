#pragma once

// Experiment runner, accuracy metric and result tables.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mbfd/backbones.hpp"
#include "mbfd/backend.hpp"
#include "mbfd/features.hpp"
#include "mbfd/losses.hpp"
#include "mbfd/preprocess.hpp"
#include "mbfd/protocols.hpp"
#include "mbfd/trainer.hpp"

namespace mbfd {

inline constexpr std::string_view kCodeVersion = "mbfd-0.1.0";

// 100 * matches / size. Throws ShapeError on empty or mismatched input.
double accuracy(std::span<const int> predicted, std::span<const int> truth);

enum class Pipeline { ML_BASELINE, SDLM, S_SDLM, U_SDLM, ROBUST_MBFD };

std::string_view to_string(Pipeline p);
Pipeline parse_pipeline(std::string_view name);
std::optional<Architecture> architecture_of(Pipeline p);

// Seeded tones plus white noise; class c has its own pair of frequencies.
struct SyntheticConfig {
    std::size_t classes = 3;
    double sample_rate = 8000.0;
    double duration_s = 1.0;
    double window_ms = 64.0;
    std::size_t train_recordings = 4;  // per class
    std::size_t test_recordings = 2;   // per class
    double noise = 0.5;

    friend bool operator==(const SyntheticConfig&, const SyntheticConfig&) = default;
};

// Source ids are "S<class>-train<k>" and "S<class>-test<k>".
SplitSpec synthetic_split(const SyntheticConfig& cfg);
VibrationRecording synthetic_recording(const SyntheticConfig& cfg, const std::string& source_id, std::uint64_t seed);

struct ExperimentConfig {
    std::string split = "SYNTHETIC";  // a protocol name, "PU-C2" for all ten combinations, or SYNTHETIC
    Pipeline pipeline = Pipeline::ML_BASELINE;
    features::Domain domain = features::Domain::Both;
    preprocess::Method normalization = preprocess::Method::SS;
    BackendKind backend = BackendKind::SVM;
    BackendParams backend_params;
    losses::LossConfig loss;
    TrainConfig train;
    BackboneConfig backbone;
    SyntheticConfig synthetic;
    std::uint64_t seed = 0;
    bool strict_disjoint = false;
    std::filesystem::path output_dir = "results";
    std::filesystem::path data_dir;  // empty: $MBFD_DATA_DIR
};

// Accepts the YAML/JSON object produced by to_json. Unknown keys and
// combinations without meaning for the pipeline raise ConfigError.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& yaml_path);
nlohmann::json to_json(const ExperimentConfig& cfg);
nlohmann::json yaml_to_json(const std::string& text);

// SHA-256 over the canonical JSON of everything that affects the result plus
// kCodeVersion. Output and data directories are excluded.
std::string config_digest(const ExperimentConfig& cfg);

struct ResultRecord {
    std::string digest;
    std::string split;
    Pipeline pipeline = Pipeline::ML_BASELINE;
    std::optional<features::Domain> domain;  // ML_BASELINE only
    preprocess::Method normalization = preprocess::Method::SS;
    BackendKind backend = BackendKind::SVM;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    std::vector<std::vector<std::size_t>> confusion;  // [truth][predicted]
    std::vector<ResultRecord> sub_results;            // PU-C2 combinations
    double wall_seconds = 0.0;                        // kept out of record.json and record.csv

    std::size_t correct() const;
    std::size_t total() const;
};

// 100 * trace / total, or the mean of the sub-results when present.
double recomputed_accuracy(const ResultRecord& r);

std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const int> predicted, std::span<const int> truth,
                                                       std::size_t class_count);

nlohmann::json to_json(const ResultRecord& r);
ResultRecord result_from_json(const nlohmann::json& j);
std::string record_csv(const ResultRecord& r);

// Reads <dir>/<DATASET>/<id>.mat, <id>.f32 or every container inside <id>/.
RecordingLoader directory_loader(const std::filesystem::path& root);
std::filesystem::path resolve_data_dir(const ExperimentConfig& cfg);

// Materialized samples for the config's split (or one PU-C2 combination).
SplitSamples load_split(const ExperimentConfig& cfg, const SplitSpec& spec);
SplitSpec resolve_split(const ExperimentConfig& cfg);

// Train-set model for DL pipelines. Reuses <dir>/checkpoint.json when its
// stored digest matches, otherwise trains and writes checkpoint and loss logs.
ModelState train_or_load(const ExperimentConfig& cfg, const SplitSpec& spec, const SplitSamples& data,
                         const std::filesystem::path& dir);

// Runs the full pipeline and writes record.json, record.csv and timing.json
// to cfg.output_dir. A record.json with the same digest is returned as is
// unless `reuse` is false.
ResultRecord run_experiment(const ExperimentConfig& cfg, bool reuse = true);

struct Table {
    std::string id, title;
    std::vector<std::string> columns;
    std::vector<std::string> rows;
    std::vector<std::vector<std::optional<double>>> cells;
};

// "res_01", "res_02", "res_03", "res_04", "res_05", "mfpt".
Table emit_table(std::span<const ResultRecord> records, std::string_view layout);
std::vector<std::string> table_layouts();
std::string render_csv(const Table& t);
std::string render_markdown(const Table& t);

}  // namespace mbfd
