#pragma once

// Train/test split protocols as plain data.

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mbfd/dataio.hpp"

namespace mbfd {

// WHOLE_RECORDING: each recording is one sample, cut to kPuSampleLength.
// TIME_80_20_THEN_400MS: the first 80% of a file feeds training and the rest
//   testing; each part is cut into non-overlapping windows.
// SEGMENT_400MS: non-overlapping windows over the whole file.
// SEGMENT_400MS_50PCT: windows with 50% overlap over the whole file.
// Window length is SplitSpec::window_ms (400 for every named protocol).
enum class SegmentationRule { WHOLE_RECORDING, TIME_80_20_THEN_400MS, SEGMENT_400MS, SEGMENT_400MS_50PCT };

std::string_view to_string(SegmentationRule r);
SegmentationRule parse_segmentation_rule(std::string_view name);

struct SplitClass {
    ClassLabel label;
    std::vector<std::string> train, test;

    friend bool operator==(const SplitClass&, const SplitClass&) = default;
};

struct SplitSpec {
    std::string name;
    DatasetKind dataset = DatasetKind::SYNTHETIC;
    SegmentationRule rule = SegmentationRule::SEGMENT_400MS;
    double window_ms = 400.0;
    std::vector<SplitClass> classes;
    std::vector<std::string> warnings;

    std::vector<std::string> train_sources() const;
    std::vector<std::string> test_sources() const;

    friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

SplitSpec pu_c1();
// choose(5, 3) train subsets of every class pool in lexicographic order, with
// the same positions taken in every class.
std::vector<SplitSpec> pu_c2_combinations();
SplitSpec cwru_split(int which);
// As printed, N2 is in both sets. strict_disjoint trains on N1 alone.
SplitSpec mfpt_split(bool strict_disjoint = false);

// "PU-C1", "PU-C2-1".."PU-C2-10", "CWRU-C1".."CWRU-C4", "MFPT", "MFPT-STRICT".
SplitSpec split_by_name(std::string_view name);
std::vector<std::string> split_names();

// Every source id the protocols may reference for a dataset.
std::vector<std::string> dataset_manifest(DatasetKind kind);

// Throws ConfigError for ids outside the manifest or ids shared by two
// classes. Returns ids found in both train and test lists; time-split
// protocols are exempt because they divide each file in time.
std::vector<std::string> check_split(const SplitSpec& spec, const std::vector<std::string>& manifest);

nlohmann::json to_json(const SplitSpec& spec);
SplitSpec split_from_json(const nlohmann::json& j);

struct SplitSamples {
    std::vector<VibrationSample> train, test;
};

// Returns every recording stored under one source id (PU bearings hold many).
using RecordingLoader = std::function<std::vector<VibrationRecording>(DatasetKind, const std::string&)>;

// Loads each listed source, labels it with its class and applies the rule.
SplitSamples materialize(const SplitSpec& spec, const RecordingLoader& load);

}  // namespace mbfd
