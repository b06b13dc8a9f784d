#include "mbfd/protocols.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <spdlog/spdlog.h>

#include "mbfd/error.hpp"

namespace mbfd {
namespace {

constexpr const char* kMfptOverlapWarning =
    "MFPT split reproduces the published table, which lists N2 in both the training and the test set";

SplitClass make_class(int index, std::string name, std::vector<std::string> train, std::vector<std::string> test) {
    return {{index, std::move(name)}, std::move(train), std::move(test)};
}

std::vector<std::string> with_suffixes(const std::vector<std::string>& stems, std::initializer_list<int> loads) {
    std::vector<std::string> out;
    for (const auto& s : stems)
        for (int l : loads) out.push_back(s + "_" + std::to_string(l));
    return out;
}

const std::vector<std::string>& cwru_inner() {
    static const std::vector<std::string> v{"IR007", "IR014", "IR021", "IR028"};
    return v;
}
const std::vector<std::string>& cwru_ball() {
    static const std::vector<std::string> v{"B007", "B014", "B021", "B028"};
    return v;
}
const std::vector<std::string>& cwru_outer() {
    static const std::vector<std::string> v{"OR007@6", "OR014@6", "OR021@6", "OR007@3",
                                            "OR021@3", "OR007@12", "OR021@12"};
    return v;
}

// One class per file, each file split in time.
SplitSpec per_file_classes(std::string name, const std::vector<std::string>& files) {
    SplitSpec s;
    s.name = std::move(name);
    s.dataset = DatasetKind::CWRU;
    s.rule = SegmentationRule::TIME_80_20_THEN_400MS;
    for (std::size_t i = 0; i < files.size(); ++i)
        s.classes.push_back(make_class(static_cast<int>(i), files[i], {files[i]}, {files[i]}));
    return s;
}

std::vector<std::string> mfpt_outer(std::initializer_list<int> numbers) {
    std::vector<std::string> out;
    for (int n : numbers) out.push_back("O" + std::to_string(n));
    return out;
}

// O_M1..O_M7 of the published table are files O4..O10.
std::string mfpt_om(int m) { return "O" + std::to_string(m + 3); }

}  // namespace

std::string_view to_string(SegmentationRule r) {
    switch (r) {
        case SegmentationRule::WHOLE_RECORDING: return "WHOLE_RECORDING";
        case SegmentationRule::TIME_80_20_THEN_400MS: return "TIME_80_20_THEN_400MS";
        case SegmentationRule::SEGMENT_400MS: return "SEGMENT_400MS";
        case SegmentationRule::SEGMENT_400MS_50PCT: return "SEGMENT_400MS_50PCT";
    }
    return "?";
}

SegmentationRule parse_segmentation_rule(std::string_view name) {
    for (auto r : {SegmentationRule::WHOLE_RECORDING, SegmentationRule::TIME_80_20_THEN_400MS,
                   SegmentationRule::SEGMENT_400MS, SegmentationRule::SEGMENT_400MS_50PCT})
        if (name == to_string(r)) return r;
    throw ConfigError("unknown segmentation rule '" + std::string(name) + "'");
}

std::vector<std::string> SplitSpec::train_sources() const {
    std::vector<std::string> out;
    for (const auto& c : classes) out.insert(out.end(), c.train.begin(), c.train.end());
    return out;
}

std::vector<std::string> SplitSpec::test_sources() const {
    std::vector<std::string> out;
    for (const auto& c : classes) out.insert(out.end(), c.test.begin(), c.test.end());
    return out;
}

SplitSpec pu_c1() {
    SplitSpec s;
    s.name = "PU-C1";
    s.dataset = DatasetKind::PU;
    s.rule = SegmentationRule::WHOLE_RECORDING;
    s.classes = {make_class(0, "Healthy", {"K002"}, {"K001"}),
                 make_class(1, "OR Damage", {"KA01", "KA05", "KA07"}, {"KA22", "KA04", "KA15", "KA30", "KA16"}),
                 make_class(2, "IR Damage", {"KI01", "KI05", "KI07"}, {"KI14", "KI21", "KI17", "KI18", "KI16"})};
    return s;
}

std::vector<SplitSpec> pu_c2_combinations() {
    const std::vector<std::pair<std::string, std::vector<std::string>>> pools = {
        {"Healthy", {"K001", "K002", "K003", "K004", "K005"}},
        {"OR Damage", {"KA04", "KA15", "KA16", "KA22", "KA30"}},
        {"IR Damage", {"KI04", "KI14", "KI16", "KI18", "KI21"}}};
    std::vector<SplitSpec> out;
    int k = 0;
    for (std::size_t a = 0; a < 5; ++a)
        for (std::size_t b = a + 1; b < 5; ++b)
            for (std::size_t c = b + 1; c < 5; ++c) {
                SplitSpec s;
                s.name = "PU-C2-" + std::to_string(++k);
                s.dataset = DatasetKind::PU;
                s.rule = SegmentationRule::WHOLE_RECORDING;
                for (std::size_t ci = 0; ci < pools.size(); ++ci) {
                    const auto& pool = pools[ci].second;
                    std::vector<std::string> train, test;
                    for (std::size_t i = 0; i < pool.size(); ++i)
                        (i == a || i == b || i == c ? train : test).push_back(pool[i]);
                    s.classes.push_back(make_class(static_cast<int>(ci), pools[ci].first, train, test));
                }
                out.push_back(std::move(s));
            }
    return out;
}

SplitSpec cwru_split(int which) {
    switch (which) {
        case 1: {
            const std::vector<std::pair<std::string, std::string>> classes = {
                {"Healthy", "Normal_0"},
                {"Inner Race", "IR007_0"},
                {"Ball", "B007_0"},
                {"Outer Race - Centered", "OR007@6_0"},
                {"Outer Race - Orthogonal", "OR007@3_0"},
                {"Outer Race - Opposite", "OR007@12_0"}};
            SplitSpec s = per_file_classes("CWRU-C1", {});
            for (std::size_t i = 0; i < classes.size(); ++i)
                s.classes.push_back(
                    make_class(static_cast<int>(i), classes[i].first, {classes[i].second}, {classes[i].second}));
            return s;
        }
        case 2:
            return per_file_classes(
                "CWRU-C2", with_suffixes({"Normal", "IR007", "B007", "OR007@6", "OR007@3", "OR007@12"}, {0, 1, 2, 3}));
        case 3: {
            std::vector<std::string> stems{"Normal"};
            for (const auto* group : {&cwru_inner(), &cwru_ball(), &cwru_outer()})
                stems.insert(stems.end(), group->begin(), group->end());
            return per_file_classes("CWRU-C3", with_suffixes(stems, {0, 1, 2, 3}));
        }
        case 4: {
            SplitSpec s;
            s.name = "CWRU-C4";
            s.dataset = DatasetKind::CWRU;
            s.rule = SegmentationRule::SEGMENT_400MS;
            const std::vector<std::pair<std::string, std::vector<std::string>>> groups = {
                {"Healthy", {"Normal"}}, {"Inner Race", cwru_inner()}, {"Ball", cwru_ball()}, {"Outer Race", cwru_outer()}};
            for (std::size_t i = 0; i < groups.size(); ++i)
                s.classes.push_back(make_class(static_cast<int>(i), groups[i].first, with_suffixes(groups[i].second, {0, 1}),
                                               with_suffixes(groups[i].second, {2, 3})));
            return s;
        }
        default: throw ConfigError("CWRU protocol must be 1..4, got " + std::to_string(which));
    }
}

SplitSpec mfpt_split(bool strict_disjoint) {
    SplitSpec s;
    s.name = strict_disjoint ? "MFPT-STRICT" : "MFPT";
    s.dataset = DatasetKind::MFPT;
    s.rule = SegmentationRule::SEGMENT_400MS_50PCT;
    std::vector<std::string> outer_train = mfpt_outer({1, 2});
    for (int m : {1, 2, 4, 5, 7}) outer_train.push_back(mfpt_om(m));
    std::vector<std::string> outer_test = {"O3", mfpt_om(3), mfpt_om(6)};
    s.classes = {make_class(0, "Healthy", strict_disjoint ? std::vector<std::string>{"N1"}
                                                          : std::vector<std::string>{"N1", "N2"},
                            {"N2", "N3"}),
                 make_class(1, "Outer Race", outer_train, outer_test),
                 make_class(2, "Inner Race", {"I1", "I2", "I4", "I5", "I7"}, {"I3", "I6"})};
    if (!strict_disjoint) {
        s.warnings.push_back(kMfptOverlapWarning);
        spdlog::warn(kMfptOverlapWarning);
    }
    return s;
}

std::vector<std::string> split_names() {
    std::vector<std::string> out{"PU-C1"};
    for (int k = 1; k <= 10; ++k) out.push_back("PU-C2-" + std::to_string(k));
    for (int c = 1; c <= 4; ++c) out.push_back("CWRU-C" + std::to_string(c));
    out.push_back("MFPT");
    out.push_back("MFPT-STRICT");
    return out;
}

SplitSpec split_by_name(std::string_view name) {
    if (name == "PU-C1") return pu_c1();
    if (name.starts_with("PU-C2-")) {
        for (auto& s : pu_c2_combinations())
            if (s.name == name) return s;
    }
    if (name.starts_with("CWRU-C") && name.size() == 7 && name[6] >= '1' && name[6] <= '4') return cwru_split(name[6] - '0');
    if (name == "MFPT") return mfpt_split(false);
    if (name == "MFPT-STRICT") return mfpt_split(true);
    throw ConfigError("unknown split '" + std::string(name) + "'");
}

std::vector<std::string> dataset_manifest(DatasetKind kind) {
    std::vector<std::string> out;
    switch (kind) {
        case DatasetKind::PU:
            for (int i = 1; i <= 6; ++i) out.push_back("K00" + std::to_string(i));
            for (const char* id : {"KA01", "KA03", "KA05", "KA06", "KA07", "KA08", "KA09", "KI01", "KI03", "KI05",
                                   "KI07", "KI08", "KA04", "KA15", "KA16", "KA22", "KA30", "KI04", "KI14", "KI16",
                                   "KI17", "KI18", "KI21", "KB23", "KB24", "KB27"})
                out.emplace_back(id);
            break;
        case DatasetKind::CWRU: {
            std::vector<std::string> stems{"Normal"};
            for (const auto* group : {&cwru_inner(), &cwru_ball(), &cwru_outer()})
                stems.insert(stems.end(), group->begin(), group->end());
            out = with_suffixes(stems, {0, 1, 2, 3});
            break;
        }
        case DatasetKind::MFPT:
            for (int i = 1; i <= 3; ++i) out.push_back("N" + std::to_string(i));
            for (int i = 1; i <= 10; ++i) out.push_back("O" + std::to_string(i));
            for (int i = 1; i <= 7; ++i) out.push_back("I" + std::to_string(i));
            break;
        case DatasetKind::SYNTHETIC: break;
    }
    return out;
}

std::vector<std::string> check_split(const SplitSpec& spec, const std::vector<std::string>& manifest) {
    const std::set<std::string> known(manifest.begin(), manifest.end());
    std::map<std::string, int> owner;
    std::set<std::string> train, test;
    for (const auto& c : spec.classes) {
        for (const auto* list : {&c.train, &c.test})
            for (const auto& id : *list) {
                if (!known.empty() && !known.contains(id))
                    throw ConfigError(spec.name + ": source '" + id + "' is not in the " +
                                      std::string(to_string(spec.dataset)) + " manifest");
                auto [it, inserted] = owner.emplace(id, c.label.index);
                if (!inserted && it->second != c.label.index)
                    throw ConfigError(spec.name + ": source '" + id + "' belongs to two classes");
            }
        train.insert(c.train.begin(), c.train.end());
        test.insert(c.test.begin(), c.test.end());
    }
    std::vector<std::string> shared;
    if (spec.rule == SegmentationRule::TIME_80_20_THEN_400MS) return shared;
    std::set_intersection(train.begin(), train.end(), test.begin(), test.end(), std::back_inserter(shared));
    return shared;
}

nlohmann::json to_json(const SplitSpec& spec) {
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& c : spec.classes)
        classes.push_back({{"index", c.label.index}, {"name", c.label.name}, {"train", c.train}, {"test", c.test}});
    return {{"name", spec.name},
            {"dataset", std::string(to_string(spec.dataset))},
            {"rule", std::string(to_string(spec.rule))},
            {"window_ms", spec.window_ms},
            {"classes", classes},
            {"warnings", spec.warnings}};
}

SplitSpec split_from_json(const nlohmann::json& j) {
    try {
        SplitSpec s;
        s.name = j.at("name").get<std::string>();
        s.dataset = parse_dataset(j.at("dataset").get<std::string>());
        s.rule = parse_segmentation_rule(j.at("rule").get<std::string>());
        s.window_ms = j.value("window_ms", 400.0);
        for (const auto& c : j.at("classes"))
            s.classes.push_back(make_class(c.at("index").get<int>(), c.at("name").get<std::string>(),
                                           c.at("train").get<std::vector<std::string>>(),
                                           c.at("test").get<std::vector<std::string>>()));
        s.warnings = j.value("warnings", std::vector<std::string>{});
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad split JSON: ") + e.what());
    }
}

SplitSamples materialize(const SplitSpec& spec, const RecordingLoader& load) {
    std::map<std::string, std::vector<VibrationRecording>> cache;
    auto recordings = [&](const std::string& id) -> const std::vector<VibrationRecording>& {
        auto it = cache.find(id);
        if (it == cache.end()) {
            auto recs = load(spec.dataset, id);
            if (recs.empty()) throw MissingDataError(spec.name + ": no recordings for source '" + id + "'");
            it = cache.emplace(id, std::move(recs)).first;
        }
        return it->second;
    };
    auto emit = [&](std::vector<VibrationSample>& out, const VibrationRecording& rec, bool train_side) {
        switch (spec.rule) {
            case SegmentationRule::WHOLE_RECORDING: out.push_back(whole_recording_sample(rec, kPuSampleLength)); break;
            case SegmentationRule::TIME_80_20_THEN_400MS: {
                auto [first, second] = time_split(rec, 0.8);
                const std::size_t offset = train_side ? 0 : first.length();
                for (auto& s : segment(train_side ? first : second, spec.window_ms, 0.0)) {
                    s.origin.start_index += offset;  // file coordinates, not part coordinates
                    out.push_back(std::move(s));
                }
                break;
            }
            case SegmentationRule::SEGMENT_400MS:
            case SegmentationRule::SEGMENT_400MS_50PCT: {
                const double overlap = spec.rule == SegmentationRule::SEGMENT_400MS ? 0.0 : 0.5;
                for (auto& s : segment(rec, spec.window_ms, overlap)) out.push_back(std::move(s));
                break;
            }
        }
    };

    SplitSamples out;
    for (const auto& c : spec.classes)
        for (bool train_side : {true, false})
            for (const auto& id : train_side ? c.train : c.test)
                for (auto rec : recordings(id)) {
                    rec.label = c.label;
                    emit(train_side ? out.train : out.test, rec, train_side);
                }
    return out;
}

}  // namespace mbfd
