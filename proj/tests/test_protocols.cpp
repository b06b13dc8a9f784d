#include <doctest.h>

#include <algorithm>
#include <set>

#include "mbfd/error.hpp"
#include "mbfd/protocols.hpp"

using namespace mbfd;

namespace {

using Ids = std::vector<std::string>;

std::set<std::string> as_set(const Ids& v) { return {v.begin(), v.end()}; }

VibrationRecording ramp(DatasetKind kind, const std::string& id, std::size_t n, double rate) {
    VibrationRecording r;
    r.dataset = kind;
    r.source_id = id;
    r.sample_rate = rate;
    r.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) r.samples[i] = static_cast<double>(i);
    return r;
}

}  // namespace

TEST_CASE("PU-C1 bearing sets") {
    const auto s = pu_c1();
    CHECK(s.dataset == DatasetKind::PU);
    CHECK(s.rule == SegmentationRule::WHOLE_RECORDING);
    REQUIRE(s.classes.size() == 3);
    CHECK(s.classes[0].train == Ids{"K002"});
    CHECK(s.classes[0].test == Ids{"K001"});
    CHECK(s.classes[1].train == Ids{"KA01", "KA05", "KA07"});
    CHECK(as_set(s.classes[1].test) == as_set({"KA22", "KA04", "KA15", "KA30", "KA16"}));
    CHECK(s.classes[2].train == Ids{"KI01", "KI05", "KI07"});
    CHECK(as_set(s.classes[2].test) == as_set({"KI14", "KI21", "KI17", "KI18", "KI16"}));
    for (std::size_t c = 0; c < 3; ++c) CHECK(s.classes[c].label.index == static_cast<int>(c));
    CHECK(check_split(s, dataset_manifest(DatasetKind::PU)).empty());
    CHECK(s.warnings.empty());
}

TEST_CASE("PU-C2 enumerates ten synchronized combinations") {
    const auto specs = pu_c2_combinations();
    REQUIRE(specs.size() == 10);
    const std::vector<Ids> pools = {{"K001", "K002", "K003", "K004", "K005"},
                                    {"KA04", "KA15", "KA16", "KA22", "KA30"},
                                    {"KI04", "KI14", "KI16", "KI18", "KI21"}};
    std::set<Ids> seen;
    for (std::size_t k = 0; k < specs.size(); ++k) {
        const auto& s = specs[k];
        CHECK(s.name == "PU-C2-" + std::to_string(k + 1));
        CHECK(s.train_sources().size() == 9);
        CHECK(s.test_sources().size() == 6);
        CHECK(check_split(s, dataset_manifest(DatasetKind::PU)).empty());
        for (std::size_t c = 0; c < 3; ++c) {
            auto all = s.classes[c].train;
            all.insert(all.end(), s.classes[c].test.begin(), s.classes[c].test.end());
            CHECK(as_set(all) == as_set(pools[c]));
            // same positions in every class
            for (std::size_t i = 0; i < 3; ++i) {
                const auto pos = std::find(pools[c].begin(), pools[c].end(), s.classes[c].train[i]) - pools[c].begin();
                const auto pos0 = std::find(pools[0].begin(), pools[0].end(), s.classes[0].train[i]) - pools[0].begin();
                CHECK(pos == pos0);
            }
        }
        seen.insert(s.classes[0].train);
        CHECK(split_by_name(s.name) == s);
    }
    CHECK(seen.size() == 10);
    CHECK(specs[0].classes[0].train == Ids{"K001", "K002", "K003"});
    CHECK(specs[0].classes[0].test == Ids{"K004", "K005"});
    CHECK(specs[1].classes[0].train == Ids{"K001", "K002", "K004"});
    CHECK(specs[9].classes[0].train == Ids{"K003", "K004", "K005"});
    CHECK(specs[9].classes[2].train == Ids{"KI16", "KI18", "KI21"});
}

TEST_CASE("CWRU class counts and file lists") {
    const std::size_t expected[] = {6, 24, 64, 4};
    for (int c = 1; c <= 4; ++c) {
        const auto s = cwru_split(c);
        CHECK(s.classes.size() == expected[c - 1]);
        CHECK(s.dataset == DatasetKind::CWRU);
        CHECK(s.rule == (c == 4 ? SegmentationRule::SEGMENT_400MS : SegmentationRule::TIME_80_20_THEN_400MS));
        CHECK(check_split(s, dataset_manifest(DatasetKind::CWRU)).empty());
        CHECK(s.name == "CWRU-C" + std::to_string(c));
    }
    const auto c1 = cwru_split(1);
    Ids files;
    for (const auto& k : c1.classes) {
        CHECK(k.train == k.test);
        files.insert(files.end(), k.train.begin(), k.train.end());
    }
    CHECK(files == Ids{"Normal_0", "IR007_0", "B007_0", "OR007@6_0", "OR007@3_0", "OR007@12_0"});

    const auto c2 = cwru_split(2);
    CHECK(c2.classes[4].train == Ids{"IR007_0"});
    CHECK(c2.classes[23].train == Ids{"OR007@12_3"});

    const auto c3 = cwru_split(3);
    CHECK(c3.classes[13].train == Ids{"IR021_1"});
    CHECK(c3.classes[20].train == Ids{"B007_0"});
    CHECK(c3.classes[52].train == Ids{"OR021@3_0"});
    CHECK(c3.classes[63].train == Ids{"OR021@12_3"});
    CHECK(c3.classes.size() == 64);

    const auto c4 = cwru_split(4);
    CHECK(c4.classes[0].train == Ids{"Normal_0", "Normal_1"});
    CHECK(c4.classes[0].test == Ids{"Normal_2", "Normal_3"});
    CHECK(c4.classes[3].train.size() + c4.classes[3].test.size() == 28);
    CHECK(c4.classes[1].train.size() + c4.classes[1].test.size() == 16);
    for (const auto& k : c4.classes) {
        for (const auto& id : k.train) CHECK((id.ends_with("_0") || id.ends_with("_1")));
        for (const auto& id : k.test) CHECK((id.ends_with("_2") || id.ends_with("_3")));
    }
    CHECK_THROWS_AS(cwru_split(5), ConfigError);
}

TEST_CASE("MFPT sets as printed, and the strict variant") {
    const auto s = mfpt_split();
    CHECK(s.rule == SegmentationRule::SEGMENT_400MS_50PCT);
    REQUIRE(s.classes.size() == 3);
    CHECK(s.classes[0].train == Ids{"N1", "N2"});
    CHECK(s.classes[0].test == Ids{"N2", "N3"});
    CHECK(s.classes[1].train == Ids{"O1", "O2", "O4", "O5", "O7", "O8", "O10"});
    CHECK(s.classes[1].test == Ids{"O3", "O6", "O9"});
    CHECK(s.classes[2].train == Ids{"I1", "I2", "I4", "I5", "I7"});
    CHECK(s.classes[2].test == Ids{"I3", "I6"});
    CHECK(s.warnings.size() == 1);
    CHECK(check_split(s, dataset_manifest(DatasetKind::MFPT)) == Ids{"N2"});

    const auto strict = mfpt_split(true);
    CHECK(strict.name == "MFPT-STRICT");
    CHECK(strict.classes[0].train == Ids{"N1"});
    CHECK(strict.classes[0].test == Ids{"N2", "N3"});
    CHECK(strict.warnings.empty());
    CHECK(check_split(strict, dataset_manifest(DatasetKind::MFPT)).empty());
    CHECK(split_by_name("MFPT-STRICT") == strict);
}

TEST_CASE("names") {
    const auto names = split_names();
    CHECK(names.size() == 17);
    for (const auto& n : names) CHECK(split_by_name(n).name == n);
    CHECK_THROWS_AS(split_by_name("PU-C2-11"), ConfigError);
    CHECK_THROWS_AS(split_by_name("CWRU"), ConfigError);
    for (auto r : {SegmentationRule::WHOLE_RECORDING, SegmentationRule::TIME_80_20_THEN_400MS,
                   SegmentationRule::SEGMENT_400MS, SegmentationRule::SEGMENT_400MS_50PCT})
        CHECK(parse_segmentation_rule(to_string(r)) == r);
}

TEST_CASE("check_split rejects unknown ids and ids shared by classes") {
    auto s = pu_c1();
    s.classes[1].test.push_back("KX99");
    CHECK_THROWS_AS(check_split(s, dataset_manifest(DatasetKind::PU)), ConfigError);
    s = pu_c1();
    s.classes[2].train.push_back("KA01");
    CHECK_THROWS_AS(check_split(s, dataset_manifest(DatasetKind::PU)), ConfigError);
    s = pu_c1();
    s.classes[1].test.push_back("KA01");
    CHECK(check_split(s, dataset_manifest(DatasetKind::PU)) == Ids{"KA01"});
    // time-split protocols reuse each file on both sides by design
    CHECK(check_split(cwru_split(1), dataset_manifest(DatasetKind::CWRU)).empty());
}

TEST_CASE("JSON round trip") {
    for (const auto& n : split_names()) {
        const auto s = split_by_name(n);
        CHECK(split_from_json(nlohmann::json::parse(to_json(s).dump())) == s);
    }
}

TEST_CASE("materialize applies each rule with closed-form counts") {
    SUBCASE("time split then 400 ms windows") {
        const std::size_t n = 121'000;  // 12 kHz: 4800-sample windows
        const auto s = cwru_split(1);
        const auto out = materialize(s, [&](DatasetKind k, const std::string& id) {
            return std::vector{ramp(k, id, n, 12000.0)};
        });
        const std::size_t cut = n * 8 / 10;
        CHECK(out.train.size() == 6 * (cut / 4800));
        CHECK(out.test.size() == 6 * ((n - cut) / 4800));
        for (const auto& smp : out.test) {
            CHECK(smp.origin.start_index >= cut);
            CHECK(smp.values.front() == static_cast<double>(smp.origin.start_index));
            CHECK(smp.values.size() == 4800);
        }
        CHECK(out.train.front().label->index == 0);
        CHECK(out.train.back().label->name == s.classes.back().label.name);
    }
    SUBCASE("50% overlap") {
        const std::size_t n = 488'280;
        const auto out = materialize(mfpt_split(true), [&](DatasetKind k, const std::string& id) {
            return std::vector{ramp(k, id, n, 97656.0)};
        });
        // w = 39062, hop = 19531: floor(449218 / 19531) + 1 = 24 windows per file
        CHECK(out.train.size() == 24 * (1 + 7 + 5));
        CHECK(out.test.size() == 24 * (2 + 3 + 2));
        CHECK(out.train[1].origin.start_index == 19531);
    }
    SUBCASE("whole recordings, several per bearing") {
        const auto out = materialize(pu_c1(), [&](DatasetKind k, const std::string& id) {
            return std::vector{ramp(k, id, kPuSampleLength + 100, 64000.0), ramp(k, id, kPuSampleLength, 64000.0)};
        });
        CHECK(out.train.size() == 2 * 7);
        CHECK(out.test.size() == 2 * 11);
        for (const auto& smp : out.train) CHECK(smp.values.size() == kPuSampleLength);
    }
    SUBCASE("missing source") {
        CHECK_THROWS_AS(materialize(pu_c1(), [](DatasetKind, const std::string&) {
                            return std::vector<VibrationRecording>{};
                        }),
                        MissingDataError);
    }
}
