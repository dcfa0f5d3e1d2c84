#include "test_util.hpp"

#include "massnet/errors.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

using namespace massnet;
using testutil::make_dataset;
using testutil::TempDir;

namespace {

std::set<std::string> subjects_of(const Dataset& d, const std::vector<std::size_t>& idx) {
    std::set<std::string> s;
    for (std::size_t i : idx) s.insert(d[i].subject_id);
    return s;
}

}  // namespace

TEST_CASE("frame invariants") {
    CHECK_THROWS_AS(PressureFrame(0, 3), FormatError);
    CHECK_THROWS_AS(PressureFrame(2, 2, std::vector<double>{1, 2, 3}), FormatError);
    PressureFrame f(2, 2, std::vector<double>{1, 2, 3, 4});
    CHECK(f.sum() == 10.0);
    CHECK(f.max() == 4.0);
    f.at(0, 0) = -1.0;
    CHECK_THROWS_AS(f.validate(), FormatError);
    f.at(0, 0) = NAN;
    CHECK_THROWS_AS(f.validate(), FormatError);
}

TEST_CASE("sample invariants") {
    Sample s;
    s.frame = PressureFrame(2, 2, 1.0);
    s.weight_kg = 500.0;
    CHECK_THROWS_AS(s.validate(), FormatError);
    s.weight_kg = 70.0;
    s.validate();
    s.joints = JointSet{{{INFINITY, 0}}};
    CHECK_THROWS_AS(s.validate(), FormatError);
    CHECK_THROWS_AS(posture_from_string("sitting"), FormatError);
    CHECK(posture_group(Posture::left_side) == "side");
    CHECK(posture_group(Posture::right_side) == "side");
}

TEST_CASE("dataset subjects and subsets") {
    const Dataset d = make_dataset(4, 3, 1);
    CHECK(d.size() == 12);
    CHECK(d.subjects().size() == 4);
    for (const auto& s : d.samples()) CHECK(d.subjects().count(s.subject_id) == 1);
    CHECK(d.indices_of_subject("subj2") == std::vector<std::size_t>{6, 7, 8});
    const std::vector<std::size_t> pick{0, 11};
    const Dataset sub = d.subset(pick);
    CHECK(sub.size() == 2);
    CHECK(sub.format() == d.format());
    const std::vector<std::size_t> bad{12};
    CHECK_THROWS_AS(d.subset(bad), ArgumentError);
}

TEST_CASE("native format round trip is bit exact") {
    TempDir dir("native");
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Sample> samples;
    for (int i = 0; i < 6; ++i) {
        Sample s;
        s.frame = PressureFrame(56, 40);
        for (double& v : s.frame.values()) v = u(rng) * std::pow(10.0, i - 3);
        s.frame.pitch_row_m = 0.035;
        s.frame.pitch_col_m = 0.024;
        s.subject_id = i < 3 ? "a" : "b";
        s.weight_kg = i < 3 ? 61.3 : 88.125;
        s.posture = i % 2 ? Posture::prone : Posture::left_side;
        s.timestamp = i * 10;
        s.joints = JointSet{{{u(rng) * 56, u(rng) * 40}, {1.0 / 3.0, 2.0 / 7.0}}};
        samples.push_back(std::move(s));
    }
    const Dataset d(FormatId::massnet_static, samples);
    save_dataset(d, dir.path());
    const Dataset back = load_dataset(dir.path(), FormatId::massnet_static);
    REQUIRE(back.size() == d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(back[i].frame == d[i].frame);
        CHECK(back[i].joints == d[i].joints);
        CHECK(back[i].weight_kg == d[i].weight_kg);
        CHECK(back[i].posture == d[i].posture);
        CHECK(back[i].subject_id == d[i].subject_id);
        CHECK(back[i].timestamp == d[i].timestamp);
        CHECK(back[i].frame.pitch_row_m == d[i].frame.pitch_row_m);
    }
    CHECK_THROWS_AS(load_dataset(dir.path(), FormatId::massnet_dynamic), FormatError);
}

TEST_CASE("918-frame native dataset") {
    TempDir dir("n918");
    std::vector<Sample> samples;
    for (int i = 0; i < 918; ++i) {
        Sample s;
        s.frame = PressureFrame(56, 40, 0.0);
        s.frame.at(i % 56, i % 40) = 1.5;
        s.subject_id = "s" + std::to_string(i % 17);
        s.weight_kg = 50.0 + i % 17;
        samples.push_back(std::move(s));
    }
    save_dataset(Dataset(FormatId::massnet_static, samples), dir.path());
    const Dataset d = load_dataset(dir.path(), FormatId::massnet_static);
    CHECK(d.size() == 918);
    CHECK(d[0].frame.rows() == 56);
    CHECK(d[0].frame.cols() == 40);
}

TEST_CASE("load errors") {
    TempDir dir("errors");
    try {
        load_dataset(dir.path(), FormatId::massnet_static);
        FAIL("expected a load error");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("no samples found") != std::string::npos);
    }
    CHECK_THROWS_AS(load_dataset(dir / "missing", FormatId::massnet_static), LoadError);

    save_dataset(make_dataset(2, 2, 3), dir / "d");
    {
        std::ofstream(dir / "d/frames/000001.csv") << "1,2,x\n";
    }
    try {
        load_dataset(dir / "d", FormatId::massnet_static);
        FAIL("expected a load error");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("000001.csv") != std::string::npos);
    }
    {
        std::ofstream(dir / "d/frames/000001.csv") << "1,2\n3,4\n";
    }
    CHECK_THROWS_AS(load_dataset(dir / "d", FormatId::massnet_static), FormatError);
    {
        std::ofstream(dir / "d/meta.json") << "{ not json";
    }
    CHECK_THROWS_AS(load_dataset(dir / "d", FormatId::massnet_static), LoadError);
}

TEST_CASE("SLP layout") {
    TempDir dir("slp");
    const int subjects = 2, frames = 3;
    std::vector<double> physique;
    for (int s = 0; s < subjects; ++s) physique.insert(physique.end(), {25.0, 1.0, 170.0, 60.0 + 10 * s, 0.0});
    write_npy(dir / "physiqueData.npy", {static_cast<std::size_t>(subjects), 5}, physique);
    for (int s = 1; s <= subjects; ++s) {
        char name[8];
        std::snprintf(name, sizeof name, "%05d", s);
        const auto cover = dir.path() / name / "PMarray" / "uncover";
        std::filesystem::create_directories(cover);
        for (int k = 1; k <= frames; ++k) {
            char file[16];
            std::snprintf(file, sizeof file, "%06d.npy", k);
            std::vector<double> v(192 * 84, 0.0);
            v[static_cast<std::size_t>(k)] = 10.0 * s;
            write_npy(cover / file, {192, 84}, v);
        }
    }
    const Dataset d = load_dataset(dir.path(), FormatId::slp_pm);
    REQUIRE(d.size() == subjects * frames);
    CHECK(d[0].frame.rows() == 192);
    CHECK(d[0].frame.cols() == 84);
    CHECK(d[0].weight_kg == 60.0);
    CHECK(d[5].weight_kg == 70.0);
    CHECK(d[4].frame.at(0, 2) == 20.0);
    CHECK(d.subjects() == std::set<std::string>{"00001", "00002"});
}

TEST_CASE("npy reader handles the common dtypes") {
    TempDir dir("npy");
    const std::vector<double> v{1, 2, 3, 4, 5, 6};
    write_npy(dir / "a.npy", {2, 3}, v);
    const NpyArray a = read_npy(dir / "a.npy");
    CHECK(a.shape == std::vector<std::size_t>{2, 3});
    CHECK(a.values == v);
    {
        std::ofstream(dir / "bad.npy") << "nope";
    }
    CHECK_THROWS_AS(read_npy(dir / "bad.npy"), LoadError);
}

TEST_CASE("weight-binned split") {
    const Dataset d = make_dataset(102, 3, 4);
    const SplitSpec a = split_weight_binned(d, 10, 7);
    check_split(d, a, true);
    CHECK(subjects_of(d, a.train).size() == 84);
    CHECK(subjects_of(d, a.val).size() == 10);
    CHECK(subjects_of(d, a.test).size() == 8);
    CHECK(a.train.size() + a.val.size() + a.test.size() == d.size());
    CHECK(split_weight_binned(d, 10, 7) == a);
    CHECK(split_weight_binned(d, 10, 8) != a);
    CHECK_THROWS_AS(split_weight_binned(make_dataset(10, 2, 1), 10, 0), SplitError);

    SUBCASE("sparse bins are refilled from the most populous ones") {
        // 25 subjects crowded at the light end, a few spread out.
        std::vector<Sample> samples;
        for (int s = 0; s < 25; ++s) {
            Sample x;
            x.frame = PressureFrame(2, 2, 1.0);
            x.subject_id = "p" + std::to_string(s);
            x.weight_kg = s < 21 ? 40.0 + 0.1 * s : 60.0 + 15.0 * (s - 21);
            samples.push_back(x);
        }
        const Dataset skew(FormatId::synthetic, samples);
        const SplitSpec sp = split_weight_binned(skew, 10, 1);
        check_split(skew, sp, true);
        CHECK(sp.val.size() == 10);
        CHECK(sp.test.size() == 2);
    }
    SUBCASE("inconsistent subject weights") {
        auto samples = d.samples();
        samples[1].weight_kg += 1.0;
        CHECK_THROWS_AS(split_weight_binned(Dataset(d.format(), samples), 10, 0), SplitError);
    }
}

TEST_CASE("leave-one-subject-out split") {
    const Dataset d = make_dataset(10, 4, 5);
    const SplitSpec s = split_loso(d, "subj3");
    check_split(d, s, true);
    CHECK(subjects_of(d, s.train).size() == 9);
    CHECK(subjects_of(d, s.test) == std::set<std::string>{"subj3"});
    CHECK(s.val.empty());
    CHECK_THROWS_AS(split_loso(d, "subject_99"), SplitError);
}

TEST_CASE("random k-fold split") {
    const Dataset d = make_dataset(17, 54, 6, 2, 2);
    REQUIRE(d.size() == 918);
    const auto folds = split_random_kfold(d, 5, 3);
    REQUIRE(folds.size() == 5);
    std::vector<int> seen(d.size(), 0);
    for (const auto& f : folds) {
        CHECK((f.test.size() == 183 || f.test.size() == 184));
        CHECK(f.train.size() + f.test.size() == d.size());
        check_split(d, f, false);
        for (std::size_t i : f.test) ++seen[i];
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
    CHECK(split_random_kfold(d, 5, 3) == folds);
    CHECK_THROWS_AS(split_random_kfold(d, 1, 3), SplitError);
    CHECK_THROWS_AS(split_random_kfold(make_dataset(1, 3, 1), 5, 3), SplitError);
}

TEST_CASE("split partitions are disjoint across random seeds") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        const std::uint64_t seed = rng();
        const int n_subj = 20 + static_cast<int>(seed % 30);
        const Dataset d = make_dataset(n_subj, 1 + static_cast<int>(seed % 4), seed, 2, 2, 1.3);
        check_split(d, split_weight_binned(d, 10, seed), true);
        const auto subjects = std::vector<std::string>(d.subjects().begin(), d.subjects().end());
        check_split(d, split_loso(d, subjects[seed % subjects.size()]), true);
        for (const auto& f : split_random_kfold(d, 2 + static_cast<int>(seed % 5), seed)) check_split(d, f, false);
    }
}

TEST_CASE("check_split catches overlaps") {
    const Dataset d = make_dataset(4, 2, 1);
    SplitSpec s;
    s.train = {0, 1, 2};
    s.test = {2};
    CHECK_THROWS_AS(check_split(d, s, false), SplitError);
    s.test = {3};
    CHECK_THROWS_AS(check_split(d, s, true), SplitError);  // subj1 in both
    s.test = {99};
    CHECK_THROWS_AS(check_split(d, s, false), SplitError);
}
