#include "checks.hpp"

#include "massnet/errors.hpp"
#include "massnet/timeseries.hpp"

#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <random>

using namespace massnet;
using namespace massnet::ts;

namespace {

SegmentList uniform(int n, SegmentLabel l) { return SegmentList{{{0, n, l}}, 1.0, 0.5, 1}; }

}  // namespace

TEST_CASE("temporal gradient") {
    const std::vector<PressureFrame> flat(6, PressureFrame(4, 5, 2.5));
    for (double g : temporal_gradient(flat)) CHECK(g == 0.0);

    // +1 on 2 of 20 cells at t = 3.
    std::vector<PressureFrame> step(6, PressureFrame(4, 5, 1.0));
    for (int t = 3; t < 6; ++t) {
        step[static_cast<std::size_t>(t)].at(0, 0) += 1.0;
        step[static_cast<std::size_t>(t)].at(2, 4) += 1.0;
    }
    const auto g = temporal_gradient(step);
    REQUIRE(g.size() == 6);
    for (int t = 0; t < 6; ++t) CHECK(g[static_cast<std::size_t>(t)] == doctest::Approx(t == 3 ? 0.1 : 0.0));

    std::vector<PressureFrame> mixed{PressureFrame(4, 5), PressureFrame(5, 4)};
    CHECK_THROWS_AS(temporal_gradient(mixed), ArgumentError);
    CHECK_THROWS_AS(temporal_gradient(std::vector<PressureFrame>(1, PressureFrame(2, 2))), ArgumentError);
}

TEST_CASE("gradient stream agrees with the batch series") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 4);
    std::vector<PressureFrame> frames;
    for (int t = 0; t < 30; ++t) {
        PressureFrame f(5, 3);
        for (double& v : f.values()) v = u(rng);
        frames.push_back(f);
    }
    const auto batch = temporal_gradient(frames);
    GradientStream stream;
    CHECK_FALSE(stream.push(frames[0]).has_value());
    for (std::size_t t = 1; t < frames.size(); ++t) CHECK(*stream.push(frames[t]) == batch[t]);
    CHECK(batch[0] == batch[1]);
}

TEST_CASE("segmentation edge cases") {
    const std::vector<double> zeros(50, 0.0);
    const auto still = segment_frames(zeros, 1.0, 0.5, 5);
    REQUIRE(still.segments.size() == 1);
    CHECK(still.segments[0] == Segment{0, 50, SegmentLabel::still});

    const std::vector<double> high(50, 3.0);
    const auto active = segment_frames(high, 1.0, 0.5, 5);
    REQUIRE(active.segments.size() == 1);
    CHECK(active.segments[0] == Segment{0, 50, SegmentLabel::active});

    CHECK_THROWS_AS(segment_frames(zeros, 0.5, 1.0, 5), ArgumentError);
    CHECK_THROWS_AS(segment_frames(zeros, 1.0, 0.0, 5), ArgumentError);
    CHECK_THROWS_AS(segment_frames(zeros, 1.0, 0.5, 0), ArgumentError);
}

TEST_CASE("planted movement window is recovered") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> floor(0.0, 0.1), move(0.8, 1.2);
    std::vector<double> g(300);
    for (int t = 0; t < 300; ++t) g[static_cast<std::size_t>(t)] = t >= 100 && t < 150 ? move(rng) : floor(rng);
    const auto segs = segment_frames(g, 0.5, 0.2, 5);
    const std::vector<std::pair<int, int>> truth{{100, 150}};
    CHECK(interval_iou(active_intervals(segs), truth) >= 0.9);
}

TEST_CASE("hysteresis holds through dips above the low threshold") {
    const std::vector<double> g{0, 0, 2, 0.6, 0.6, 2, 0.1, 0, 0};
    const auto segs = segment_frames(g, 1.0, 0.5, 1);
    REQUIRE(segs.segments.size() == 3);
    CHECK(segs.segments[1] == Segment{2, 6, SegmentLabel::active});
}

TEST_CASE("segment lists cover the series on random inputs") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        std::uniform_int_distribution<int> len(1, 120), ml(1, 12);
        std::exponential_distribution<double> e(1.0);
        std::vector<double> g(static_cast<std::size_t>(len(rng)));
        for (double& v : g) v = e(rng);
        const double lo = 0.05 + e(rng), hi = lo + e(rng);
        const auto segs = segment_frames(g, hi, lo, ml(rng));
        segs.validate();
        CHECK(segs.length() == static_cast<int>(g.size()));
        CHECK(segs.segments.front().start == 0);
        if (segs.segments.size() > 1) {
            for (const auto& s : segs.segments) CHECK(s.length() >= segs.min_len);
        }
    }
}

TEST_CASE("static-only aggregation") {
    CHECK(aggregate_weight(std::vector<double>(40, 62.0), uniform(40, SegmentLabel::still)).estimate_kg == 62.0);

    std::vector<double> p(100, 60.0);
    std::fill(p.begin() + 90, p.end(), 40.0);
    const SegmentList two{{{0, 90, SegmentLabel::still}, {90, 100, SegmentLabel::active}}, 1, 0.5, 1};
    const auto est = aggregate_weight(p, two);
    CHECK(est.estimate_kg == 60.0);
    CHECK(est.active.mean_kg == 40.0);
    CHECK(est.still.frames == 90);

    std::vector<double> q(45, 58.0);
    std::fill(q.begin() + 10, q.begin() + 15, 20.0);
    std::fill(q.begin() + 15, q.end(), 62.0);
    const SegmentList three{{{0, 10, SegmentLabel::still}, {10, 15, SegmentLabel::active}, {15, 45, SegmentLabel::still}},
                            1, 0.5, 1};
    CHECK(std::abs(aggregate_weight(q, three).estimate_kg - 61.0) < 1e-12);

    CHECK_THROWS_AS(aggregate_weight(std::vector<double>(10, 1.0), uniform(10, SegmentLabel::active)), AggregationError);
    CHECK_THROWS_AS(aggregate_weight(std::vector<double>(9, 1.0), uniform(10, SegmentLabel::still)), ArgumentError);
}

TEST_CASE("aggregation ignores active-frame predictions") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(30, 110);
    const SegmentList segs{{{0, 20, SegmentLabel::still},
                            {20, 27, SegmentLabel::active},
                            {27, 60, SegmentLabel::still},
                            {60, 64, SegmentLabel::active}},
                           1, 0.5, 1};
    std::vector<double> p(64);
    for (double& v : p) v = u(rng);
    const double base = aggregate_weight(p, segs).estimate_kg;
    for (int trial = 0; trial < 50; ++trial) {
        for (int t : {20, 21, 22, 23, 24, 25, 26, 60, 61, 62, 63}) p[static_cast<std::size_t>(t)] = u(rng);
        CHECK(aggregate_weight(p, segs).estimate_kg == base);
    }
}

TEST_CASE("session report json") {
    const SegmentList segs{{{0, 3, SegmentLabel::still}, {3, 4, SegmentLabel::active}}, 2.0, 1.0, 1};
    const std::vector<double> p{60, 61, 62, 50};
    const auto j = nlohmann::json::parse(session_report_json(aggregate_weight(p, segs), segs, 61.0));
    CHECK(j["estimate_kg"].get<double>() == doctest::Approx(61.0));
    CHECK(j["segments"].size() == 2);
    CHECK(j["segments"][1]["label"] == "active");
}

TEST_CASE("synthetic session: movements found, static frames steadier") {
    const auto r = checks::segmentation_session(7);
    CHECK(r.iou >= 0.9);
    CHECK(r.aggregation_error < 1e-9);
    CHECK(r.static_spread < r.active_spread);
}
