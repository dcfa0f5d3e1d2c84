#include "massnet/timeseries.hpp"

#include "massnet/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace massnet::ts {

std::string_view to_string(SegmentLabel l) { return l == SegmentLabel::still ? "static" : "active"; }

void SegmentList::validate() const {
    int expect = 0;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const auto& s = segments[i];
        if (s.start != expect || s.end <= s.start) throw ArgumentError("segments are not contiguous");
        if (i > 0 && segments[i - 1].label == s.label) throw ArgumentError("adjacent segments share a label");
        expect = s.end;
    }
}

namespace {

double mean_abs_diff(const PressureFrame& a, const PressureFrame& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ArgumentError("frame size changes within the sequence: " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    const auto va = a.values(), vb = b.values();
    double s = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) s += std::abs(va[i] - vb[i]);
    return s / static_cast<double>(va.size());
}

}  // namespace

std::vector<double> temporal_gradient(std::span<const PressureFrame> frames) {
    if (frames.size() < 2) throw ArgumentError("temporal gradient needs at least 2 frames");
    std::vector<double> g(frames.size());
    for (std::size_t t = 1; t < frames.size(); ++t) g[t] = mean_abs_diff(frames[t], frames[t - 1]);
    g[0] = g[1];
    return g;
}

std::optional<double> GradientStream::push(const PressureFrame& frame) {
    std::optional<double> out;
    if (prev_) out = mean_abs_diff(frame, *prev_);
    prev_ = frame;
    return out;
}

HysteresisGate::HysteresisGate(double tau_hi, double tau_lo) : hi_(tau_hi), lo_(tau_lo) {
    if (!(tau_lo > 0.0)) throw ArgumentError("tau_lo must be > 0");
    if (tau_lo > tau_hi) throw ArgumentError("tau_lo must not exceed tau_hi");
}

SegmentLabel HysteresisGate::push(double g) {
    if (state_ == SegmentLabel::still && g > hi_) state_ = SegmentLabel::active;
    else if (state_ == SegmentLabel::active && g < lo_) state_ = SegmentLabel::still;
    return state_;
}

SegmentList segment_frames(std::span<const double> gradient, double tau_hi, double tau_lo, int min_len) {
    if (min_len < 1) throw ArgumentError("min_len must be >= 1");
    HysteresisGate gate(tau_hi, tau_lo);
    SegmentList out;
    out.tau_hi = tau_hi;
    out.tau_lo = tau_lo;
    out.min_len = min_len;
    auto& segs = out.segments;
    for (int t = 0; t < static_cast<int>(gradient.size()); ++t) {
        const SegmentLabel l = gate.push(gradient[static_cast<std::size_t>(t)]);
        if (!segs.empty() && segs.back().label == l) segs.back().end = t + 1;
        else segs.push_back({t, t + 1, l});
    }
    // Absorb short runs, shortest first: flipping a run's label merges it
    // with both neighbours.
    while (segs.size() > 1) {
        auto shortest = std::min_element(segs.begin(), segs.end(),
                                         [](const Segment& a, const Segment& b) { return a.length() < b.length(); });
        if (shortest->length() >= min_len) break;
        shortest->label = shortest->label == SegmentLabel::still ? SegmentLabel::active : SegmentLabel::still;
        std::vector<Segment> merged;
        for (const auto& s : segs) {
            if (!merged.empty() && merged.back().label == s.label) merged.back().end = s.end;
            else merged.push_back(s);
        }
        segs = std::move(merged);
    }
    out.validate();
    return out;
}

Thresholds default_thresholds(std::span<const double> gradient, double hi_mult, double lo_mult) {
    if (gradient.empty()) throw ArgumentError("empty gradient series");
    std::vector<double> v(gradient.begin(), gradient.end());
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    double median = *mid;
    if (v.size() % 2 == 0) median = (median + *std::max_element(v.begin(), mid)) / 2.0;
    // A perfectly still recording has a zero median; keep the thresholds valid.
    median = std::max(median, std::numeric_limits<double>::min());
    return {hi_mult * median, lo_mult * median};
}

namespace {

LabelStats stats_of(const std::vector<double>& v) {
    LabelStats s;
    s.frames = static_cast<int>(v.size());
    if (v.empty()) return s;
    double sum = 0.0;
    s.min_kg = v.front();
    s.max_kg = v.front();
    for (double x : v) {
        sum += x;
        s.min_kg = std::min(s.min_kg, x);
        s.max_kg = std::max(s.max_kg, x);
    }
    s.mean_kg = sum / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - s.mean_kg) * (x - s.mean_kg);
    s.std_kg = std::sqrt(var / static_cast<double>(v.size()));
    return s;
}

}  // namespace

SessionEstimate aggregate_weight(std::span<const double> predictions, const SegmentList& segments) {
    segments.validate();
    if (static_cast<int>(predictions.size()) != segments.length()) {
        throw ArgumentError("prediction count " + std::to_string(predictions.size()) + " does not match segment coverage " +
                            std::to_string(segments.length()));
    }
    SessionEstimate out;
    std::vector<double> still, active;
    double weighted = 0.0;
    int duration = 0;
    for (const auto& seg : segments.segments) {
        std::vector<double> v(predictions.begin() + seg.start, predictions.begin() + seg.end);
        const LabelStats st = stats_of(v);
        out.per_segment.push_back(st);
        auto& bucket = seg.label == SegmentLabel::still ? still : active;
        bucket.insert(bucket.end(), v.begin(), v.end());
        if (seg.label == SegmentLabel::still) {
            weighted += st.mean_kg * seg.length();
            duration += seg.length();
        }
    }
    if (duration == 0) throw AggregationError("no static frames to aggregate");
    out.estimate_kg = weighted / duration;
    out.still = stats_of(still);
    out.active = stats_of(active);
    return out;
}

std::string session_report_json(const SessionEstimate& estimate, const SegmentList& segments,
                                std::optional<double> true_weight_kg) {
    using nlohmann::json;
    auto stats = [](const LabelStats& s) {
        return json{{"frames", s.frames}, {"mean_kg", s.mean_kg}, {"std_kg", s.std_kg}, {"min_kg", s.min_kg}, {"max_kg", s.max_kg}};
    };
    json j{{"estimate_kg", estimate.estimate_kg},
           {"thresholds", {{"tau_hi", segments.tau_hi}, {"tau_lo", segments.tau_lo}, {"min_len", segments.min_len}}},
           {"static", stats(estimate.still)},
           {"active", stats(estimate.active)},
           {"segments", json::array()}};
    for (std::size_t i = 0; i < segments.segments.size(); ++i) {
        const auto& s = segments.segments[i];
        json e = stats(estimate.per_segment[i]);
        e["start"] = s.start;
        e["end"] = s.end;
        e["label"] = std::string(to_string(s.label));
        j["segments"].push_back(std::move(e));
    }
    if (true_weight_kg) {
        j["true_weight_kg"] = *true_weight_kg;
        j["abs_error_kg"] = std::abs(estimate.estimate_kg - *true_weight_kg);
    }
    return j.dump(2);
}

std::vector<std::pair<int, int>> active_intervals(const SegmentList& segments) {
    std::vector<std::pair<int, int>> out;
    for (const auto& s : segments.segments) {
        if (s.label == SegmentLabel::active) out.emplace_back(s.start, s.end);
    }
    return out;
}

double interval_iou(std::span<const std::pair<int, int>> a, std::span<const std::pair<int, int>> b) {
    int hi = 0;
    for (const auto& [s, e] : a) hi = std::max(hi, e);
    for (const auto& [s, e] : b) hi = std::max(hi, e);
    std::vector<unsigned char> ma(static_cast<std::size_t>(hi)), mb(static_cast<std::size_t>(hi));
    for (const auto& [s, e] : a) std::fill(ma.begin() + s, ma.begin() + e, 1);
    for (const auto& [s, e] : b) std::fill(mb.begin() + s, mb.begin() + e, 1);
    int inter = 0, uni = 0;
    for (int t = 0; t < hi; ++t) {
        inter += ma[static_cast<std::size_t>(t)] && mb[static_cast<std::size_t>(t)];
        uni += ma[static_cast<std::size_t>(t)] || mb[static_cast<std::size_t>(t)];
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

}  // namespace massnet::ts
