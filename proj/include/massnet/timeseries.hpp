#pragma once

#include "massnet/data_model.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace massnet::ts {

enum class SegmentLabel { still, active };

std::string_view to_string(SegmentLabel l);  // "static" / "active"

struct Segment {
    int start = 0;
    int end = 0;  // exclusive
    SegmentLabel label = SegmentLabel::still;

    int length() const { return end - start; }
    bool operator==(const Segment&) const = default;
};

struct SegmentList {
    std::vector<Segment> segments;
    double tau_hi = 0.0;
    double tau_lo = 0.0;
    int min_len = 1;

    int length() const { return segments.empty() ? 0 : segments.back().end; }
    // Contiguous, non-overlapping, starts at 0, no two neighbours share a label.
    void validate() const;
};

// g_t = mean |frame_t - frame_{t-1}|; the first entry repeats g_1 so the
// series aligns with the frames.
std::vector<double> temporal_gradient(std::span<const PressureFrame> frames);

// Streaming form: one frame in, one gradient value out, O(1) state (the
// previous frame). The first push returns nullopt.
class GradientStream {
public:
    std::optional<double> push(const PressureFrame& frame);

private:
    std::optional<PressureFrame> prev_;
};

// Hysteresis gate: enters active when g > tau_hi, leaves when g < tau_lo.
class HysteresisGate {
public:
    HysteresisGate(double tau_hi, double tau_lo);
    SegmentLabel push(double g);

private:
    double hi_, lo_;
    SegmentLabel state_ = SegmentLabel::still;
};

// Hysteresis labels, then runs shorter than min_len are absorbed by their
// neighbours (shortest first).
SegmentList segment_frames(std::span<const double> gradient, double tau_hi, double tau_lo, int min_len);

struct Thresholds {
    double tau_hi = 0.0;
    double tau_lo = 0.0;
};

// tau_hi = hi_mult x median gradient, tau_lo = lo_mult x median.
Thresholds default_thresholds(std::span<const double> gradient, double hi_mult = 5.0, double lo_mult = 2.0);

struct LabelStats {
    int frames = 0;
    double mean_kg = 0.0;
    double std_kg = 0.0;  // population
    double min_kg = 0.0;
    double max_kg = 0.0;
};

struct SessionEstimate {
    double estimate_kg = 0.0;
    LabelStats still;
    LabelStats active;
    std::vector<LabelStats> per_segment;  // parallel to the segment list
};

// Duration-weighted mean of predictions over static segments only.
SessionEstimate aggregate_weight(std::span<const double> predictions, const SegmentList& segments);

// {estimate_kg, thresholds, segments with per-segment stats, static, active}.
std::string session_report_json(const SessionEstimate& estimate, const SegmentList& segments,
                                std::optional<double> true_weight_kg = std::nullopt);

// Fraction of overlap between two active-frame sets given as interval lists.
double interval_iou(std::span<const std::pair<int, int>> a, std::span<const std::pair<int, int>> b);
std::vector<std::pair<int, int>> active_intervals(const SegmentList& segments);

}  // namespace massnet::ts
