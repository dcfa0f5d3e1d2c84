#pragma once

#include "massnet/data_model.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace massnet::synth {

// One contact blob, in cell coordinates. Profile exp(-0.5 * (d^2)^flatness)
// with d the sigma-scaled distance: flatness 1 is a plain Gaussian, larger
// values give the flat-topped contact patches of soft tissue.
struct BlobSegment {
    std::string name;
    double center_row = 0.0;
    double center_col = 0.0;
    double sigma_row = 1.0;
    double sigma_col = 1.0;
    double mass_fraction = 0.0;
    double flatness = 1.0;
};

struct GridSpec {
    int rows = 56;
    int cols = 40;
    double pitch_row_m = 0.035;
    double pitch_col_m = 0.024;
};

// Seven segments: head, torso, pelvis, two arms, two legs.
struct BodyModel {
    double weight_kg = 60.0;
    double height_m = 1.70;
    Posture posture = Posture::supine;
    std::vector<BlobSegment> segments;
    JointSet joints;  // 14 joints derived from the same skeleton

    void validate(const GridSpec& grid) const;
};

// Random per-sample variation of the skeleton layout.
struct LayoutJitter {
    double axis_shift_m = 0.0;     // head-top offset along the bed
    double lateral_shift_m = 0.0;  // body midline offset across the bed
    double arm_spread = 0.0;       // relative change of arm lateral offset
    double leg_spread = 0.0;
};

LayoutJitter draw_jitter(std::mt19937_64& rng);

// Builds the blob layout for a body on the grid. Heavier / wider bodies get
// proportionally wider lateral spread (contact area grows with BMI).
BodyModel make_body(double weight_kg, double height_m, Posture posture, const GridSpec& grid,
                    const LayoutJitter& jitter = {});

// Linear blend of two layouts (same segment order), t in [0, 1]; used for
// movements between postures.
BodyModel blend_bodies(const BodyModel& a, const BodyModel& b, double t);

// Renders blobs so that sum(frame) == weight_kg * on_mat_fraction
// (1 sensor unit == 1 kg-equivalent).
PressureFrame render_body(const BodyModel& body, const GridSpec& grid, double on_mat_fraction = 1.0);

// Ideal sample: rendered frame, joints at the skeleton points, posture label.
Sample synthesize_sample(const BodyModel& body, const GridSpec& grid, const std::string& subject_id);

// ---------------------------------------------------------------------------
// Sensor non-idealities
// ---------------------------------------------------------------------------
struct SensorModel {
    std::vector<double> gain;  // per cell, row-major; empty means unit gain
    std::optional<double> saturation_cap;
    double noise_sigma = 0.0;
    double hysteresis_retention = 0.0;

    void validate() const;
};

SensorModel make_sensor_model(const GridSpec& grid, double gain_sigma, std::optional<double> saturation_cap,
                              double noise_sigma, double hysteresis_retention, std::mt19937_64& rng);

// gain -> saturation -> additive noise clipped at zero.
PressureFrame apply_sensor_model(const PressureFrame& frame, const SensorModel& sensor, std::mt19937_64& rng);

// Per-frame model plus hysteresis: out_t = r * out_{t-1} + (1 - r) * v_t,
// with out_0 = v_0.
std::vector<PressureFrame> apply_sensor_model(const std::vector<PressureFrame>& frames, const SensorModel& sensor,
                                              std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Datasets and sessions
// ---------------------------------------------------------------------------
struct SyntheticConfig {
    int n_samples = 100;
    int samples_per_subject = 5;
    double weight_min = 40.0;
    double weight_max = 105.0;
    GridSpec grid;
    std::vector<Posture> postures = {Posture::supine, Posture::left_side, Posture::right_side, Posture::prone};
    double gain_sigma = 0.0;
    // Saturation cap at this quantile of the ideal per-frame peaks (0.7 = 70th
    // percentile); unset means no saturation.
    std::optional<double> saturation_quantile;
    // Noise sigma as a fraction of the median ideal peak.
    double noise_rel = 0.0;
    bool with_joints = true;
    std::uint64_t seed = 0;
};

struct SyntheticDataset {
    Dataset dataset;
    SensorModel sensor;
};

SyntheticDataset synthesize_dataset(const SyntheticConfig& cfg);

struct SessionConfig {
    int n_frames = 1200;
    int n_movements = 14;
    int movement_frames = 30;
    double weight_kg = 62.0;
    double height_m = 1.68;
    GridSpec grid;
    double gain_sigma = 0.05;
    double noise_rel = 0.01;
    double hysteresis_retention = 0.2;
    // Share of body mass lifted off the mat at the midpoint of a movement.
    double lift_fraction = 0.15;
    // Per-frame random displacement (cells, sigma) of every segment while a
    // movement is under way.
    double movement_jitter_cells = 2.0;
    std::uint64_t seed = 0;
};

struct SyntheticSession {
    std::vector<PressureFrame> frames;
    std::vector<Posture> postures;
    std::vector<std::pair<int, int>> movements;  // ground-truth [start, end)
    double weight_kg = 0.0;

    Dataset to_dataset(const std::string& subject_id = "session") const;
};

SyntheticSession synthesize_session(const SessionConfig& cfg);

}  // namespace massnet::synth
