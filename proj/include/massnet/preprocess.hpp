#pragma once

#include "massnet/data_model.hpp"

#include <optional>
#include <random>
#include <variant>
#include <vector>

namespace massnet {

enum class Normalization { per_dataset_max, per_frame_max, none };

std::string_view to_string(Normalization n);
Normalization normalization_from_string(std::string_view s);

struct AugmentConfig {
    bool enabled = true;
    double flip_prob = 0.5;
    double max_rotation_deg = 15.0;
    double max_shift_frac = 0.1;
};

struct PreprocessConfig {
    int upsample_factor = 3;
    bool smooth = true;
    int gaussian_kernel = 5;
    double gaussian_sigma = 1.0;
    int target_rows = 192;
    int target_cols = 192;
    Normalization normalization = Normalization::per_dataset_max;
    AugmentConfig augment;

    void validate() const;
};

// Corner-aligned bilinear upsampling: output cell i samples input coordinate
// i * (rows - 1) / (rows * factor - 1).
PressureFrame upsample_bilinear(const PressureFrame& frame, int factor);

// Normalized 2-D Gaussian kernel (kernel x kernel, row-major, sums to 1).
std::vector<double> gaussian_kernel(int kernel, double sigma);

// Convolution with a normalized Gaussian, reflect-101 borders.
PressureFrame gaussian_smooth(const PressureFrame& frame, int kernel, double sigma);

// Centers the frame in a zero grid; the odd extra cell goes bottom/right.
PressureFrame pad_center(const PressureFrame& frame, int target_rows, int target_cols);

PressureFrame normalize_frame(const PressureFrame& frame, Normalization mode, double dataset_max);

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------
struct HFlip {};
struct Rotate {
    double degrees = 0.0;
};
struct Shift {
    int rows = 0;
    int cols = 0;
};
using AugmentOp = std::variant<HFlip, Rotate, Shift>;

// Applies one geometric op to the frame and, identically, to the joints.
// Rotation is about the frame center with bilinear resampling; vacated cells
// are zero. The weight label never changes; hflip swaps left/right postures.
Sample augment_sample(const Sample& sample, const AugmentOp& op, const AugmentConfig& bounds = {});

// Forward map of a single point under an op, for a frame of the given size.
JointCoord transform_point(const JointCoord& p, const AugmentOp& op, int rows, int cols);

// Draws flip / rotation / shift parameters within the configured bounds.
std::vector<AugmentOp> draw_augmentation(const AugmentConfig& cfg, int rows, int cols, std::mt19937_64& rng);
Sample augment_random(const Sample& sample, const AugmentConfig& cfg, std::mt19937_64& rng);

// Independent N(0, sigma_px^2) noise on every coordinate.
JointSet inject_joint_noise(const JointSet& joints, double sigma_px, std::mt19937_64& rng);

// sigma such that the expected per-joint L1 error (|dr| + |dc|) equals l1_px.
double joint_noise_sigma_for_l1(double l1_px);

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

// upsample -> smooth -> pad, with joints carried through the same geometry.
// Values are left unnormalized and joints stay in target pixel coordinates.
Sample prepare_geometry(const Sample& sample, const PreprocessConfig& cfg);

struct PreparedInput {
    PressureFrame frame;              // target_rows x target_cols, normalized
    std::vector<double> joint_vector;  // 2J, (row, col) pairs scaled by target dims
    bool joints_present = false;
};

// Joint vector for a frame already at target geometry.
std::vector<double> joint_vector(const std::optional<JointSet>& joints, int joint_count, int rows, int cols);

PreparedInput preprocess_pipeline(const Sample& sample, const PreprocessConfig& cfg,
                                  std::optional<double> dataset_max, int joint_count = kDefaultJointCount);

// Normalization + joint vector for a sample produced by prepare_geometry
// (optionally augmented afterwards).
PreparedInput finalize_prepared(const Sample& geometric, const PreprocessConfig& cfg,
                                std::optional<double> dataset_max, int joint_count = kDefaultJointCount);

}  // namespace massnet
