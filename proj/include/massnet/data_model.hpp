#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace massnet {

// ---------------------------------------------------------------------------
// PressureFrame: a rectangular grid of non-negative sensor readings, stored
// row-major. One sensing unit is one pixel.
// ---------------------------------------------------------------------------
class PressureFrame {
public:
    PressureFrame() = default;
    PressureFrame(int rows, int cols, double fill = 0.0);
    PressureFrame(int rows, int cols, std::vector<double> values);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    double& at(int r, int c) { return values_[static_cast<std::size_t>(r) * cols_ + c]; }
    double at(int r, int c) const { return values_[static_cast<std::size_t>(r) * cols_ + c]; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    double sum() const;
    double max() const;

    // Optional physical geometry, meters per cell.
    std::optional<double> pitch_row_m;
    std::optional<double> pitch_col_m;

    // Throws FormatError when any value is negative or non-finite.
    void validate() const;

    bool operator==(const PressureFrame& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && values_ == other.values_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> values_;
};

struct JointCoord {
    double row = 0.0;
    double col = 0.0;
    bool operator==(const JointCoord&) const = default;
};

// Ordered joint positions in frame pixel coordinates. Coordinates may fall
// outside the frame after augmentation; callers can ask, nothing is clamped.
struct JointSet {
    std::vector<JointCoord> coords;

    int count() const { return static_cast<int>(coords.size()); }
    bool outside(int rows, int cols) const;
    bool operator==(const JointSet&) const = default;
};

inline constexpr int kDefaultJointCount = 14;

enum class Posture { supine, left_side, right_side, prone, other };

std::string_view to_string(Posture p);
Posture posture_from_string(std::string_view s);
// Three-way grouping used by posture breakdowns: supine / side / prone (other
// postures report as "other").
std::string_view posture_group(Posture p);

struct Sample {
    PressureFrame frame;
    std::string subject_id;
    double weight_kg = 0.0;
    Posture posture = Posture::supine;
    std::optional<JointSet> joints;
    std::optional<std::int64_t> timestamp;

    void validate() const;
};

enum class FormatId { slp_pm, massnet_static, massnet_dynamic, synthetic };

std::string_view to_string(FormatId f);
FormatId format_from_string(std::string_view s);

// Immutable after construction. Subjects are derived from the samples.
class Dataset {
public:
    Dataset() = default;
    Dataset(FormatId format, std::vector<Sample> samples);

    FormatId format() const { return format_; }
    const std::vector<Sample>& samples() const { return samples_; }
    const Sample& operator[](std::size_t i) const { return samples_[i]; }
    std::size_t size() const { return samples_.size(); }
    bool empty() const { return samples_.empty(); }

    const std::set<std::string>& subjects() const { return subjects_; }
    std::vector<std::size_t> indices_of_subject(const std::string& subject) const;
    // Largest pixel value over the whole dataset (used for normalization).
    double max_value() const;

    Dataset subset(std::span<const std::size_t> indices) const;

private:
    FormatId format_ = FormatId::synthetic;
    std::vector<Sample> samples_;
    std::set<std::string> subjects_;
};

// ---------------------------------------------------------------------------
// On-disk formats
// ---------------------------------------------------------------------------

// Native layout: meta.json + frames/<id>.csv + optional joints/<id>.json.
// SLP layout: <root>/<5-digit subject>/PMarray/<cover>/<6-digit frame>.npy with
// subject weights in <root>/physiqueData.npy.
Dataset load_dataset(const std::filesystem::path& root, FormatId format);

// Writes the native layout. Values are written in shortest round-trip form, so
// save followed by load reproduces every value bit-exactly.
void save_dataset(const Dataset& dataset, const std::filesystem::path& root);

// Frames as CSV: one grid row per line, comma-separated.
PressureFrame read_frame_csv(const std::filesystem::path& path);
void write_frame_csv(const PressureFrame& frame, const std::filesystem::path& path);

// Minimal NumPy .npy reader for 2-D numeric arrays (little-endian f4/f8/u1/u2/
// i2/i4/i8, C or Fortran order). Returns (rows, cols, row-major values).
struct NpyArray {
    std::vector<std::size_t> shape;
    std::vector<double> values;  // row-major
};
NpyArray read_npy(const std::filesystem::path& path);
void write_npy(const std::filesystem::path& path, const std::vector<std::size_t>& shape,
               std::span<const double> values);

// Column of physiqueData.npy holding weight in kg.
inline constexpr std::size_t kSlpWeightColumn = 3;

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------
enum class SplitStrategy { weight_binned, loso, random_kfold };

std::string_view to_string(SplitStrategy s);
SplitStrategy split_strategy_from_string(std::string_view s);

struct SplitSpec {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
    SplitStrategy strategy = SplitStrategy::random_kfold;
    std::uint64_t seed = 0;

    bool operator==(const SplitSpec&) const = default;
};

// One subject per bin goes to validation; test subjects come from the most
// populous bins. n_test defaults to round(n_subjects * 8 / 102), the share that
// yields the 84:10:8 ratio on a 102-subject corpus.
SplitSpec split_weight_binned(const Dataset& dataset, int n_bins, std::uint64_t seed,
                              std::optional<int> n_test = std::nullopt);
SplitSpec split_loso(const Dataset& dataset, const std::string& held_subject);
std::vector<SplitSpec> split_random_kfold(const Dataset& dataset, int k, std::uint64_t seed);

// Throws SplitError when partitions overlap or leave the dataset's index range,
// and, when subject_disjoint is set, when any subject spans two partitions.
void check_split(const Dataset& dataset, const SplitSpec& split, bool subject_disjoint);

}  // namespace massnet
