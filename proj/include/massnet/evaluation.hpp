#pragma once

#include "massnet/data_model.hpp"
#include "massnet/network.hpp"
#include "massnet/training.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace massnet::eval {

struct GroupStats {
    double mae = 0.0;
    double mape = 0.0;
    int n = 0;
};

struct SubjectStats {
    double mae = 0.0;
    int n = 0;
};

// Stds are population sigmas of the per-sample absolute (percentage) errors.
struct MetricsReport {
    double mae_mean = 0.0;
    double mae_std = 0.0;
    double mape_mean = 0.0;
    double mape_std = 0.0;
    int n = 0;
    std::map<std::string, GroupStats> per_posture;  // supine / side / prone / other
    std::map<std::string, SubjectStats> per_subject;

    std::string to_json() const;
    std::string to_text() const;
};

MetricsReport compute_metrics(std::span<const double> preds, std::span<const double> targets,
                              std::span<const Posture> postures, std::span<const std::string> subjects);
// Postures and subjects taken from the dataset, targets from its labels.
MetricsReport compute_metrics(std::span<const double> preds, const Dataset& data);

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------
struct LinearFit {
    double a = 0.0;  // kg per sensor unit
    double b = 0.0;  // kg
    double predict(const PressureFrame& frame) const { return a * frame.sum() + b; }
};

// Least squares weight ~ a * sum(frame) + b.
LinearFit linear_fit_baseline(const Dataset& train);

inline constexpr std::size_t kStatFeatureCount = 14;
using StatFeatures = std::array<double, kStatFeatureCount>;

// sum, mean, std, max, contact area, 25/50/75/90th percentiles of nonzero
// values, centroid row, centroid col, row spread, col spread, peak count.
StatFeatures statistical_features(const PressureFrame& frame);

// Standardized statistical features into a 14-32-1 MLP trained with Adam on
// the absolute error.
class StatFeatureMlp {
public:
    struct Options {
        int hidden = 32;
        int epochs = 400;
        double lr = 1e-2;
        std::uint64_t seed = 0;
    };

    void fit(const Dataset& train, const Options& options);
    void fit(const Dataset& train) { fit(train, Options{}); }
    double predict(const PressureFrame& frame);

private:
    std::vector<double> forward_features(const PressureFrame& frame) const;
    StatFeatures mean_{}, scale_{};
    double target_mean_ = 0.0, target_scale_ = 1.0;
    nn::Linear fc1_, fc2_;
    nn::LeakyReLU act_;
};

// Anything that maps a dataset to per-sample weights.
class Regressor {
public:
    virtual ~Regressor() = default;
    virtual std::string name() const = 0;
    virtual std::vector<double> predict(const Dataset& data) = 0;
};

class MassNetRegressor : public Regressor {
public:
    MassNetRegressor(nn::MassNet model, train::InputSpec input) : model_(std::move(model)), input_(std::move(input)) {}
    std::string name() const override { return "massnet"; }
    std::vector<double> predict(const Dataset& data) override { return train::predict(model_, input_, data); }

private:
    nn::MassNet model_;
    train::InputSpec input_;
};

class LinearRegressor : public Regressor {
public:
    explicit LinearRegressor(LinearFit fit) : fit_(fit) {}
    std::string name() const override { return "linear_fit"; }
    std::vector<double> predict(const Dataset& data) override;

private:
    LinearFit fit_;
};

class StatFeatureRegressor : public Regressor {
public:
    explicit StatFeatureRegressor(StatFeatureMlp mlp) : mlp_(std::move(mlp)) {}
    std::string name() const override { return "statistical-features (reconstruction)"; }
    std::vector<double> predict(const Dataset& data) override;

private:
    StatFeatureMlp mlp_;
};

MetricsReport evaluate_report(Regressor& regressor, const Dataset& test);

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------
enum class AblationAxis { branches, loss_variant, depth_scan, joint_noise };

std::string_view to_string(AblationAxis a);
AblationAxis ablation_axis_from_string(std::string_view s);

struct AblationCell {
    std::string label;
    nn::ModelConfig model;
    train::TrainConfig train;
    double joint_noise_l1 = 0.0;  // px, applied to test joints only
    MetricsReport report;
    std::vector<train::EpochRecord> history;
};

struct AblationTable {
    AblationAxis axis = AblationAxis::branches;
    std::vector<AblationCell> cells;

    std::string to_csv() const;
    std::string to_json() const;
    std::string to_text() const;
};

// Joint localization errors emulated by the noise axis, px (per-joint L1).
inline constexpr std::array<double, 3> kJointNoiseL1 = {7.45, 7.72, 5.25};

// Cell configurations of an axis without training anything.
std::vector<AblationCell> plan_ablation(AblationAxis axis, const nn::ModelConfig& model, const train::TrainConfig& cfg);

struct AblationData {
    const Dataset* train = nullptr;
    const Dataset* val = nullptr;  // optional
    const Dataset* test = nullptr;
};

// Every cell is a full train + test evaluation with the shared seed. The noise
// axis trains the dual-branch model once and evaluates it at each noise level.
AblationTable run_ablation(AblationAxis axis, const nn::ModelConfig& model, const PreprocessConfig& pre,
                           const train::TrainConfig& cfg, const AblationData& data,
                           const std::optional<std::filesystem::path>& run_dir = std::nullopt);

}  // namespace massnet::eval
