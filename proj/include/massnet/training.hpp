#pragma once

#include "massnet/data_model.hpp"
#include "massnet/network.hpp"
#include "massnet/preprocess.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace massnet::train {

enum class ContrastiveVariant { none, supcon, masscon };

std::string_view to_string(ContrastiveVariant v);
ContrastiveVariant contrastive_variant_from_string(std::string_view s);

struct TrainConfig {
    double base_lr = 3e-4;
    double decay_factor = 0.25;
    int decay_every = 5;
    int warmup_epochs = 3;
    int batch_size = 16;
    int max_epochs = 60;
    int early_stop_patience = 15;
    // From this epoch on the normalization layers use their running statistics
    // in training too, so a prediction no longer depends on its batch mates.
    // -1 keeps batch statistics throughout.
    int freeze_norm_epoch = -1;
    double lambda = 0.25;
    double tau = 0.1;
    ContrastiveVariant contrastive = ContrastiveVariant::masscon;
    std::uint64_t seed = 0;

    void validate() const;
    // lambda with the variant folded in: "none" trains with a zero weight.
    double effective_lambda() const { return contrastive == ContrastiveVariant::none ? 0.0 : lambda; }
};

double lr_at_epoch(const TrainConfig& cfg, int epoch);

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double l_mae = 0.0;
    double l_con = 0.0;
    double l_all = 0.0;
    std::optional<double> val_mae;
    std::optional<double> val_mape;

    bool operator==(const EpochRecord&) const = default;
};

std::string to_json_line(const EpochRecord& r);

struct TrainState {
    int epoch = 0;  // completed epochs
    double best_val_mae = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    std::vector<EpochRecord> history;
    bool diverged = false;
    std::string stop_reason;
};

// Adam with bias correction; state keyed by parameter order.
class Adam {
public:
    Adam(std::vector<nn::Parameter*> params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(double lr);

private:
    std::vector<nn::Parameter*> params_;
    std::vector<std::vector<double>> m_, v_;
    double beta1_, beta2_, eps_;
    long t_ = 0;
};

// Copies of every parameter and buffer, for best-epoch / last-good restore.
struct ModelSnapshot {
    std::vector<nn::Tensor> params;
    std::vector<nn::Tensor> buffers;
};
ModelSnapshot snapshot(nn::MassNet& model);
void restore(nn::MassNet& model, const ModelSnapshot& snap);

// Preprocessing context shared by training, evaluation and prediction.
struct InputSpec {
    PreprocessConfig preprocess;
    double dataset_max = 1.0;
    int joint_count = kDefaultJointCount;
};

// Inference in eval mode, in chunks of batch_size.
std::vector<double> predict(nn::MassNet& model, const InputSpec& spec, const Dataset& data, int batch_size = 16);

struct TrainOptions {
    // When set: history.jsonl, ckpt_best and ckpt_last are written here.
    std::optional<std::filesystem::path> run_dir;
    std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
    nn::MassNet model;  // best-validation parameters (last epoch when there is no validation set)
    TrainState state;
    InputSpec input;
};

// Two augmented views per sample, L_all = L_MAE + lambda * L_con, Adam at
// lr_at_epoch. Deterministic for a given seed. Model parameters are
// initialized from cfg.seed.
TrainResult train_model(const nn::ModelConfig& model_cfg, const PreprocessConfig& pre_cfg, const Dataset& train_set,
                        const Dataset* val_set, const TrainConfig& cfg, const TrainOptions& options = {});

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    nn::MassNet model;
    InputSpec input;
};

void save_checkpoint(const std::filesystem::path& path, nn::MassNet& model, const InputSpec& input);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace massnet::train
