#pragma once

#include "massnet/data_model.hpp"
#include "massnet/network.hpp"
#include "massnet/preprocess.hpp"
#include "massnet/training.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace massnet {

using nlohmann::json;

namespace nn {
void to_json(json& j, const ModelConfig& c);
void from_json(const json& j, ModelConfig& c);
}  // namespace nn

namespace train {
void to_json(json& j, const TrainConfig& c);
void from_json(const json& j, TrainConfig& c);
}  // namespace train

struct SplitConfig {
    SplitStrategy strategy = SplitStrategy::weight_binned;
    int n_bins = 10;
    std::optional<int> n_test;
    int k = 5;
    int fold = 0;
    std::string held_subject;  // loso
    std::uint64_t seed = 0;
};

// Everything one experiment run needs. Serialized as JSON.
struct ExperimentConfig {
    std::string name = "run";
    std::filesystem::path dataset_path;
    FormatId dataset_format = FormatId::massnet_static;
    SplitConfig split;
    PreprocessConfig preprocess;
    nn::ModelConfig model;
    train::TrainConfig train;
    std::filesystem::path output_dir = "runs";

    void validate() const;
};

// Per-dataset defaults: depth 4 / 8 / 6 and lr 3e-4 / 5e-4 / 2e-4 for SLP /
// LOSO / random k-fold.
ExperimentConfig default_experiment(SplitStrategy strategy);

// JSON conversions. Unknown keys are rejected; absent keys keep their
// defaults.
void to_json(json& j, const PreprocessConfig& c);
void from_json(const json& j, PreprocessConfig& c);
void to_json(json& j, const SplitConfig& c);
void from_json(const json& j, SplitConfig& c);
void to_json(json& j, const ExperimentConfig& c);
void from_json(const json& j, ExperimentConfig& c);

// Throws ConfigError naming the file when it is missing or malformed.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
void save_experiment_config(const ExperimentConfig& cfg, const std::filesystem::path& path);

// Resolves cfg.split against the dataset.
SplitSpec resolve_split(const Dataset& dataset, const SplitConfig& cfg);

}  // namespace massnet
