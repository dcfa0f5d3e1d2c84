#include "massnet/config.hpp"

#include "massnet/errors.hpp"

#include <fstream>
#include <initializer_list>

namespace massnet {

namespace {

void reject_unknown(const json& j, std::string_view section, std::initializer_list<std::string_view> known) {
    if (!j.is_object()) throw ConfigError(std::string(section) + ": expected an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (auto k : known) ok = ok || k == key;
        if (!ok) throw ConfigError(std::string(section) + ": unknown key '" + key + "'");
    }
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end()) {
        try {
            out = it->get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(std::string("key '") + key + "': " + e.what());
        }
    }
}

}  // namespace

namespace nn {

void to_json(json& j, const ModelConfig& c) {
    j = json{{"n_sensing_layers", c.n_sensing_layers},
             {"stem_channels", c.stem_channels},
             {"trunk_channels", c.trunk_channels},
             {"bottleneck_ratio", c.bottleneck_ratio},
             {"deep_feature_dim", c.deep_feature_dim},
             {"joint_feature_dim", c.joint_feature_dim},
             {"joint_hidden1", c.joint_hidden1},
             {"joint_hidden2", c.joint_hidden2},
             {"embedding_dim", c.embedding_dim},
             {"cbam_reduction", c.cbam_reduction},
             {"cbam_spatial_kernel", c.cbam_spatial_kernel},
             {"joint_count", c.joint_count},
             {"use_joint_branch", c.use_joint_branch},
             {"use_mass_branch", c.use_mass_branch},
             {"leaky_slope", c.leaky_slope},
             {"input_rows", c.input_rows},
             {"input_cols", c.input_cols}};
}

void from_json(const json& j, ModelConfig& c) {
    reject_unknown(j, "model",
                   {"n_sensing_layers", "stem_channels", "trunk_channels", "bottleneck_ratio", "deep_feature_dim",
                    "joint_feature_dim", "joint_hidden1", "joint_hidden2", "embedding_dim", "cbam_reduction",
                    "cbam_spatial_kernel", "joint_count", "use_joint_branch", "use_mass_branch", "leaky_slope",
                    "input_rows", "input_cols"});
    read(j, "n_sensing_layers", c.n_sensing_layers);
    read(j, "stem_channels", c.stem_channels);
    read(j, "trunk_channels", c.trunk_channels);
    read(j, "bottleneck_ratio", c.bottleneck_ratio);
    read(j, "deep_feature_dim", c.deep_feature_dim);
    read(j, "joint_feature_dim", c.joint_feature_dim);
    read(j, "joint_hidden1", c.joint_hidden1);
    read(j, "joint_hidden2", c.joint_hidden2);
    read(j, "embedding_dim", c.embedding_dim);
    read(j, "cbam_reduction", c.cbam_reduction);
    read(j, "cbam_spatial_kernel", c.cbam_spatial_kernel);
    read(j, "joint_count", c.joint_count);
    read(j, "use_joint_branch", c.use_joint_branch);
    read(j, "use_mass_branch", c.use_mass_branch);
    read(j, "leaky_slope", c.leaky_slope);
    read(j, "input_rows", c.input_rows);
    read(j, "input_cols", c.input_cols);
}

}  // namespace nn

void to_json(json& j, const PreprocessConfig& c) {
    j = json{{"upsample_factor", c.upsample_factor},
             {"smooth", c.smooth},
             {"gaussian_kernel", c.gaussian_kernel},
             {"gaussian_sigma", c.gaussian_sigma},
             {"target_rows", c.target_rows},
             {"target_cols", c.target_cols},
             {"normalization", std::string(to_string(c.normalization))},
             {"augment",
              {{"enabled", c.augment.enabled},
               {"flip_prob", c.augment.flip_prob},
               {"max_rotation_deg", c.augment.max_rotation_deg},
               {"max_shift_frac", c.augment.max_shift_frac}}}};
}

void from_json(const json& j, PreprocessConfig& c) {
    reject_unknown(j, "preprocess",
                   {"upsample_factor", "smooth", "gaussian_kernel", "gaussian_sigma", "target_rows", "target_cols",
                    "normalization", "augment"});
    read(j, "upsample_factor", c.upsample_factor);
    read(j, "smooth", c.smooth);
    read(j, "gaussian_kernel", c.gaussian_kernel);
    read(j, "gaussian_sigma", c.gaussian_sigma);
    read(j, "target_rows", c.target_rows);
    read(j, "target_cols", c.target_cols);
    if (j.contains("normalization")) {
        try {
            c.normalization = normalization_from_string(j.at("normalization").get<std::string>());
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
    }
    if (j.contains("augment")) {
        const json& a = j.at("augment");
        reject_unknown(a, "preprocess.augment", {"enabled", "flip_prob", "max_rotation_deg", "max_shift_frac"});
        read(a, "enabled", c.augment.enabled);
        read(a, "flip_prob", c.augment.flip_prob);
        read(a, "max_rotation_deg", c.augment.max_rotation_deg);
        read(a, "max_shift_frac", c.augment.max_shift_frac);
    }
}

namespace train {

void to_json(json& j, const TrainConfig& c) {
    j = json{{"base_lr", c.base_lr},
             {"decay_factor", c.decay_factor},
             {"decay_every", c.decay_every},
             {"warmup_epochs", c.warmup_epochs},
             {"batch_size", c.batch_size},
             {"max_epochs", c.max_epochs},
             {"early_stop_patience", c.early_stop_patience},
             {"freeze_norm_epoch", c.freeze_norm_epoch},
             {"lambda", c.lambda},
             {"tau", c.tau},
             {"contrastive", std::string(to_string(c.contrastive))},
             {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
    reject_unknown(j, "train",
                   {"base_lr", "decay_factor", "decay_every", "warmup_epochs", "batch_size", "max_epochs",
                    "early_stop_patience", "freeze_norm_epoch", "lambda", "tau", "contrastive", "seed"});
    read(j, "base_lr", c.base_lr);
    read(j, "decay_factor", c.decay_factor);
    read(j, "decay_every", c.decay_every);
    read(j, "warmup_epochs", c.warmup_epochs);
    read(j, "batch_size", c.batch_size);
    read(j, "max_epochs", c.max_epochs);
    read(j, "early_stop_patience", c.early_stop_patience);
    read(j, "freeze_norm_epoch", c.freeze_norm_epoch);
    read(j, "lambda", c.lambda);
    read(j, "tau", c.tau);
    read(j, "seed", c.seed);
    if (j.contains("contrastive")) {
        try {
            c.contrastive = contrastive_variant_from_string(j.at("contrastive").get<std::string>());
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
    }
}

}  // namespace train

void to_json(json& j, const SplitConfig& c) {
    j = json{{"strategy", std::string(to_string(c.strategy))},
             {"n_bins", c.n_bins},
             {"k", c.k},
             {"fold", c.fold},
             {"held_subject", c.held_subject},
             {"seed", c.seed}};
    if (c.n_test) j["n_test"] = *c.n_test;
}

void from_json(const json& j, SplitConfig& c) {
    reject_unknown(j, "split", {"strategy", "n_bins", "n_test", "k", "fold", "held_subject", "seed"});
    if (j.contains("strategy")) {
        try {
            c.strategy = split_strategy_from_string(j.at("strategy").get<std::string>());
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
    }
    read(j, "n_bins", c.n_bins);
    if (j.contains("n_test")) c.n_test = j.at("n_test").get<int>();
    read(j, "k", c.k);
    read(j, "fold", c.fold);
    read(j, "held_subject", c.held_subject);
    read(j, "seed", c.seed);
}

void to_json(json& j, const ExperimentConfig& c) {
    j = json{{"name", c.name},
             {"dataset", {{"path", c.dataset_path.string()}, {"format", std::string(to_string(c.dataset_format))}}},
             {"split", c.split},
             {"preprocess", c.preprocess},
             {"model", c.model},
             {"train", c.train},
             {"output_dir", c.output_dir.string()}};
}

void from_json(const json& j, ExperimentConfig& c) {
    reject_unknown(j, "experiment", {"name", "dataset", "split", "preprocess", "model", "train", "output_dir"});
    read(j, "name", c.name);
    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        reject_unknown(d, "dataset", {"path", "format"});
        if (d.contains("path")) c.dataset_path = d.at("path").get<std::string>();
        if (d.contains("format")) {
            try {
                c.dataset_format = format_from_string(d.at("format").get<std::string>());
            } catch (const Error& e) {
                throw ConfigError(e.what());
            }
        }
    }
    if (j.contains("split")) j.at("split").get_to(c.split);
    if (j.contains("preprocess")) j.at("preprocess").get_to(c.preprocess);
    if (j.contains("model")) j.at("model").get_to(c.model);
    if (j.contains("train")) j.at("train").get_to(c.train);
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
}

void ExperimentConfig::validate() const {
    if (name.empty() || name.find('/') != std::string::npos) throw ConfigError("run name must be a plain, non-empty name");
    if (dataset_path.empty()) throw ConfigError("dataset.path is required");
    try {
        preprocess.validate();
        model.validate();
        train.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    if (model.input_rows != preprocess.target_rows || model.input_cols != preprocess.target_cols) {
        throw ConfigError("model input size must equal the preprocess target size");
    }
}

ExperimentConfig default_experiment(SplitStrategy strategy) {
    ExperimentConfig c;
    c.split.strategy = strategy;
    switch (strategy) {
        case SplitStrategy::weight_binned:
            c.model.n_sensing_layers = 4;
            c.train.base_lr = 3e-4;
            c.dataset_format = FormatId::slp_pm;
            break;
        case SplitStrategy::loso:
            c.model.n_sensing_layers = 8;
            c.train.base_lr = 5e-4;
            break;
        case SplitStrategy::random_kfold:
            c.model.n_sensing_layers = 6;
            c.train.base_lr = 2e-4;
            break;
    }
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    ExperimentConfig cfg;
    try {
        json j = json::parse(in);
        j.get_to(cfg);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return cfg;
}

void save_experiment_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << json(cfg).dump(2) << '\n';
}

SplitSpec resolve_split(const Dataset& dataset, const SplitConfig& cfg) {
    switch (cfg.strategy) {
        case SplitStrategy::weight_binned:
            return split_weight_binned(dataset, cfg.n_bins, cfg.seed, cfg.n_test);
        case SplitStrategy::loso: {
            const std::string held = cfg.held_subject.empty() ? *dataset.subjects().begin() : cfg.held_subject;
            return split_loso(dataset, held);
        }
        case SplitStrategy::random_kfold: {
            auto folds = split_random_kfold(dataset, cfg.k, cfg.seed);
            if (cfg.fold < 0 || cfg.fold >= static_cast<int>(folds.size())) {
                throw ConfigError("fold " + std::to_string(cfg.fold) + " out of range for k=" + std::to_string(cfg.k));
            }
            return folds[static_cast<std::size_t>(cfg.fold)];
        }
    }
    throw ConfigError("unknown split strategy");
}

}  // namespace massnet
