#include "massnet/training.hpp"

#include "massnet/config.hpp"
#include "massnet/errors.hpp"
#include "massnet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

namespace massnet::train {

using nn::Tensor;

std::string_view to_string(ContrastiveVariant v) {
    switch (v) {
        case ContrastiveVariant::none: return "none";
        case ContrastiveVariant::supcon: return "supcon";
        case ContrastiveVariant::masscon: return "masscon";
    }
    return "?";
}

ContrastiveVariant contrastive_variant_from_string(std::string_view s) {
    if (s == "none") return ContrastiveVariant::none;
    if (s == "supcon") return ContrastiveVariant::supcon;
    if (s == "masscon") return ContrastiveVariant::masscon;
    throw ArgumentError("unknown contrastive variant '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
    if (!(base_lr > 0.0) || !(decay_factor > 0.0) || !(tau > 0.0)) throw ConfigError("rates must be > 0");
    if (decay_every < 1) throw ConfigError("decay_every must be >= 1");
    if (warmup_epochs < 0) throw ConfigError("warmup_epochs must be >= 0");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2 (the contrastive loss needs pairs)");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
    if (freeze_norm_epoch < -1) throw ConfigError("freeze_norm_epoch must be >= -1");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    if (epoch < 0) throw ArgumentError("epoch must be >= 0, got " + std::to_string(epoch));
    if (epoch < cfg.warmup_epochs) return cfg.base_lr * (epoch + 1) / cfg.warmup_epochs;
    const int e_post = epoch - cfg.warmup_epochs;
    return cfg.base_lr * std::pow(cfg.decay_factor, e_post / cfg.decay_every);
}

std::string to_json_line(const EpochRecord& r) {
    json j{{"epoch", r.epoch}, {"lr", r.lr}, {"l_mae", r.l_mae}, {"l_con", r.l_con}, {"l_all", r.l_all}};
    j["val_mae"] = r.val_mae ? json(*r.val_mae) : json(nullptr);
    j["val_mape"] = r.val_mape ? json(*r.val_mape) : json(nullptr);
    return j.dump();
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------
Adam::Adam(std::vector<nn::Parameter*> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* p : params_) {
        m_.emplace_back(p->value.numel(), 0.0);
        v_.emplace_back(p->value.numel(), 0.0);
    }
}

void Adam::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto value = params_[k]->value.values();
        auto grad = params_[k]->grad.values();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double g = grad[i];
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            value[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
        }
    }
}

ModelSnapshot snapshot(nn::MassNet& model) {
    ModelSnapshot s;
    for (auto* p : model.parameters()) s.params.push_back(p->value);
    for (auto& b : model.buffers()) s.buffers.push_back(*b.tensor);
    return s;
}

void restore(nn::MassNet& model, const ModelSnapshot& snap) {
    auto params = model.parameters();
    auto buffers = model.buffers();
    if (params.size() != snap.params.size() || buffers.size() != snap.buffers.size()) {
        throw ArgumentError("snapshot does not match the model layout");
    }
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snap.params[i];
    for (std::size_t i = 0; i < buffers.size(); ++i) *buffers[i].tensor = snap.buffers[i];
}

// ---------------------------------------------------------------------------
// Batching and inference
// ---------------------------------------------------------------------------
namespace {

struct Batch {
    Tensor images;
    Tensor joints;
};

Batch assemble(const std::vector<PreparedInput>& inputs, int joint_count) {
    const int n = static_cast<int>(inputs.size());
    const int rows = inputs.front().frame.rows();
    const int cols = inputs.front().frame.cols();
    Batch b{Tensor({n, 1, rows, cols}), Tensor({n, 2 * joint_count})};
    const std::size_t plane = static_cast<std::size_t>(rows) * cols;
    for (int i = 0; i < n; ++i) {
        const auto v = inputs[static_cast<std::size_t>(i)].frame.values();
        if (v.size() != plane) throw ShapeError("inconsistent frame sizes within a batch");
        std::copy(v.begin(), v.end(), b.images.data() + static_cast<std::size_t>(i) * plane);
        const auto& jv = inputs[static_cast<std::size_t>(i)].joint_vector;
        std::copy(jv.begin(), jv.end(), b.joints.data() + static_cast<std::size_t>(i) * 2 * joint_count);
    }
    return b;
}

void append_line(const std::filesystem::path& path, const std::string& line) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw Error("cannot append to " + path.string());
    out << line << '\n';
}

}  // namespace

std::vector<double> predict(nn::MassNet& model, const InputSpec& spec, const Dataset& data, int batch_size) {
    if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
    std::vector<double> out;
    out.reserve(data.size());
    for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(batch_size));
        std::vector<PreparedInput> inputs;
        for (std::size_t i = start; i < end; ++i) {
            inputs.push_back(preprocess_pipeline(data[i], spec.preprocess, spec.dataset_max, spec.joint_count));
        }
        const Batch b = assemble(inputs, spec.joint_count);
        const auto result = model.forward(b.images, b.joints, nn::Mode::eval);
        out.insert(out.end(), result.predictions.begin(), result.predictions.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------
TrainResult train_model(const nn::ModelConfig& model_cfg, const PreprocessConfig& pre_cfg, const Dataset& train_set,
                        const Dataset* val_set, const TrainConfig& cfg, const TrainOptions& options) {
    cfg.validate();
    pre_cfg.validate();
    model_cfg.validate();
    if (train_set.empty()) throw ArgumentError("training set is empty");
    if (static_cast<std::size_t>(cfg.batch_size) > train_set.size()) {
        throw ArgumentError("batch_size " + std::to_string(cfg.batch_size) + " exceeds the training set size " +
                            std::to_string(train_set.size()));
    }
    if (model_cfg.input_rows != pre_cfg.target_rows || model_cfg.input_cols != pre_cfg.target_cols) {
        throw ConfigError("model input size must equal the preprocess target size");
    }

    TrainResult result{nn::MassNet(model_cfg, cfg.seed), {}, {pre_cfg, train_set.max_value(), model_cfg.joint_count}};
    if (!(result.input.dataset_max > 0.0)) throw ArgumentError("training frames are all zero");
    nn::MassNet& model = result.model;
    TrainState& state = result.state;
    const InputSpec& spec = result.input;
    const int J = model_cfg.joint_count;

    std::vector<Sample> geometric;
    geometric.reserve(train_set.size());
    double weight_sum = 0.0, weight_sq = 0.0;
    for (const auto& s : train_set.samples()) {
        geometric.push_back(prepare_geometry(s, pre_cfg));
        weight_sum += s.weight_kg;
        weight_sq += s.weight_kg * s.weight_kg;
    }
    const double n_train = static_cast<double>(train_set.size());
    const double weight_mean = weight_sum / n_train;
    const double weight_sd = std::sqrt(std::max(0.0, weight_sq / n_train - weight_mean * weight_mean));
    model.set_output_affine(weight_mean, weight_sd > 0.0 ? weight_sd : 1.0);

    if (options.run_dir) {
        std::filesystem::create_directories(*options.run_dir);
        std::ofstream(*options.run_dir / "history.jsonl", std::ios::trunc);
    }

    Adam optimizer(model.parameters());
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    const double lambda = cfg.effective_lambda();
    const bool contrastive = lambda > 0.0 && model_cfg.use_mass_branch;
    const bool has_val = val_set != nullptr && !val_set->empty();
    const int E = model_cfg.embedding_dim;

    ModelSnapshot last_good = snapshot(model);
    ModelSnapshot best = last_good;
    int since_best = 0;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr_at_epoch(cfg, epoch);
        const bool frozen = cfg.freeze_norm_epoch >= 0 && epoch >= cfg.freeze_norm_epoch;
        const nn::Mode norm_mode = frozen ? nn::Mode::eval : nn::Mode::train;
        try {
            std::shuffle(order.begin(), order.end(), rng);
            double sum_mae = 0.0, sum_con = 0.0;
            int steps = 0;
            for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
                const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
                if (end - start < 2) break;  // a lone leftover sample has no contrastive partner
                const std::size_t B = end - start;

                // Views are laid out [all first views, all second views].
                std::vector<PreparedInput> inputs(2 * B);
                std::vector<double> targets(2 * B);
                std::vector<std::string> subjects(2 * B);
                for (int v = 0; v < 2; ++v) {
                    for (std::size_t b = 0; b < B; ++b) {
                        const Sample& g = geometric[order[start + b]];
                        const std::size_t slot = v * B + b;
                        inputs[slot] = pre_cfg.augment.enabled
                                           ? finalize_prepared(augment_random(g, pre_cfg.augment, rng), pre_cfg,
                                                               spec.dataset_max, J)
                                           : finalize_prepared(g, pre_cfg, spec.dataset_max, J);
                        targets[slot] = g.weight_kg;
                        subjects[slot] = g.subject_id;
                    }
                }
                const Batch batch = assemble(inputs, J);

                model.zero_grad();
                const auto out = model.forward(batch.images, batch.joints, norm_mode);
                std::vector<double> grad_pred;
                const double l_mae = loss::mae_loss(out.predictions, targets, &grad_pred);
                double l_con = 0.0;
                Tensor grad_emb;
                if (contrastive) {
                    loss::ContrastiveBatch cb{out.embeddings.values(), E, subjects, targets, cfg.tau,
                                              cfg.contrastive == ContrastiveVariant::masscon};
                    std::vector<double> g;
                    l_con = loss::masscon_loss(cb, &g);
                    for (double& x : g) x *= lambda;
                    grad_emb = Tensor({static_cast<int>(2 * B), E}, std::move(g));
                }
                const double l_all = loss::overall_loss(l_mae, l_con, lambda).l_all;
                if (!std::isfinite(l_all)) throw NumericError("training loss is not finite");
                model.backward(grad_pred, contrastive ? &grad_emb : nullptr);
                optimizer.step(rec.lr);
                sum_mae += l_mae;
                sum_con += l_con;
                ++steps;
            }
            rec.l_mae = sum_mae / steps;
            rec.l_con = sum_con / steps;
            rec.l_all = loss::overall_loss(rec.l_mae, rec.l_con, lambda).l_all;

            if (has_val) {
                const auto preds = predict(model, spec, *val_set, cfg.batch_size);
                double mae = 0.0, mape = 0.0;
                for (std::size_t i = 0; i < preds.size(); ++i) {
                    const double t = (*val_set)[i].weight_kg;
                    mae += std::abs(preds[i] - t);
                    mape += std::abs(preds[i] - t) / t * 100.0;
                }
                rec.val_mae = mae / static_cast<double>(preds.size());
                rec.val_mape = mape / static_cast<double>(preds.size());
                if (!std::isfinite(*rec.val_mae)) throw NumericError("validation predictions are not finite");
            }
        } catch (const NumericError& e) {
            restore(model, last_good);
            state.diverged = true;
            state.stop_reason = std::string("diverged: ") + e.what();
            break;
        }

        last_good = snapshot(model);
        state.history.push_back(rec);
        state.epoch = epoch + 1;
        bool improved = !has_val;
        if (has_val && *rec.val_mae < state.best_val_mae) {
            state.best_val_mae = *rec.val_mae;
            improved = true;
        }
        if (improved) {
            state.best_epoch = epoch;
            best = last_good;
            since_best = 0;
        } else {
            ++since_best;
        }

        if (options.run_dir) {
            append_line(*options.run_dir / "history.jsonl", to_json_line(rec));
            save_checkpoint(*options.run_dir / "ckpt_last", model, spec);
            if (improved) save_checkpoint(*options.run_dir / "ckpt_best", model, spec);
        }
        if (options.on_epoch) options.on_epoch(rec);
        if (has_val && since_best >= cfg.early_stop_patience) {
            state.stop_reason = "early stop: no validation improvement for " + std::to_string(since_best) + " epochs";
            break;
        }
    }
    if (state.stop_reason.empty()) state.stop_reason = "max epochs reached";
    if (state.best_epoch >= 0) restore(model, best);
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoints: magic, u32 version, u64 + JSON meta, u64 tensor count, then per
// tensor: u32 + name, u32 rank, i32 dims, f64 values. Host byte order.
// ---------------------------------------------------------------------------
namespace {

constexpr char kMagic[8] = {'M', 'A', 'S', 'S', 'N', 'E', 'T', 'C'};

template <class T>
void put(std::string& buf, T v) {
    buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
public:
    Reader(const std::string& buf, const std::filesystem::path& path) : buf_(buf), path_(path) {}

    template <class T>
    T get() {
        T v;
        need(sizeof(T));
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == buf_.size(); }

private:
    void need(std::size_t n) const {
        if (buf_.size() - pos_ < n) throw CheckpointError("checkpoint truncated: " + path_.string());
    }
    const std::string& buf_;
    const std::filesystem::path& path_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, nn::MassNet& model, const InputSpec& input) {
    json meta{{"model", model.config()},
              {"preprocess", input.preprocess},
              {"dataset_max", input.dataset_max},
              {"joint_count", input.joint_count}};
    const std::string meta_s = meta.dump();

    std::string buf(kMagic, sizeof(kMagic));
    put<std::uint32_t>(buf, kCheckpointVersion);
    put<std::uint64_t>(buf, meta_s.size());
    buf += meta_s;

    std::vector<std::pair<std::string, const Tensor*>> tensors;
    for (auto* p : model.parameters()) tensors.emplace_back(p->name, &p->value);
    for (auto& b : model.buffers()) tensors.emplace_back(b.name, b.tensor);
    put<std::uint64_t>(buf, tensors.size());
    for (const auto& [name, t] : tensors) {
        put<std::uint32_t>(buf, static_cast<std::uint32_t>(name.size()));
        buf += name;
        put<std::uint32_t>(buf, static_cast<std::uint32_t>(t->rank()));
        for (int d : t->shape()) put<std::int32_t>(buf, d);
        buf.append(reinterpret_cast<const char*>(t->data()), t->numel() * sizeof(double));
    }

    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw CheckpointError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw CheckpointError("checkpoint not found: " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Reader r(buf, path);
    if (r.bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
        throw CheckpointError("not a checkpoint file: " + path.string());
    }
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw CheckpointError("checkpoint version mismatch in " + path.string() + ": expected " +
                              std::to_string(kCheckpointVersion) + ", found " + std::to_string(version));
    }
    const auto meta_len = r.get<std::uint64_t>();
    json meta;
    nn::ModelConfig model_cfg;
    InputSpec input;
    try {
        meta = json::parse(r.bytes(meta_len));
        meta.at("model").get_to(model_cfg);
        meta.at("preprocess").get_to(input.preprocess);
        input.dataset_max = meta.at("dataset_max").get<double>();
        input.joint_count = meta.at("joint_count").get<int>();
    } catch (const json::exception& e) {
        throw CheckpointError("bad checkpoint metadata in " + path.string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw CheckpointError("bad checkpoint metadata in " + path.string() + ": " + e.what());
    }

    const auto count = r.get<std::uint64_t>();
    std::vector<std::pair<std::string, Tensor>> staged;
    for (std::uint64_t k = 0; k < count; ++k) {
        std::string name = r.bytes(r.get<std::uint32_t>());
        const auto rank = r.get<std::uint32_t>();
        if (rank > 8) throw CheckpointError("corrupt tensor header for " + name);
        std::vector<int> shape(rank);
        std::size_t numel = 1;
        for (auto& d : shape) {
            d = r.get<std::int32_t>();
            if (d < 0) throw CheckpointError("corrupt tensor header for " + name);
            numel *= static_cast<std::size_t>(d);
        }
        const std::string raw = r.bytes(numel * sizeof(double));
        std::vector<double> values(numel);
        std::memcpy(values.data(), raw.data(), raw.size());
        staged.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
    }
    if (!r.at_end()) throw CheckpointError("trailing bytes in checkpoint " + path.string());

    Checkpoint ck{nn::MassNet(model_cfg, 0), input};
    std::vector<std::pair<std::string, Tensor*>> slots;
    for (auto* p : ck.model.parameters()) slots.emplace_back(p->name, &p->value);
    for (auto& b : ck.model.buffers()) slots.emplace_back(b.name, b.tensor);
    if (slots.size() != staged.size()) {
        throw CheckpointError("checkpoint holds " + std::to_string(staged.size()) + " tensors, model expects " +
                              std::to_string(slots.size()));
    }
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i].first != staged[i].first) {
            throw CheckpointError("checkpoint tensor '" + staged[i].first + "' where '" + slots[i].first + "' expected");
        }
        if (slots[i].second->shape() != staged[i].second.shape()) {
            throw CheckpointError("shape mismatch for " + slots[i].first);
        }
    }
    for (std::size_t i = 0; i < slots.size(); ++i) *slots[i].second = std::move(staged[i].second);
    return ck;
}

}  // namespace massnet::train
