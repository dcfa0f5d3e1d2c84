#include "massnet/evaluation.hpp"

#include "massnet/errors.hpp"
#include "massnet/losses.hpp"
#include "massnet/preprocess.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>

namespace massnet::eval {

using nlohmann::json;

namespace {

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double pop_std(std::span<const double> v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

double percentile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------
MetricsReport compute_metrics(std::span<const double> preds, std::span<const double> targets,
                              std::span<const Posture> postures, std::span<const std::string> subjects) {
    if (preds.empty()) throw ArgumentError("metrics need at least one prediction");
    if (preds.size() != targets.size() || postures.size() != preds.size() || subjects.size() != preds.size()) {
        throw ArgumentError("metrics inputs differ in length");
    }
    std::vector<double> abs_err(preds.size()), pct_err(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (!(targets[i] > 0.0)) throw ArgumentError("target weight must be > 0 for MAPE, got " + std::to_string(targets[i]));
        abs_err[i] = std::abs(preds[i] - targets[i]);
        pct_err[i] = abs_err[i] / targets[i] * 100.0;
    }
    MetricsReport r;
    r.n = static_cast<int>(preds.size());
    r.mae_mean = mean_of(abs_err);
    r.mae_std = pop_std(abs_err);
    r.mape_mean = mean_of(pct_err);
    r.mape_std = pop_std(pct_err);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        auto& g = r.per_posture[std::string(posture_group(postures[i]))];
        g.mae += abs_err[i];
        g.mape += pct_err[i];
        ++g.n;
        auto& s = r.per_subject[subjects[i]];
        s.mae += abs_err[i];
        ++s.n;
    }
    for (auto& [_, g] : r.per_posture) {
        g.mae /= g.n;
        g.mape /= g.n;
    }
    for (auto& [_, s] : r.per_subject) s.mae /= s.n;
    return r;
}

MetricsReport compute_metrics(std::span<const double> preds, const Dataset& data) {
    std::vector<double> targets;
    std::vector<Posture> postures;
    std::vector<std::string> subjects;
    for (const auto& s : data.samples()) {
        targets.push_back(s.weight_kg);
        postures.push_back(s.posture);
        subjects.push_back(s.subject_id);
    }
    return compute_metrics(preds, targets, postures, subjects);
}

std::string MetricsReport::to_json() const {
    json j{{"n", n}, {"mae_mean", mae_mean}, {"mae_std", mae_std}, {"mape_mean", mape_mean}, {"mape_std", mape_std}};
    j["per_posture"] = json::object();
    for (const auto& [k, g] : per_posture) j["per_posture"][k] = {{"mae", g.mae}, {"mape", g.mape}, {"n", g.n}};
    j["per_subject"] = json::object();
    for (const auto& [k, s] : per_subject) j["per_subject"][k] = {{"mae", s.mae}, {"n", s.n}};
    return j.dump(2);
}

std::string MetricsReport::to_text() const {
    std::string out = fmt::format("n={}  MAE {:.3f} ± {:.3f} kg  MAPE {:.2f} ± {:.2f} %\n", n, mae_mean, mae_std,
                                  mape_mean, mape_std);
    out += fmt::format("{:<10} {:>6} {:>10} {:>10}\n", "posture", "n", "MAE", "MAPE");
    for (const auto& [k, g] : per_posture) out += fmt::format("{:<10} {:>6} {:>10.3f} {:>10.2f}\n", k, g.n, g.mae, g.mape);
    return out;
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------
LinearFit linear_fit_baseline(const Dataset& train) {
    if (train.size() < 2) throw ArgumentError("linear fit needs at least 2 training samples, got " + std::to_string(train.size()));
    std::vector<double> s, w;
    for (const auto& smp : train.samples()) {
        s.push_back(smp.frame.sum());
        w.push_back(smp.weight_kg);
    }
    const double ms = mean_of(s), mw = mean_of(w);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        sxx += (s[i] - ms) * (s[i] - ms);
        sxy += (s[i] - ms) * (w[i] - mw);
    }
    if (!(sxx > 0.0)) throw ArgumentError("degenerate linear fit: all frame sums are identical");
    LinearFit f;
    f.a = sxy / sxx;
    f.b = mw - f.a * ms;
    return f;
}

StatFeatures statistical_features(const PressureFrame& frame) {
    const int R = frame.rows(), C = frame.cols();
    const auto v = frame.values();
    StatFeatures f{};
    const double total = frame.sum();
    const double mean = total / static_cast<double>(v.size());
    double var = 0.0, vmax = 0.0;
    std::vector<double> nonzero;
    for (double x : v) {
        var += (x - mean) * (x - mean);
        vmax = std::max(vmax, x);
        if (x > 0.0) nonzero.push_back(x);
    }
    std::sort(nonzero.begin(), nonzero.end());
    f[0] = total;
    f[1] = mean;
    f[2] = std::sqrt(var / static_cast<double>(v.size()));
    f[3] = vmax;
    f[4] = static_cast<double>(nonzero.size());
    f[5] = percentile(nonzero, 0.25);
    f[6] = percentile(nonzero, 0.50);
    f[7] = percentile(nonzero, 0.75);
    f[8] = percentile(nonzero, 0.90);

    double cr = (R - 1) / 2.0, cc = (C - 1) / 2.0, sr = 0.0, sc = 0.0;
    if (total > 0.0) {
        double mr = 0.0, mc = 0.0;
        for (int r = 0; r < R; ++r) {
            for (int c = 0; c < C; ++c) {
                mr += r * frame.at(r, c);
                mc += c * frame.at(r, c);
            }
        }
        cr = mr / total;
        cc = mc / total;
        double vr = 0.0, vc = 0.0;
        for (int r = 0; r < R; ++r) {
            for (int c = 0; c < C; ++c) {
                vr += (r - cr) * (r - cr) * frame.at(r, c);
                vc += (c - cc) * (c - cc) * frame.at(r, c);
            }
        }
        sr = std::sqrt(vr / total);
        sc = std::sqrt(vc / total);
    }
    f[9] = cr;
    f[10] = cc;
    f[11] = sr;
    f[12] = sc;

    // Local maxima above half the peak; ties are broken in raster order so a
    // plateau counts once.
    int peaks = 0;
    for (int r = 0; r < R; ++r) {
        for (int c = 0; c < C; ++c) {
            const double x = frame.at(r, c);
            if (!(x > 0.5 * vmax) || x <= 0.0) continue;
            bool is_peak = true;
            for (int dr = -1; dr <= 1 && is_peak; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr, cc2 = c + dc;
                    if ((dr == 0 && dc == 0) || rr < 0 || rr >= R || cc2 < 0 || cc2 >= C) continue;
                    const double y = frame.at(rr, cc2);
                    const bool earlier = dr < 0 || (dr == 0 && dc < 0);
                    if (y > x || (earlier && y == x)) {
                        is_peak = false;
                        break;
                    }
                }
            }
            peaks += is_peak;
        }
    }
    f[13] = peaks;
    return f;
}

std::vector<double> StatFeatureMlp::forward_features(const PressureFrame& frame) const {
    const auto raw = statistical_features(frame);
    std::vector<double> x(kStatFeatureCount);
    for (std::size_t k = 0; k < kStatFeatureCount; ++k) x[k] = (raw[k] - mean_[k]) / scale_[k];
    return x;
}

void StatFeatureMlp::fit(const Dataset& train, const Options& options) {
    if (train.size() < 2) throw ArgumentError("statistical-feature baseline needs at least 2 samples");
    const int n = static_cast<int>(train.size());
    const int F = static_cast<int>(kStatFeatureCount);
    std::vector<StatFeatures> raw;
    std::vector<double> targets;
    for (const auto& s : train.samples()) {
        raw.push_back(statistical_features(s.frame));
        targets.push_back(s.weight_kg);
    }
    for (int k = 0; k < F; ++k) {
        std::vector<double> col;
        for (const auto& r : raw) col.push_back(r[static_cast<std::size_t>(k)]);
        mean_[static_cast<std::size_t>(k)] = mean_of(col);
        const double sd = pop_std(col);
        scale_[static_cast<std::size_t>(k)] = sd > 0.0 ? sd : 1.0;
    }
    target_mean_ = mean_of(targets);
    const double tsd = pop_std(targets);
    target_scale_ = tsd > 0.0 ? tsd : 1.0;

    nn::Tensor x({n, F});
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < F; ++k) {
            x[static_cast<std::size_t>(i) * F + k] =
                (raw[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] - mean_[static_cast<std::size_t>(k)]) /
                scale_[static_cast<std::size_t>(k)];
        }
    }
    std::vector<double> y(targets.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = (targets[i] - target_mean_) / target_scale_;

    fc1_ = nn::Linear("stat.fc1", F, options.hidden);
    fc2_ = nn::Linear("stat.fc2", options.hidden, 1);
    std::mt19937_64 rng(options.seed);
    fc1_.init(rng);
    fc2_.init(rng);
    std::vector<nn::Parameter*> params;
    fc1_.collect(params);
    fc2_.collect(params);
    train::Adam adam(params);
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        for (auto* p : params) p->grad.zero();
        const nn::Tensor out = fc2_.forward(act_.forward(fc1_.forward(x)));
        std::vector<double> grad;
        loss::mae_loss(out.values(), y, &grad);
        fc1_.backward(act_.backward(fc2_.backward(nn::Tensor({n, 1}, std::move(grad)))));
        adam.step(options.lr);
    }
}

double StatFeatureMlp::predict(const PressureFrame& frame) {
    if (fc1_.in_features() == 0) throw ArgumentError("statistical-feature baseline used before fit");
    const nn::Tensor x({1, static_cast<int>(kStatFeatureCount)}, forward_features(frame));
    const nn::Tensor out = fc2_.forward(act_.forward(fc1_.forward(x)));
    return out[0] * target_scale_ + target_mean_;
}

std::vector<double> LinearRegressor::predict(const Dataset& data) {
    std::vector<double> out;
    for (const auto& s : data.samples()) out.push_back(fit_.predict(s.frame));
    return out;
}

std::vector<double> StatFeatureRegressor::predict(const Dataset& data) {
    std::vector<double> out;
    for (const auto& s : data.samples()) out.push_back(mlp_.predict(s.frame));
    return out;
}

MetricsReport evaluate_report(Regressor& regressor, const Dataset& test) {
    if (test.empty()) throw ArgumentError("test set is empty");
    const auto preds = regressor.predict(test);
    if (preds.size() != test.size()) throw ShapeError(regressor.name() + " returned the wrong number of predictions");
    return compute_metrics(preds, test);
}

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------
std::string_view to_string(AblationAxis a) {
    switch (a) {
        case AblationAxis::branches: return "branches";
        case AblationAxis::loss_variant: return "loss_variant";
        case AblationAxis::depth_scan: return "depth_scan";
        case AblationAxis::joint_noise: return "joint_noise";
    }
    return "?";
}

AblationAxis ablation_axis_from_string(std::string_view s) {
    for (auto a : {AblationAxis::branches, AblationAxis::loss_variant, AblationAxis::depth_scan, AblationAxis::joint_noise}) {
        if (to_string(a) == s) return a;
    }
    throw ArgumentError("unknown ablation axis '" + std::string(s) + "'");
}

std::vector<AblationCell> plan_ablation(AblationAxis axis, const nn::ModelConfig& model, const train::TrainConfig& cfg) {
    std::vector<AblationCell> cells;
    auto add = [&](std::string label, nn::ModelConfig m, train::TrainConfig t, double l1 = 0.0) {
        cells.push_back({std::move(label), m, t, l1, {}, {}});
    };
    switch (axis) {
        case AblationAxis::branches: {
            auto joint_only = model, mass_only = model, dual = model;
            joint_only.use_joint_branch = true;
            joint_only.use_mass_branch = false;
            mass_only.use_joint_branch = false;
            mass_only.use_mass_branch = true;
            dual.use_joint_branch = dual.use_mass_branch = true;
            add("joint-only", joint_only, cfg);
            add("mass-only", mass_only, cfg);
            add("dual", dual, cfg);
            break;
        }
        case AblationAxis::loss_variant: {
            auto none = cfg, sup = cfg, mass = cfg;
            none.contrastive = train::ContrastiveVariant::none;
            sup.contrastive = train::ContrastiveVariant::supcon;
            mass.contrastive = train::ContrastiveVariant::masscon;
            add("no ConL", model, none);
            add("SupCon", model, sup);
            add("MassCon", model, mass);
            break;
        }
        case AblationAxis::depth_scan:
            for (int d = 0; d <= 12; ++d) {
                auto m = model;
                m.n_sensing_layers = d;
                add("depth=" + std::to_string(d), m, cfg);
            }
            break;
        case AblationAxis::joint_noise: {
            auto dual = model;
            dual.use_joint_branch = dual.use_mass_branch = true;
            add("ground-truth joints", dual, cfg, 0.0);
            for (double l1 : kJointNoiseL1) add(fmt::format("joint L1={:.2f}px", l1), dual, cfg, l1);
            break;
        }
    }
    return cells;
}

namespace {

Dataset with_joint_noise(const Dataset& data, double l1, std::uint64_t seed) {
    if (l1 == 0.0) return data;
    const double sigma = joint_noise_sigma_for_l1(l1);
    std::mt19937_64 rng(seed);
    std::vector<Sample> samples = data.samples();
    for (auto& s : samples) {
        if (s.joints) s.joints = inject_joint_noise(*s.joints, sigma, rng);
    }
    return Dataset(data.format(), std::move(samples));
}

std::string slug(const std::string& label) {
    std::string out;
    for (char c : label) out += std::isalnum(static_cast<unsigned char>(c)) || c == '.' ? c : '_';
    return out;
}

}  // namespace

AblationTable run_ablation(AblationAxis axis, const nn::ModelConfig& model, const PreprocessConfig& pre,
                           const train::TrainConfig& cfg, const AblationData& data,
                           const std::optional<std::filesystem::path>& run_dir) {
    if (data.train == nullptr || data.test == nullptr) throw ArgumentError("ablation needs train and test sets");
    AblationTable table;
    table.axis = axis;
    table.cells = plan_ablation(axis, model, cfg);

    std::optional<train::TrainResult> shared;  // noise axis: one model for every cell
    for (std::size_t i = 0; i < table.cells.size(); ++i) {
        auto& cell = table.cells[i];
        if (!shared || axis != AblationAxis::joint_noise) {
            train::TrainOptions opts;
            if (run_dir) opts.run_dir = *run_dir / slug(cell.label);
            shared = train::train_model(cell.model, pre, *data.train, data.val, cell.train, opts);
        }
        cell.history = shared->state.history;
        const Dataset test = with_joint_noise(*data.test, cell.joint_noise_l1, cfg.seed + 1000 + i);
        MassNetRegressor reg(shared->model, shared->input);
        cell.report = evaluate_report(reg, test);
    }
    return table;
}

std::string AblationTable::to_csv() const {
    std::string out =
        "axis,label,n_sensing_layers,use_joint_branch,use_mass_branch,contrastive,lambda,joint_noise_l1,"
        "mae_mean,mae_std,mape_mean,mape_std,n\n";
    for (const auto& c : cells) {
        out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", to_string(axis), c.label, c.model.n_sensing_layers,
                           c.model.use_joint_branch, c.model.use_mass_branch, train::to_string(c.train.contrastive),
                           c.train.lambda, c.joint_noise_l1, c.report.mae_mean, c.report.mae_std, c.report.mape_mean,
                           c.report.mape_std, c.report.n);
    }
    return out;
}

std::string AblationTable::to_json() const {
    json j{{"axis", std::string(to_string(axis))}, {"cells", json::array()}};
    for (const auto& c : cells) {
        j["cells"].push_back({{"label", c.label},
                              {"n_sensing_layers", c.model.n_sensing_layers},
                              {"use_joint_branch", c.model.use_joint_branch},
                              {"use_mass_branch", c.model.use_mass_branch},
                              {"contrastive", std::string(train::to_string(c.train.contrastive))},
                              {"joint_noise_l1", c.joint_noise_l1},
                              {"epochs", c.history.size()},
                              {"report", json::parse(c.report.to_json())}});
    }
    return j.dump(2);
}

std::string AblationTable::to_text() const {
    std::string out = fmt::format("ablation: {}\n{:<22} {:>16} {:>16} {:>6}\n", to_string(axis), "cell", "MAE (kg)",
                                  "MAPE (%)", "n");
    for (const auto& c : cells) {
        out += fmt::format("{:<22} {:>7.3f} ± {:<6.3f} {:>7.2f} ± {:<6.2f} {:>6}\n", c.label, c.report.mae_mean,
                           c.report.mae_std, c.report.mape_mean, c.report.mape_std, c.report.n);
    }
    return out;
}

}  // namespace massnet::eval
