// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails. Set MASSNET_SLP_ROOT to also run the (non-gating) SLP check.

#include "checks.hpp"

#include "massnet/config.hpp"
#include "massnet/evaluation.hpp"
#include "massnet/losses.hpp"
#include "massnet/synthetic.hpp"
#include "massnet/training.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <string>

using namespace massnet;

namespace {

int failures = 0;

void report(const std::string& name, bool pass, const std::string& detail, double seconds) {
    fmt::print("{} {:<34} {} ({:.1f}s)\n", pass ? "PASS" : "FAIL", name, detail, seconds);
    std::fflush(stdout);
    if (!pass) ++failures;
}

template <class F>
void criterion(const std::string& name, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = false;
    std::string detail;
    try {
        pass = body(detail);
    } catch (const std::exception& e) {
        detail = std::string("threw: ") + e.what();
    }
    report(name, pass, detail, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

bool loss_oracle(std::string& d) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = checks::loss_oracle(100, 2024);
    const double t = seconds_since(t0);
    d = fmt::format("batches={} max_rel={:.2e} (<1e-6) supcon_abs={:.2e} (<1e-9) runtime={:.2f}s (<10s)", r.batches,
                    r.max_rel_masscon, r.max_abs_supcon, t);
    return r.batches == 100 && r.max_rel_masscon < 1e-6 && r.max_abs_supcon < 1e-9 && t < 10.0;
}

bool penalty(std::string& d) {
    const double same = loss::penalty_factor(50, 50);
    const double up = loss::penalty_factor(50, 60);
    const double down = loss::penalty_factor(60, 50);
    d = fmt::format("d(50,50)={} d(50,60)={:.12f} |diff exp(0.2)|={:.1e} d(60,50)={:.12f}", same, up,
                    std::abs(up - std::exp(0.2)), down);
    return same == 1.0 && std::abs(up - std::exp(0.2)) < 1e-12 && up != down;
}

bool gradients(std::string& d) {
    const auto t0 = std::chrono::steady_clock::now();
    double loss_err = 0.0;
    for (std::uint64_t s = 1; s <= 5; ++s) loss_err = std::max(loss_err, checks::masscon_gradient_error(s));
    const auto model = checks::model_gradient_error(3);
    const double t = seconds_since(t0);
    d = fmt::format("masscon rel={:.2e} model rel={:.2e} [{} params, worst {}, {} zero-gradient tensors] (<1e-4) runtime={:.1f}s (<120s)",
                    loss_err, model.max_rel, model.parameters, model.worst, model.zero_tensors, t);
    return loss_err < 1e-4 && model.max_rel < 1e-4 && t < 120.0;
}

bool parameter_budget(std::string& d) {
    const double lo = 1.80e6 * 0.85, hi = 3.47e6 * 1.15;
    bool ok = true;
    for (int depth : {4, 6, 8}) {
        nn::ModelConfig c;
        c.n_sensing_layers = depth;
        const auto n = nn::count_parameters(c);
        d += fmt::format("depth{}={} ", depth, n);
        ok = ok && n >= lo && n <= hi;
    }
    d += fmt::format("band=[{:.0f}, {:.0f}]", lo, hi);
    return ok;
}

// Reduced model on generated data vs the summation baseline.
bool synthetic_end_to_end(std::string& d) {
    const auto t0 = std::chrono::steady_clock::now();
    synth::SyntheticConfig sc;
    sc.n_samples = 300;
    sc.weight_min = 40.0;
    sc.weight_max = 105.0;
    sc.gain_sigma = 0.05;
    // Cap at the median frame peak: heavy subjects lose a large share of their
    // load, which is what the summation baseline cannot recover.
    sc.saturation_quantile = 0.5;
    sc.noise_rel = 0.02;
    sc.seed = 11;
    const Dataset data = synth::synthesize_dataset(sc).dataset;
    const SplitSpec split = split_weight_binned(data, 10, 3, 12);
    check_split(data, split, true);
    const Dataset train = data.subset(split.train), val = data.subset(split.val), test = data.subset(split.test);

    eval::LinearRegressor linear(eval::linear_fit_baseline(train));
    const double linear_mae = eval::evaluate_report(linear, test).mae_mean;

    // Depth 2 and half the default widths, on the native 56x40 grid padded to
    // 64x64.
    nn::ModelConfig m;
    m.n_sensing_layers = 2;
    m.stem_channels = 16;
    m.trunk_channels = 64;
    m.deep_feature_dim = 128;
    m.embedding_dim = 64;
    m.joint_feature_dim = 64;
    m.joint_hidden1 = 32;
    m.joint_hidden2 = 64;
    m.input_rows = 64;
    m.input_cols = 64;
    PreprocessConfig p;
    p.upsample_factor = 1;
    p.smooth = false;
    p.target_rows = 64;
    p.target_cols = 64;
    // Bilinear rotation on the coarse grid smears the capped plateau.
    p.augment.max_rotation_deg = 0.0;
    train::TrainConfig t;
    // 190 training samples give few steps per epoch, so use a smaller batch
    // and a slower decay than the full-size schedule.
    t.max_epochs = 20;
    t.batch_size = 8;
    t.decay_every = 10;
    t.base_lr = 1e-3;
    t.seed = 5;
    auto result = train::train_model(m, p, train, &val, t);
    eval::MassNetRegressor cnn(result.model, result.input);
    const double cnn_mae = eval::evaluate_report(cnn, test).mae_mean;

    sc.gain_sigma = 0.0;
    sc.saturation_quantile.reset();
    sc.noise_rel = 0.0;
    const Dataset ideal = synth::synthesize_dataset(sc).dataset;
    eval::LinearRegressor ideal_fit(eval::linear_fit_baseline(ideal.subset(split.train)));
    const double ideal_mae = eval::evaluate_report(ideal_fit, ideal.subset(split.test)).mae_mean;

    const double elapsed = seconds_since(t0);
    d = fmt::format("n={}/{}/{} cnn={:.4f} linear={:.4f} ratio={:.3f} (<=0.70) ideal_linear={:.2e} (<1e-6) runtime={:.0f}s",
                    train.size(), val.size(), test.size(), cnn_mae, linear_mae, cnn_mae / linear_mae, ideal_mae, elapsed);
    return cnn_mae <= 0.7 * linear_mae && ideal_mae < 1e-6;
}

bool ablation_harness(std::string& d) {
    synth::SyntheticConfig sc;
    sc.n_samples = 24;
    sc.samples_per_subject = 3;
    sc.seed = 2;
    const Dataset data = synth::synthesize_dataset(sc).dataset;
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < data.size(); ++i) (i < 18 ? tr : te).push_back(i);
    const Dataset train = data.subset(tr), test = data.subset(te);

    nn::ModelConfig m = checks::tiny_config();
    m.joint_count = kDefaultJointCount;
    m.input_rows = 56;
    m.input_cols = 40;
    PreprocessConfig p;
    p.upsample_factor = 1;
    p.smooth = false;
    p.target_rows = 56;
    p.target_cols = 40;
    train::TrainConfig t;
    t.max_epochs = 3;
    t.batch_size = 6;
    t.seed = 13;

    const auto table = eval::run_ablation(eval::AblationAxis::loss_variant, m, p, t, {&train, nullptr, &test});
    train::TrainConfig zero = t;
    zero.lambda = 0.0;
    const auto direct = train::train_model(m, p, train, nullptr, zero);
    const bool same = table.cells.at(0).label == "no ConL" && direct.state.history == table.cells[0].history;

    const auto branches = eval::plan_ablation(eval::AblationAxis::branches, nn::ModelConfig{}, t);
    const auto depth = eval::plan_ablation(eval::AblationAxis::depth_scan, nn::ModelConfig{}, t);
    bool depth_axis = depth.size() == 13;
    for (std::size_t i = 0; i < depth.size(); ++i) depth_axis = depth_axis && depth[i].model.n_sensing_layers == static_cast<int>(i);
    const bool branch_axis = branches.size() == 3 && branches[0].model.use_joint_branch && !branches[0].model.use_mass_branch &&
                             !branches[1].model.use_joint_branch && branches[1].model.use_mass_branch &&
                             branches[2].model.use_joint_branch && branches[2].model.use_mass_branch;
    d = fmt::format("lambda0==noConL:{} epochs={} branch_cells={} depth_cells={}", same, direct.state.history.size(),
                    branches.size(), depth.size());
    return same && branch_axis && depth_axis;
}

bool augmentation(std::string& d) {
    const auto r = checks::augmentation_equivariance(500, 99);
    d = fmt::format("trials={} flip_exact={} shift_exact={} rotate_max={:.3f}px (<=1) weights_invariant={}", r.trials,
                    r.flip_exact, r.shift_exact, r.rotate_max_px, r.weights_invariant);
    return r.flip_exact && r.shift_exact && r.rotate_max_px <= 1.0 && r.weights_invariant;
}

bool segmentation(std::string& d) {
    const auto r = checks::segmentation_session(7);
    d = fmt::format("iou={:.4f} (>=0.9) aggregation_err={:.1e} (<1e-9) static_std={:.3f} active_std={:.3f}", r.iou,
                    r.aggregation_error, r.static_spread, r.active_spread);
    return r.iou >= 0.9 && r.aggregation_error < 1e-9;
}

bool metrics(std::string& d) {
    const std::vector<double> p{55}, t{50};
    const std::vector<Posture> post{Posture::supine};
    const std::vector<std::string> subj{"a"};
    const auto unit = eval::compute_metrics(p, t, post, subj);
    bool ok = unit.mae_mean == 5.0 && unit.mape_mean == 10.0;

    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> w(40, 105), e(-10, 10);
    int trials = 0;
    for (; trials < 200; ++trials) {
        const std::size_t n = 2 + rng() % 30;
        std::vector<double> pr(n), tg(n);
        for (std::size_t i = 0; i < n; ++i) {
            tg[i] = w(rng);
            pr[i] = tg[i] + e(rng);
        }
        const std::vector<Posture> ps(n, Posture::supine);
        const std::vector<std::string> ss(n, "s");
        const auto a = eval::compute_metrics(pr, tg, ps, ss);
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<double> pr2, tg2;
        for (std::size_t i : perm) {
            pr2.push_back(pr[i]);
            tg2.push_back(tg[i]);
        }
        const auto b = eval::compute_metrics(pr2, tg2, ps, ss);
        ok = ok && std::abs(a.mae_mean - b.mae_mean) < 1e-9 * a.mae_mean && std::abs(a.mape_mean - b.mape_mean) < 1e-9 * a.mape_mean;
    }
    d = fmt::format("([55],[50]) -> MAE {} MAPE {}%, permutation trials={}", unit.mae_mean, unit.mape_mean, trials);
    return ok;
}

void slp_check() {
    const char* root = std::getenv("MASSNET_SLP_ROOT");
    if (root == nullptr || *root == '\0') {
        fmt::print("SKIP {:<34} non-gating; set MASSNET_SLP_ROOT to run\n", "slp_split_and_training");
        return;
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const Dataset data = load_dataset(root, FormatId::slp_pm);
        const SplitSpec split = split_weight_binned(data, 10, 0);
        check_split(data, split, true);
        std::set<std::string> a, b, c;
        for (auto i : split.train) a.insert(data[i].subject_id);
        for (auto i : split.val) b.insert(data[i].subject_id);
        for (auto i : split.test) c.insert(data[i].subject_id);
        ExperimentConfig cfg = default_experiment(SplitStrategy::weight_binned);
        auto result = train::train_model(cfg.model, cfg.preprocess, data.subset(split.train), nullptr, cfg.train);
        eval::MassNetRegressor reg(result.model, result.input);
        const auto rep = eval::evaluate_report(reg, data.subset(split.test));
        fmt::print("INFO {:<34} subjects {}:{}:{} test MAE {:.2f} ± {:.2f} kg (target <= 6.0, non-gating) ({:.0f}s)\n",
                   "slp_split_and_training", a.size(), b.size(), c.size(), rep.mae_mean, rep.mae_std, seconds_since(t0));
    } catch (const std::exception& e) {
        fmt::print("INFO {:<34} failed: {} (non-gating)\n", "slp_split_and_training", e.what());
    }
}

}  // namespace

int main() {
    criterion("loss_oracle_equivalence", loss_oracle);
    criterion("penalty_factor", penalty);
    criterion("gradient_checks", gradients);
    criterion("parameter_budget", parameter_budget);
    criterion("synthetic_end_to_end", synthetic_end_to_end);
    criterion("ablation_harness_determinism", ablation_harness);
    criterion("augmentation_equivariance", augmentation);
    criterion("segmentation", segmentation);
    criterion("metrics", metrics);
    slp_check();
    fmt::print("{} criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
