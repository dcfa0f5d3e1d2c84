#include "checks.hpp"

#include "oracles.hpp"

#include "massnet/losses.hpp"
#include "massnet/preprocess.hpp"
#include "massnet/synthetic.hpp"
#include "massnet/timeseries.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace checks {

using massnet::nn::Mode;
using massnet::nn::Tensor;

namespace {

struct RandomBatch {
    std::vector<std::vector<double>> rows;
    std::vector<double> flat;
    std::vector<std::string> ids;
    std::vector<double> weights;
    double tau = 0.1;
    int dim = 0;
};

RandomBatch random_batch(std::mt19937_64& rng, int n, int dim) {
    RandomBatch b;
    b.dim = dim;
    std::uniform_real_distribution<double> tau(0.05, 1.0), kg(40.0, 105.0);
    std::uniform_int_distribution<int> subj(0, std::max(1, n / 2));
    b.tau = tau(rng);
    std::vector<double> subject_kg(static_cast<std::size_t>(n + 1));
    for (double& w : subject_kg) w = kg(rng);
    for (int i = 0; i < n; ++i) {
        const int s = subj(rng);
        b.ids.push_back("s" + std::to_string(s));
        b.weights.push_back(subject_kg[static_cast<std::size_t>(s)]);
        b.rows.push_back(oracle::unit_vector(dim, rng));
        b.flat.insert(b.flat.end(), b.rows.back().begin(), b.rows.back().end());
    }
    return b;
}

massnet::loss::ContrastiveBatch view(const RandomBatch& b, bool penalty) {
    massnet::loss::ContrastiveBatch cb;
    cb.embeddings = b.flat;
    cb.dim = b.dim;
    cb.subject_ids = b.ids;
    cb.weights_kg = b.weights;
    cb.temperature = b.tau;
    cb.penalty_enabled = penalty;
    return cb;
}

}  // namespace

LossOracleResult loss_oracle(int batches, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> n_dist(2, 8), e_dist(1, 4);
    LossOracleResult r;
    for (int k = 0; k < batches; ++k) {
        const RandomBatch b = random_batch(rng, n_dist(rng), e_dist(rng));
        const double fast = massnet::loss::masscon_loss(view(b, true));
        const double direct = oracle::masscon_direct(b.rows, b.ids, b.weights, b.tau, true);
        const double scale = std::max(std::abs(direct), 1e-300);
        r.max_rel_masscon = std::max(r.max_rel_masscon, direct == 0.0 ? std::abs(fast) : std::abs(fast - direct) / scale);
        const double plain = massnet::loss::masscon_loss(view(b, false));
        r.max_abs_supcon = std::max(r.max_abs_supcon, std::abs(plain - oracle::supcon(b.rows, b.ids, b.tau)));
        ++r.batches;
    }
    return r;
}

double masscon_gradient_error(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    RandomBatch b = random_batch(rng, 4, 3);
    // Make sure at least one anchor has a positive.
    b.ids[1] = b.ids[0];
    b.weights[1] = b.weights[0];
    std::vector<double> analytic;
    massnet::loss::masscon_loss(view(b, true), &analytic);
    const double h = 1e-7;
    std::vector<double> numeric(b.flat.size());
    for (std::size_t i = 0; i < b.flat.size(); ++i) {
        const double keep = b.flat[i];
        b.flat[i] = keep + h;
        const double up = massnet::loss::masscon_loss(view(b, true));
        b.flat[i] = keep - h;
        const double down = massnet::loss::masscon_loss(view(b, true));
        b.flat[i] = keep;
        numeric[i] = (up - down) / (2 * h);
    }
    return oracle::relative_error(analytic, numeric);
}

massnet::nn::ModelConfig tiny_config() {
    massnet::nn::ModelConfig c;
    c.n_sensing_layers = 1;
    c.stem_channels = 4;
    c.trunk_channels = 8;
    c.bottleneck_ratio = 4;
    c.deep_feature_dim = 8;
    c.embedding_dim = 4;
    c.joint_hidden1 = 6;
    c.joint_hidden2 = 8;
    c.joint_feature_dim = 8;
    c.cbam_reduction = 4;
    c.cbam_spatial_kernel = 3;
    c.joint_count = 3;
    c.input_rows = 8;
    c.input_cols = 8;
    return c;
}

ModelGradResult model_gradient_error(std::uint64_t seed) {
    const auto cfg = tiny_config();
    massnet::nn::MassNet net(cfg, seed);
    std::mt19937_64 rng(seed + 1);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int N = 3;
    Tensor images({N, 1, cfg.input_rows, cfg.input_cols});
    for (double& v : images.values()) v = u(rng);
    Tensor joints({N, 2 * cfg.joint_count});
    for (double& v : joints.values()) v = u(rng);
    // Perturb the normalization affine terms away from (1, 0) so they are
    // exercised too.
    for (auto* p : net.parameters()) {
        if (p->name.find(".bn.") != std::string::npos) {
            for (double& v : p->value.values()) v += 0.3 * g(rng);
        }
    }
    std::vector<double> c(N);
    for (double& v : c) v = g(rng);
    Tensor ge({N, cfg.embedding_dim});
    for (double& v : ge.values()) v = g(rng);

    auto objective = [&]() {
        const auto out = net.forward(images, joints, Mode::train);
        double s = 0.0;
        for (int n = 0; n < N; ++n) s += c[static_cast<std::size_t>(n)] * out.predictions[static_cast<std::size_t>(n)];
        for (std::size_t i = 0; i < ge.numel(); ++i) s += ge[i] * out.embeddings[i];
        return s;
    };

    net.zero_grad();
    net.forward(images, joints, Mode::train);
    net.backward(c, &ge);

    ModelGradResult r;
    const double h = 1e-6;
    // Cancellation error of one central difference.
    const double roundoff = 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(objective())) / h;
    for (auto* p : net.parameters()) {
        std::vector<double> analytic(p->grad.values().begin(), p->grad.values().end());
        std::vector<double> numeric(p->value.numel());
        for (std::size_t i = 0; i < p->value.numel(); ++i) {
            const double keep = p->value[i];
            p->value[i] = keep + h;
            const double up = objective();
            p->value[i] = keep - h;
            const double down = objective();
            p->value[i] = keep;
            numeric[i] = (up - down) / (2 * h);
        }
        // A BN shift feeding straight into another BN has an identically zero
        // gradient; both sides are then pure round-off and the ratio is noise.
        const double numeric_floor = roundoff * std::sqrt(static_cast<double>(numeric.size()));
        if (oracle::norm(analytic) < kZeroGradient && oracle::norm(numeric) < numeric_floor) {
            ++r.zero_tensors;
            r.parameters += static_cast<int>(p->value.numel());
            continue;
        }
        const double err = oracle::relative_error(analytic, numeric);
        if (err > r.max_rel) {
            r.max_rel = err;
            r.worst = p->name;
        }
        r.parameters += static_cast<int>(p->value.numel());
    }
    return r;
}

AugmentResult augmentation_equivariance(int trials, std::uint64_t seed) {
    using namespace massnet;
    std::mt19937_64 rng(seed);
    const int R = 48, C = 40;
    std::uniform_int_distribution<int> pr(12, R - 13), pc(12, C - 13);
    std::uniform_real_distribution<double> kg(40.0, 105.0), unit(0.0, 1.0);
    const AugmentConfig bounds;
    AugmentResult res;

    auto argmax = [](const PressureFrame& f) {
        int br = 0, bc = 0;
        for (int r = 0; r < f.rows(); ++r)
            for (int c = 0; c < f.cols(); ++c)
                if (f.at(r, c) > f.at(br, bc)) {
                    br = r;
                    bc = c;
                }
        return JointCoord{double(br), double(bc)};
    };

    for (int t = 0; t < trials; ++t) {
        const int r0 = pr(rng), c0 = pc(rng);
        Sample s;
        s.frame = PressureFrame(R, C);
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) {
                const double d2 = (r - r0) * (r - r0) + (c - c0) * (c - c0);
                s.frame.at(r, c) = std::exp(-d2 / 18.0) + 0.05 * unit(rng) * std::exp(-d2 / 50.0);
            }
        s.frame.at(r0, c0) += 0.2;  // unique maximum
        s.weight_kg = kg(rng);
        s.subject_id = "s";
        s.posture = Posture::left_side;
        s.joints = JointSet{{JointCoord{double(r0), double(c0)}}};

        const Sample f = augment_sample(s, HFlip{}, bounds);
        res.flip_exact = res.flip_exact && argmax(f.frame) == f.joints->coords[0] && f.posture == Posture::right_side;

        std::uniform_int_distribution<int> dr(-4, 4), dc(-4, 4);
        const Sample sh = augment_sample(s, Shift{dr(rng), dc(rng)}, bounds);
        res.shift_exact = res.shift_exact && argmax(sh.frame) == sh.joints->coords[0];

        std::uniform_real_distribution<double> deg(-15.0, 15.0);
        const Sample ro = augment_sample(s, Rotate{deg(rng)}, bounds);
        const JointCoord a = argmax(ro.frame), j = ro.joints->coords[0];
        res.rotate_max_px = std::max(res.rotate_max_px, std::hypot(a.row - j.row, a.col - j.col));

        const Sample rnd = augment_random(s, bounds, rng);
        res.weights_invariant = res.weights_invariant && f.weight_kg == s.weight_kg && sh.weight_kg == s.weight_kg &&
                                ro.weight_kg == s.weight_kg && rnd.weight_kg == s.weight_kg;
        ++res.trials;
    }
    return res;
}

SegmentationResult segmentation_session(std::uint64_t seed) {
    using namespace massnet;
    synth::SessionConfig cfg;
    cfg.seed = seed;
    const auto session = synth::synthesize_session(cfg);
    const auto g = ts::temporal_gradient(session.frames);
    const auto th = ts::default_thresholds(g);
    const auto segs = ts::segment_frames(g, th.tau_hi, th.tau_lo, 5);

    SegmentationResult r;
    const auto detected = ts::active_intervals(segs);
    r.iou = ts::interval_iou(detected, session.movements);

    std::vector<double> preds;
    for (const auto& f : session.frames) preds.push_back(f.sum());
    const auto est = ts::aggregate_weight(preds, segs);
    double num = 0.0;
    int den = 0;
    for (const auto& s : segs.segments) {
        if (s.label != ts::SegmentLabel::still) continue;
        for (int t = s.start; t < s.end; ++t) num += preds[static_cast<std::size_t>(t)];
        den += s.length();
    }
    r.aggregation_error = std::abs(est.estimate_kg - num / den);
    r.static_spread = est.still.std_kg;
    r.active_spread = est.active.std_kg;
    return r;
}

}  // namespace checks
