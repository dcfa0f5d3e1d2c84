#include "massnet/synthetic.hpp"

#include "massnet/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace massnet::synth {

namespace {

// Skeleton point in body coordinates: axial meters from the head top, lateral
// meters from the midline (+ = subject's left).
struct BodyPoint {
    double axial = 0.0;
    double lateral = 0.0;
};

// Profile flatness of the trunk patches (torso, pelvis) and of the rest.
constexpr double kTrunkFlatness = 8.0;
constexpr double kLimbFlatness = 1.5;
constexpr double kTrunkShareSlope = 0.8;

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

void BodyModel::validate(const GridSpec& grid) const {
    double total = 0.0;
    for (const auto& s : segments) {
        if (s.center_row < 0.0 || s.center_row > grid.rows - 1 || s.center_col < 0.0 || s.center_col > grid.cols - 1) {
            throw GenerationError("segment '" + s.name + "' centered outside the " + std::to_string(grid.rows) + "x" +
                                  std::to_string(grid.cols) + " grid");
        }
        if (!(s.sigma_row > 0.0 && s.sigma_col > 0.0)) throw GenerationError("segment '" + s.name + "' has no extent");
        total += s.mass_fraction;
    }
    if (std::abs(total - 1.0) > 1e-9) throw GenerationError("segment mass fractions do not sum to 1");
    if (!(weight_kg > 0.0)) throw GenerationError("body weight must be positive");
}

LayoutJitter draw_jitter(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> axial(-0.03, 0.03), lateral(-0.05, 0.05), spread(-0.2, 0.2);
    LayoutJitter j;
    j.axis_shift_m = axial(rng);
    j.lateral_shift_m = lateral(rng);
    j.arm_spread = spread(rng);
    j.leg_spread = spread(rng);
    return j;
}

BodyModel make_body(double weight_kg, double height_m, Posture posture, const GridSpec& grid,
                    const LayoutJitter& jitter) {
    if (!(weight_kg > 0.0) || !(height_m > 0.0)) throw GenerationError("weight and height must be positive");
    const double h = height_m;
    const double bmi = weight_kg / (h * h);
    // Contact width grows slower than mass, so peak pressure rises with BMI.
    const double wf = std::pow(bmi / 22.0, 0.25);
    const double ls = h / 1.7 * wf;  // lateral scale
    const double arm = 1.0 + jitter.arm_spread;
    const double leg = 1.0 + jitter.leg_spread;

    BodyPoint head{0.065 * h, 0.0}, head_top{0.0, 0.0}, neck{0.17 * h, 0.0};
    BodyPoint sh_r{0.19 * h, -0.19 * ls}, sh_l{0.19 * h, 0.19 * ls};
    BodyPoint el_r{0.36 * h, -0.24 * ls * arm}, el_l{0.36 * h, 0.24 * ls * arm};
    BodyPoint wr_r{0.48 * h, -0.26 * ls * arm}, wr_l{0.48 * h, 0.26 * ls * arm};
    BodyPoint hip_r{0.50 * h, -0.09 * ls}, hip_l{0.50 * h, 0.09 * ls};
    BodyPoint kn_r{0.72 * h, -0.10 * ls * leg}, kn_l{0.72 * h, 0.10 * ls * leg};
    BodyPoint an_r{0.95 * h, -0.11 * ls * leg}, an_l{0.95 * h, 0.11 * ls * leg};
    BodyPoint torso{0.30 * h, 0.0}, pelvis{0.50 * h, 0.0};

    double head_sr = 0.07, head_sc = 0.06;
    // The trunk patch hardly broadens with BMI: extra mass shows up as pressure.
    const double trunk_wf = std::pow(bmi / 22.0, 0.1);
    double torso_sr = 0.09, torso_sc = 0.10 * trunk_wf;
    double pelvis_sr = 0.07, pelvis_sc = 0.10 * trunk_wf;
    double arm_sr = 0.11, arm_sc = 0.035 * wf;
    double leg_sr = 0.16, leg_sc = 0.045 * wf;

    const bool side = posture == Posture::left_side || posture == Posture::right_side || posture == Posture::other;
    if (posture == Posture::prone) {
        el_r = {0.10 * h, -0.22 * ls * arm};
        el_l = {0.10 * h, 0.22 * ls * arm};
        wr_r = {0.02 * h, -0.12 * ls * arm};
        wr_l = {0.02 * h, 0.12 * ls * arm};
    } else if (side) {
        // Narrow contact strip; knees and arms forward of the midline.
        const double compress = 0.35;
        for (BodyPoint* p : {&sh_r, &sh_l, &hip_r, &hip_l}) p->lateral *= compress;
        const double knee_axial = posture == Posture::other ? 0.58 : 0.68;
        const double ankle_axial = posture == Posture::other ? 0.72 : 0.93;
        kn_r = {knee_axial * h, 0.18 * ls * leg};
        kn_l = {(knee_axial + 0.02) * h, 0.04 * ls * leg};
        an_r = {ankle_axial * h, 0.12 * ls * leg};
        an_l = {(ankle_axial + 0.01) * h, -0.02 * ls * leg};
        el_r = {0.33 * h, 0.17 * ls * arm};
        el_l = {0.35 * h, 0.21 * ls * arm};
        wr_r = {0.42 * h, 0.22 * ls * arm};
        wr_l = {0.44 * h, 0.25 * ls * arm};
        torso_sc *= 0.9;
        pelvis_sc *= 0.9;
        arm_sc *= 0.8;
        if (posture == Posture::right_side) {
            for (BodyPoint* p : {&sh_r, &sh_l, &hip_r, &hip_l, &kn_r, &kn_l, &an_r, &an_l, &el_r, &el_l, &wr_r, &wr_l}) {
                p->lateral = -p->lateral;
            }
        }
    }

    const double top_m = (grid.rows * grid.pitch_row_m - h) / 2.0 + jitter.axis_shift_m;
    const double mid_col = (grid.cols - 1) / 2.0;
    auto row_of = [&](const BodyPoint& p) { return (top_m + p.axial) / grid.pitch_row_m; };
    auto col_of = [&](const BodyPoint& p) { return mid_col + (p.lateral + jitter.lateral_shift_m) / grid.pitch_col_m; };
    auto blob = [&](std::string name, const BodyPoint& c, double sr, double sc, double frac, double flat = kLimbFlatness) {
        return BlobSegment{std::move(name), row_of(c), col_of(c), sr / grid.pitch_row_m, sc / grid.pitch_col_m, frac, flat};
    };
    auto mid = [](const BodyPoint& a, const BodyPoint& b) {
        return BodyPoint{(a.axial + b.axial) / 2.0, (a.lateral + b.lateral) / 2.0};
    };

    // Heavier builds carry a larger share of their mass in the trunk.
    const double trunk_share = std::clamp(1.0 + kTrunkShareSlope * (bmi / 22.0 - 1.0), 0.75, 1.35);
    const double torso_frac = 0.34 * trunk_share, pelvis_frac = 0.22 * trunk_share;
    const double rest = (1.0 - torso_frac - pelvis_frac) / 0.44;

    BodyModel body;
    body.weight_kg = weight_kg;
    body.height_m = height_m;
    body.posture = posture;
    body.segments = {
        blob("head", head, head_sr, head_sc, 0.08 * rest),
        blob("torso", torso, torso_sr, torso_sc, torso_frac, kTrunkFlatness),
        blob("pelvis", pelvis, pelvis_sr, pelvis_sc, pelvis_frac, kTrunkFlatness),
        blob("arm_right", el_r, arm_sr, arm_sc, 0.05 * rest),
        blob("arm_left", el_l, arm_sr, arm_sc, 0.05 * rest),
        blob("leg_right", mid(kn_r, mid(hip_r, an_r)), leg_sr, leg_sc, 0.13 * rest),
        blob("leg_left", mid(kn_l, mid(hip_l, an_l)), leg_sr, leg_sc, 0.13 * rest),
    };
    for (const BodyPoint& p : {an_r, kn_r, hip_r, hip_l, kn_l, an_l, wr_r, el_r, sh_r, sh_l, el_l, wr_l, neck, head_top}) {
        body.joints.coords.push_back({row_of(p), col_of(p)});
    }
    body.validate(grid);
    return body;
}

BodyModel blend_bodies(const BodyModel& a, const BodyModel& b, double t) {
    if (a.segments.size() != b.segments.size() || a.joints.coords.size() != b.joints.coords.size()) {
        throw GenerationError("cannot blend bodies with different layouts");
    }
    BodyModel out = t < 0.5 ? a : b;
    auto lerp = [t](double x, double y) { return (1.0 - t) * x + t * y; };
    for (std::size_t i = 0; i < out.segments.size(); ++i) {
        auto& s = out.segments[i];
        s.center_row = lerp(a.segments[i].center_row, b.segments[i].center_row);
        s.center_col = lerp(a.segments[i].center_col, b.segments[i].center_col);
        s.sigma_row = lerp(a.segments[i].sigma_row, b.segments[i].sigma_row);
        s.sigma_col = lerp(a.segments[i].sigma_col, b.segments[i].sigma_col);
        s.flatness = lerp(a.segments[i].flatness, b.segments[i].flatness);
        s.mass_fraction = a.segments[i].mass_fraction;
    }
    for (std::size_t i = 0; i < out.joints.coords.size(); ++i) {
        out.joints.coords[i].row = lerp(a.joints.coords[i].row, b.joints.coords[i].row);
        out.joints.coords[i].col = lerp(a.joints.coords[i].col, b.joints.coords[i].col);
    }
    return out;
}

PressureFrame render_body(const BodyModel& body, const GridSpec& grid, double on_mat_fraction) {
    body.validate(grid);
    PressureFrame frame(grid.rows, grid.cols);
    frame.pitch_row_m = grid.pitch_row_m;
    frame.pitch_col_m = grid.pitch_col_m;
    std::vector<double> density(frame.size());
    for (const auto& s : body.segments) {
        double total = 0.0;
        for (int r = 0; r < grid.rows; ++r) {
            const double dr = (r - s.center_row) / s.sigma_row;
            for (int c = 0; c < grid.cols; ++c) {
                const double dc = (c - s.center_col) / s.sigma_col;
                const double d2 = dr * dr + dc * dc;
                const double v = std::exp(-0.5 * (s.flatness == 1.0 ? d2 : std::pow(d2, s.flatness)));
                density[static_cast<std::size_t>(r) * grid.cols + c] = v;
                total += v;
            }
        }
        if (!(total > 0.0)) throw GenerationError("segment '" + s.name + "' renders to nothing");
        const double scale = body.weight_kg * on_mat_fraction * s.mass_fraction / total;
        auto values = frame.values();
        for (std::size_t i = 0; i < values.size(); ++i) values[i] += scale * density[i];
    }
    return frame;
}

Sample synthesize_sample(const BodyModel& body, const GridSpec& grid, const std::string& subject_id) {
    Sample s;
    s.frame = render_body(body, grid);
    s.subject_id = subject_id;
    s.weight_kg = body.weight_kg;
    s.posture = body.posture;
    s.joints = body.joints;
    return s;
}

// ---------------------------------------------------------------------------
// Sensor model
// ---------------------------------------------------------------------------
void SensorModel::validate() const {
    if (saturation_cap && !(*saturation_cap > 0.0)) throw GenerationError("saturation cap must be > 0");
    if (!(noise_sigma >= 0.0)) throw GenerationError("noise sigma must be >= 0");
    if (!(hysteresis_retention >= 0.0 && hysteresis_retention < 1.0)) {
        throw GenerationError("hysteresis retention must be in [0, 1)");
    }
}

SensorModel make_sensor_model(const GridSpec& grid, double gain_sigma, std::optional<double> saturation_cap,
                              double noise_sigma, double hysteresis_retention, std::mt19937_64& rng) {
    SensorModel m;
    if (gain_sigma > 0.0) {
        std::normal_distribution<double> g(1.0, gain_sigma);
        m.gain.resize(static_cast<std::size_t>(grid.rows) * grid.cols);
        for (double& v : m.gain) v = std::clamp(g(rng), 0.5, 1.5);
    }
    m.saturation_cap = saturation_cap;
    m.noise_sigma = noise_sigma;
    m.hysteresis_retention = hysteresis_retention;
    m.validate();
    return m;
}

PressureFrame apply_sensor_model(const PressureFrame& frame, const SensorModel& sensor, std::mt19937_64& rng) {
    sensor.validate();
    if (!sensor.gain.empty() && sensor.gain.size() != frame.size()) {
        throw GenerationError("sensor gain grid does not match the frame");
    }
    PressureFrame out = frame;
    std::normal_distribution<double> noise(0.0, sensor.noise_sigma > 0.0 ? sensor.noise_sigma : 1.0);
    auto values = out.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
        double v = values[i];
        if (!sensor.gain.empty()) v *= sensor.gain[i];
        if (sensor.saturation_cap) v = std::min(v, *sensor.saturation_cap);
        if (sensor.noise_sigma > 0.0) v = std::max(0.0, v + noise(rng));
        values[i] = v;
    }
    return out;
}

std::vector<PressureFrame> apply_sensor_model(const std::vector<PressureFrame>& frames, const SensorModel& sensor,
                                              std::mt19937_64& rng) {
    std::vector<PressureFrame> out;
    out.reserve(frames.size());
    const double r = sensor.hysteresis_retention;
    for (std::size_t t = 0; t < frames.size(); ++t) {
        PressureFrame v = apply_sensor_model(frames[t], sensor, rng);
        if (t > 0 && r > 0.0) {
            const auto prev = out.back().values();
            auto cur = v.values();
            for (std::size_t i = 0; i < cur.size(); ++i) cur[i] = r * prev[i] + (1.0 - r) * cur[i];
        }
        out.push_back(std::move(v));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------
SyntheticDataset synthesize_dataset(const SyntheticConfig& cfg) {
    if (cfg.n_samples <= 0 || cfg.samples_per_subject <= 0) throw GenerationError("sample counts must be positive");
    if (!(cfg.weight_min > 0.0 && cfg.weight_max >= cfg.weight_min)) throw GenerationError("invalid weight range");
    if (cfg.postures.empty()) throw GenerationError("no postures to sample from");

    const int n_subjects = (cfg.n_samples + cfg.samples_per_subject - 1) / cfg.samples_per_subject;
    std::vector<Sample> samples;
    samples.reserve(static_cast<std::size_t>(cfg.n_samples));
    for (int s = 0; s < n_subjects; ++s) {
        auto rng = seeded(cfg.seed, 1, static_cast<std::uint64_t>(s));
        std::uniform_real_distribution<double> wdist(cfg.weight_min, cfg.weight_max);
        std::normal_distribution<double> hnoise(0.0, 0.04);
        const double w = wdist(rng);
        const double span = cfg.weight_max > cfg.weight_min ? (w - cfg.weight_min) / (cfg.weight_max - cfg.weight_min) : 0.5;
        const double h = std::clamp(1.50 + 0.35 * span + hnoise(rng), 1.45, 1.92);
        std::string id = std::to_string(s);
        id = "s" + std::string(id.size() < 3 ? 3 - id.size() : 0, '0') + id;
        std::uniform_int_distribution<std::size_t> pick(0, cfg.postures.size() - 1);
        for (int k = 0; k < cfg.samples_per_subject && static_cast<int>(samples.size()) < cfg.n_samples; ++k) {
            const Posture p = cfg.postures[pick(rng)];
            const LayoutJitter jitter = draw_jitter(rng);
            Sample sample = synthesize_sample(make_body(w, h, p, cfg.grid, jitter), cfg.grid, id);
            if (!cfg.with_joints) sample.joints.reset();
            samples.push_back(std::move(sample));
        }
    }

    std::vector<double> peaks;
    peaks.reserve(samples.size());
    for (const auto& s : samples) peaks.push_back(s.frame.max());
    std::optional<double> cap;
    if (cfg.saturation_quantile) cap = quantile(peaks, *cfg.saturation_quantile);
    const double noise_sigma = cfg.noise_rel * quantile(peaks, 0.5);

    auto sensor_rng = seeded(cfg.seed, 2);
    SyntheticDataset out;
    out.sensor = make_sensor_model(cfg.grid, cfg.gain_sigma, cap, noise_sigma, 0.0, sensor_rng);
    const bool ideal = cfg.gain_sigma == 0.0 && !cap && noise_sigma == 0.0;
    if (!ideal) {
        for (std::size_t i = 0; i < samples.size(); ++i) {
            auto rng = seeded(cfg.seed, 3, i);
            const auto pitch_r = samples[i].frame.pitch_row_m;
            const auto pitch_c = samples[i].frame.pitch_col_m;
            samples[i].frame = apply_sensor_model(samples[i].frame, out.sensor, rng);
            samples[i].frame.pitch_row_m = pitch_r;
            samples[i].frame.pitch_col_m = pitch_c;
        }
    }
    out.dataset = Dataset(FormatId::synthetic, std::move(samples));
    return out;
}

Dataset SyntheticSession::to_dataset(const std::string& subject_id) const {
    std::vector<Sample> samples;
    samples.reserve(frames.size());
    for (std::size_t t = 0; t < frames.size(); ++t) {
        Sample s;
        s.frame = frames[t];
        s.subject_id = subject_id;
        s.weight_kg = weight_kg;
        s.posture = postures[t];
        s.timestamp = static_cast<std::int64_t>(t);
        samples.push_back(std::move(s));
    }
    return Dataset(FormatId::massnet_dynamic, std::move(samples));
}

SyntheticSession synthesize_session(const SessionConfig& cfg) {
    const int active_total = cfg.n_movements * cfg.movement_frames;
    if (cfg.n_frames <= 0 || cfg.movement_frames <= 0 || cfg.n_movements < 0 || active_total >= cfg.n_frames) {
        throw GenerationError("session too short for the requested movements");
    }
    if (!(cfg.movement_jitter_cells >= 0.0)) throw GenerationError("movement jitter must be >= 0");
    auto rng = seeded(cfg.seed, 4);
    const std::vector<Posture> cycle = {Posture::supine, Posture::left_side, Posture::right_side, Posture::prone};
    std::uniform_int_distribution<std::size_t> pick(0, cycle.size() - 1);
    std::normal_distribution<double> wiggle(0.0, 1.0);

    std::vector<BodyModel> poses;
    Posture current = cycle[pick(rng)];
    poses.push_back(make_body(cfg.weight_kg, cfg.height_m, current, cfg.grid, draw_jitter(rng)));
    for (int m = 0; m < cfg.n_movements; ++m) {
        Posture next = current;
        while (next == current) next = cycle[pick(rng)];
        poses.push_back(make_body(cfg.weight_kg, cfg.height_m, next, cfg.grid, draw_jitter(rng)));
        current = next;
    }

    // Static stretches split evenly around the movements, remainder at the end.
    const int n_static = cfg.n_frames - active_total;
    const int gap = n_static / (cfg.n_movements + 1);
    SyntheticSession session;
    session.weight_kg = cfg.weight_kg;
    std::vector<PressureFrame> ideal;
    ideal.reserve(static_cast<std::size_t>(cfg.n_frames));
    int t = 0;
    for (int m = 0; m <= cfg.n_movements; ++m) {
        const int stay = m == cfg.n_movements ? cfg.n_frames - t : gap;
        const PressureFrame still = render_body(poses[static_cast<std::size_t>(m)], cfg.grid);
        for (int k = 0; k < stay; ++k, ++t) {
            ideal.push_back(still);
            session.postures.push_back(poses[static_cast<std::size_t>(m)].posture);
        }
        if (m == cfg.n_movements) break;
        session.movements.emplace_back(t, t + cfg.movement_frames);
        for (int k = 0; k < cfg.movement_frames; ++k, ++t) {
            const double progress = (k + 1.0) / (cfg.movement_frames + 1.0);
            const double eased = 0.5 - 0.5 * std::cos(std::numbers::pi * progress);
            BodyModel body = blend_bodies(poses[static_cast<std::size_t>(m)], poses[static_cast<std::size_t>(m) + 1], eased);
            for (auto& seg : body.segments) {
                seg.center_row = std::clamp(seg.center_row + cfg.movement_jitter_cells * wiggle(rng), 0.0, cfg.grid.rows - 1.0);
                seg.center_col = std::clamp(seg.center_col + cfg.movement_jitter_cells * wiggle(rng), 0.0, cfg.grid.cols - 1.0);
            }
            const double on_mat = 1.0 - cfg.lift_fraction * std::sin(std::numbers::pi * progress);
            ideal.push_back(render_body(body, cfg.grid, on_mat));
            session.postures.push_back(Posture::other);
        }
    }

    std::vector<double> peaks;
    for (const auto& f : ideal) peaks.push_back(f.max());
    auto sensor_rng = seeded(cfg.seed, 5);
    const SensorModel sensor = make_sensor_model(cfg.grid, cfg.gain_sigma, std::nullopt, cfg.noise_rel * quantile(peaks, 0.5),
                                                 cfg.hysteresis_retention, sensor_rng);
    session.frames = apply_sensor_model(ideal, sensor, sensor_rng);
    for (auto& f : session.frames) {
        f.pitch_row_m = cfg.grid.pitch_row_m;
        f.pitch_col_m = cfg.grid.pitch_col_m;
    }
    return session;
}

}  // namespace massnet::synth
