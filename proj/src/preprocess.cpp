#include "massnet/preprocess.hpp"

#include "massnet/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace massnet {

std::string_view to_string(Normalization n) {
    switch (n) {
        case Normalization::per_dataset_max: return "per_dataset_max";
        case Normalization::per_frame_max: return "per_frame_max";
        case Normalization::none: return "none";
    }
    return "none";
}

Normalization normalization_from_string(std::string_view s) {
    if (s == "per_dataset_max") return Normalization::per_dataset_max;
    if (s == "per_frame_max") return Normalization::per_frame_max;
    if (s == "none") return Normalization::none;
    throw ConfigError("unknown normalization '" + std::string(s) + "'");
}

void PreprocessConfig::validate() const {
    if (upsample_factor < 1) throw ConfigError("upsample_factor must be >= 1");
    if (gaussian_kernel < 1 || gaussian_kernel % 2 == 0) throw ConfigError("gaussian_kernel must be odd");
    if (!(gaussian_sigma > 0.0)) throw ConfigError("gaussian_sigma must be > 0");
    if (target_rows < 1 || target_cols < 1) throw ConfigError("target dims must be positive");
    if (augment.max_rotation_deg < 0.0 || augment.max_shift_frac < 0.0) {
        throw ConfigError("augmentation bounds must be non-negative");
    }
}

PressureFrame upsample_bilinear(const PressureFrame& frame, int factor) {
    if (factor < 1) throw ArgumentError("upsample factor must be >= 1, got " + std::to_string(factor));
    if (factor == 1) return frame;
    const int R = frame.rows(), C = frame.cols();
    const int out_r = R * factor, out_c = C * factor;
    const double sr = R > 1 ? static_cast<double>(R - 1) / (out_r - 1) : 0.0;
    const double sc = C > 1 ? static_cast<double>(C - 1) / (out_c - 1) : 0.0;

    PressureFrame out(out_r, out_c);
    for (int i = 0; i < out_r; ++i) {
        const double y = i * sr;
        const int y0 = std::min(static_cast<int>(y), R - 1);
        const int y1 = std::min(y0 + 1, R - 1);
        const double fy = y - y0;
        for (int j = 0; j < out_c; ++j) {
            const double x = j * sc;
            const int x0 = std::min(static_cast<int>(x), C - 1);
            const int x1 = std::min(x0 + 1, C - 1);
            const double fx = x - x0;
            const double top = (1.0 - fx) * frame.at(y0, x0) + fx * frame.at(y0, x1);
            const double bot = (1.0 - fx) * frame.at(y1, x0) + fx * frame.at(y1, x1);
            out.at(i, j) = std::max(0.0, (1.0 - fy) * top + fy * bot);
        }
    }
    out.pitch_row_m = frame.pitch_row_m ? std::optional(*frame.pitch_row_m / factor) : std::nullopt;
    out.pitch_col_m = frame.pitch_col_m ? std::optional(*frame.pitch_col_m / factor) : std::nullopt;
    return out;
}

std::vector<double> gaussian_kernel(int kernel, double sigma) {
    if (kernel < 1 || kernel % 2 == 0) throw ArgumentError("Gaussian kernel size must be odd");
    if (!(sigma > 0.0)) throw ArgumentError("Gaussian sigma must be > 0");
    const int h = kernel / 2;
    std::vector<double> k(static_cast<std::size_t>(kernel) * kernel);
    double total = 0.0;
    for (int i = -h; i <= h; ++i) {
        for (int j = -h; j <= h; ++j) {
            const double v = std::exp(-(i * i + j * j) / (2.0 * sigma * sigma));
            k[static_cast<std::size_t>((i + h) * kernel + (j + h))] = v;
            total += v;
        }
    }
    for (double& v : k) v /= total;
    return k;
}

namespace {

// Reflect-101 index: -1 -> 1, n -> n - 2.
int reflect(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i = std::abs(i) % period;
    return i >= n ? period - i : i;
}

}  // namespace

PressureFrame gaussian_smooth(const PressureFrame& frame, int kernel, double sigma) {
    const auto k = gaussian_kernel(kernel, sigma);
    const int h = kernel / 2;
    const int R = frame.rows(), C = frame.cols();
    PressureFrame out(R, C);
    out.pitch_row_m = frame.pitch_row_m;
    out.pitch_col_m = frame.pitch_col_m;
    for (int r = 0; r < R; ++r) {
        for (int c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int i = -h; i <= h; ++i) {
                const int rr = reflect(r + i, R);
                for (int j = -h; j <= h; ++j) {
                    acc += k[static_cast<std::size_t>((i + h) * kernel + (j + h))] * frame.at(rr, reflect(c + j, C));
                }
            }
            out.at(r, c) = std::max(0.0, acc);
        }
    }
    return out;
}

PressureFrame pad_center(const PressureFrame& frame, int target_rows, int target_cols) {
    if (frame.rows() > target_rows || frame.cols() > target_cols) {
        throw ArgumentError("frame " + std::to_string(frame.rows()) + "x" + std::to_string(frame.cols()) +
                            " exceeds pad target " + std::to_string(target_rows) + "x" +
                            std::to_string(target_cols));
    }
    if (frame.rows() == target_rows && frame.cols() == target_cols) return frame;
    const int top = (target_rows - frame.rows()) / 2;
    const int left = (target_cols - frame.cols()) / 2;
    PressureFrame out(target_rows, target_cols);
    out.pitch_row_m = frame.pitch_row_m;
    out.pitch_col_m = frame.pitch_col_m;
    for (int r = 0; r < frame.rows(); ++r)
        for (int c = 0; c < frame.cols(); ++c) out.at(r + top, c + left) = frame.at(r, c);
    return out;
}

PressureFrame normalize_frame(const PressureFrame& frame, Normalization mode, double dataset_max) {
    switch (mode) {
        case Normalization::none: return frame;
        case Normalization::per_dataset_max: {
            if (!(dataset_max > 0.0)) throw ArgumentError("dataset_max must be > 0 for per-dataset normalization");
            PressureFrame out = frame;
            for (double& v : out.values()) v /= dataset_max;
            return out;
        }
        case Normalization::per_frame_max: {
            const double m = frame.max();
            if (m <= 0.0) return frame;
            PressureFrame out = frame;
            for (double& v : out.values()) v /= m;
            return out;
        }
    }
    return frame;
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

void check_bounds(const AugmentOp& op, int rows, int cols, const AugmentConfig& bounds) {
    if (const auto* rot = std::get_if<Rotate>(&op)) {
        if (!std::isfinite(rot->degrees) || std::abs(rot->degrees) > bounds.max_rotation_deg) {
            throw ArgumentError("rotation of " + std::to_string(rot->degrees) + " degrees exceeds +/-" +
                                std::to_string(bounds.max_rotation_deg));
        }
    } else if (const auto* sh = std::get_if<Shift>(&op)) {
        if (std::abs(sh->rows) > bounds.max_shift_frac * rows || std::abs(sh->cols) > bounds.max_shift_frac * cols) {
            throw ArgumentError("shift (" + std::to_string(sh->rows) + ", " + std::to_string(sh->cols) +
                                ") exceeds the configured bound");
        }
    }
}

double sample_zero_fill(const PressureFrame& f, double y, double x) {
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const double fy = y - y0, fx = x - x0;
    auto px = [&](int r, int c) {
        return (r < 0 || c < 0 || r >= f.rows() || c >= f.cols()) ? 0.0 : f.at(r, c);
    };
    return (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
           fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
}

}  // namespace

JointCoord transform_point(const JointCoord& p, const AugmentOp& op, int rows, int cols) {
    if (std::holds_alternative<HFlip>(op)) return {p.row, (cols - 1) - p.col};
    if (const auto* sh = std::get_if<Shift>(&op)) return {p.row + sh->rows, p.col + sh->cols};
    const double t = std::get<Rotate>(op).degrees * kDegToRad;
    const double cr = (rows - 1) / 2.0, cc = (cols - 1) / 2.0;
    const double dr = p.row - cr, dc = p.col - cc;
    return {cr + std::cos(t) * dr - std::sin(t) * dc, cc + std::sin(t) * dr + std::cos(t) * dc};
}

Sample augment_sample(const Sample& sample, const AugmentOp& op, const AugmentConfig& bounds) {
    const int R = sample.frame.rows(), C = sample.frame.cols();
    check_bounds(op, R, C, bounds);
    Sample out = sample;
    PressureFrame& f = out.frame;

    if (std::holds_alternative<HFlip>(op)) {
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) f.at(r, c) = sample.frame.at(r, C - 1 - c);
        if (sample.posture == Posture::left_side) out.posture = Posture::right_side;
        else if (sample.posture == Posture::right_side) out.posture = Posture::left_side;
    } else if (const auto* sh = std::get_if<Shift>(&op)) {
        for (int r = 0; r < R; ++r) {
            for (int c = 0; c < C; ++c) {
                const int sr = r - sh->rows, sc = c - sh->cols;
                f.at(r, c) = (sr < 0 || sc < 0 || sr >= R || sc >= C) ? 0.0 : sample.frame.at(sr, sc);
            }
        }
    } else {
        const double deg = std::get<Rotate>(op).degrees;
        if (deg != 0.0) {
            // Inverse map each output cell into the source frame.
            const Rotate inverse{-deg};
            for (int r = 0; r < R; ++r) {
                for (int c = 0; c < C; ++c) {
                    const JointCoord src = transform_point({double(r), double(c)}, inverse, R, C);
                    f.at(r, c) = std::max(0.0, sample_zero_fill(sample.frame, src.row, src.col));
                }
            }
        }
    }
    if (out.joints) {
        for (auto& j : out.joints->coords) j = transform_point(j, op, R, C);
    }
    return out;
}

std::vector<AugmentOp> draw_augmentation(const AugmentConfig& cfg, int rows, int cols, std::mt19937_64& rng) {
    std::vector<AugmentOp> ops;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(rng) < cfg.flip_prob) ops.emplace_back(HFlip{});
    if (cfg.max_rotation_deg > 0.0) {
        std::uniform_real_distribution<double> rot(-cfg.max_rotation_deg, cfg.max_rotation_deg);
        ops.emplace_back(Rotate{rot(rng)});
    }
    const int max_r = static_cast<int>(std::floor(cfg.max_shift_frac * rows));
    const int max_c = static_cast<int>(std::floor(cfg.max_shift_frac * cols));
    if (max_r > 0 || max_c > 0) {
        std::uniform_int_distribution<int> dr(-max_r, max_r), dc(-max_c, max_c);
        const int a = dr(rng);
        const int b = dc(rng);
        ops.emplace_back(Shift{a, b});
    }
    return ops;
}

Sample augment_random(const Sample& sample, const AugmentConfig& cfg, std::mt19937_64& rng) {
    Sample out = sample;
    for (const auto& op : draw_augmentation(cfg, sample.frame.rows(), sample.frame.cols(), rng)) {
        out = augment_sample(out, op, cfg);
    }
    return out;
}

JointSet inject_joint_noise(const JointSet& joints, double sigma_px, std::mt19937_64& rng) {
    if (!(sigma_px >= 0.0)) throw ArgumentError("joint noise sigma must be >= 0");
    if (sigma_px == 0.0) return joints;
    std::normal_distribution<double> noise(0.0, sigma_px);
    JointSet out = joints;
    for (auto& j : out.coords) {
        j.row += noise(rng);
        j.col += noise(rng);
    }
    return out;
}

double joint_noise_sigma_for_l1(double l1_px) {
    // E|N(0, s^2)| = s * sqrt(2 / pi), two coordinates per joint.
    return l1_px / (2.0 * std::sqrt(2.0 / std::numbers::pi));
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------
Sample prepare_geometry(const Sample& sample, const PreprocessConfig& cfg) {
    cfg.validate();
    Sample out = sample;
    out.frame = upsample_bilinear(sample.frame, cfg.upsample_factor);
    if (cfg.smooth) out.frame = gaussian_smooth(out.frame, cfg.gaussian_kernel, cfg.gaussian_sigma);
    const int top = (cfg.target_rows - out.frame.rows()) / 2;
    const int left = (cfg.target_cols - out.frame.cols()) / 2;
    out.frame = pad_center(out.frame, cfg.target_rows, cfg.target_cols);
    if (out.joints) {
        for (auto& j : out.joints->coords) {
            j.row = j.row * cfg.upsample_factor + top;
            j.col = j.col * cfg.upsample_factor + left;
        }
    }
    return out;
}

std::vector<double> joint_vector(const std::optional<JointSet>& joints, int joint_count, int rows, int cols) {
    std::vector<double> v(static_cast<std::size_t>(2 * joint_count), 0.0);
    if (!joints) return v;
    if (joints->count() != joint_count) {
        throw ShapeError("sample carries " + std::to_string(joints->count()) + " joints, model expects " +
                         std::to_string(joint_count));
    }
    for (int j = 0; j < joint_count; ++j) {
        v[static_cast<std::size_t>(2 * j)] = joints->coords[static_cast<std::size_t>(j)].row / rows;
        v[static_cast<std::size_t>(2 * j + 1)] = joints->coords[static_cast<std::size_t>(j)].col / cols;
    }
    return v;
}

PreparedInput finalize_prepared(const Sample& geometric, const PreprocessConfig& cfg,
                                std::optional<double> dataset_max, int joint_count) {
    if (geometric.frame.rows() != cfg.target_rows || geometric.frame.cols() != cfg.target_cols) {
        throw ShapeError("prepared frame does not match target dims");
    }
    PreparedInput in;
    in.frame = normalize_frame(geometric.frame, cfg.normalization, dataset_max.value_or(0.0));
    in.joint_vector = joint_vector(geometric.joints, joint_count, cfg.target_rows, cfg.target_cols);
    in.joints_present = geometric.joints.has_value();
    return in;
}

PreparedInput preprocess_pipeline(const Sample& sample, const PreprocessConfig& cfg,
                                  std::optional<double> dataset_max, int joint_count) {
    return finalize_prepared(prepare_geometry(sample, cfg), cfg, dataset_max, joint_count);
}

}  // namespace massnet
