#include "massnet/network.hpp"

#include "massnet/errors.hpp"

#include <algorithm>
#include <cmath>

namespace massnet::nn {

namespace {

void check_finite(const Tensor& t, const std::string& where) {
    if (!t.all_finite()) throw NumericError("non-finite activation after " + where);
}

}  // namespace

void ModelConfig::validate() const {
    if (n_sensing_layers < 0 || n_sensing_layers > 12) throw ConfigError("n_sensing_layers must be in [0, 12]");
    if (stem_channels <= 0 || trunk_channels <= 0 || deep_feature_dim <= 0 || joint_feature_dim <= 0 ||
        joint_hidden1 <= 0 || joint_hidden2 <= 0 || embedding_dim <= 0 || joint_count <= 0 ||
        cbam_reduction <= 0 || bottleneck_ratio <= 0 || input_rows <= 0 || input_cols <= 0) {
        throw ConfigError("model dimensions must be positive");
    }
    if (cbam_spatial_kernel <= 0 || cbam_spatial_kernel % 2 == 0) throw ConfigError("cbam_spatial_kernel must be odd");
    if (trunk_channels % bottleneck_ratio != 0) {
        throw ConfigError("trunk_channels (" + std::to_string(trunk_channels) + ") not divisible by bottleneck_ratio (" +
                          std::to_string(bottleneck_ratio) + ")");
    }
    if (n_sensing_layers > 0 && trunk_channels < cbam_reduction) {
        throw ConfigError("CBAM needs at least cbam_reduction channels");
    }
    if (!use_joint_branch && !use_mass_branch) throw ConfigError("at least one branch must be enabled");
    if (!(leaky_slope >= 0.0)) throw ConfigError("leaky_slope must be >= 0");
}

int ModelConfig::regressor_inputs() const {
    return (use_mass_branch ? deep_feature_dim : 0) + (use_joint_branch ? joint_feature_dim : 0);
}

// ---------------------------------------------------------------------------
// ConvBnAct
// ---------------------------------------------------------------------------
ConvBnAct::ConvBnAct(const std::string& name, int in, int out, int kernel, int stride, int padding, bool activation,
                     double slope)
    : conv(name + ".conv", in, out, kernel, stride, padding, false), bn(name + ".bn", out),
      activation_(activation), act_(slope) {}

Tensor ConvBnAct::forward(const Tensor& x, Mode mode) {
    Tensor y = bn.forward(conv.forward(x), mode);
    return activation_ ? act_.forward(y) : y;
}

Tensor ConvBnAct::backward(const Tensor& grad_out) {
    Tensor g = activation_ ? act_.backward(grad_out) : grad_out;
    return conv.backward(bn.backward(g));
}

void ConvBnAct::collect(std::vector<Parameter*>& out) {
    conv.collect(out);
    bn.collect(out);
}

void ConvBnAct::collect_buffers(std::vector<NamedBuffer>& out) { bn.collect_buffers(out); }

// ---------------------------------------------------------------------------
// TriConv
// ---------------------------------------------------------------------------
TriConv::TriConv(const std::string& name, int in, int out)
    : conv1(name + ".conv1", in, out, 1, 1, 0, false), conv3(name + ".conv3", in, out, 3, 1, 1, false),
      conv5(name + ".conv5", in, out, 5, 1, 2, false), bn(name + ".bn", out) {}

Tensor TriConv::forward(const Tensor& x, Mode mode) {
    Tensor y = conv1.forward(x);
    add_inplace(y, conv3.forward(x));
    add_inplace(y, conv5.forward(x));
    return bn.forward(y, mode);
}

Tensor TriConv::backward(const Tensor& grad_out) {
    const Tensor g = bn.backward(grad_out);
    Tensor dx = conv1.backward(g);
    add_inplace(dx, conv3.backward(g));
    add_inplace(dx, conv5.backward(g));
    return dx;
}

void TriConv::collect(std::vector<Parameter*>& out) {
    conv1.collect(out);
    conv3.collect(out);
    conv5.collect(out);
    bn.collect(out);
}

void TriConv::collect_buffers(std::vector<NamedBuffer>& out) { bn.collect_buffers(out); }

void TriConv::init(std::mt19937_64& rng) {
    conv1.init(rng);
    conv3.init(rng);
    conv5.init(rng);
}

// ---------------------------------------------------------------------------
// SensingBlock
// ---------------------------------------------------------------------------
SensingBlock::SensingBlock(const std::string& name, int channels, int ratio, double slope) {
    if (ratio <= 0 || channels % ratio != 0) {
        throw ConfigError(name + ": " + std::to_string(channels) + " channels not divisible by bottleneck ratio " +
                          std::to_string(ratio));
    }
    const int inner = channels / ratio;
    reduce = ConvBnAct(name + ".reduce", channels, inner, 1, 1, 0, true, slope);
    tri = TriConv(name + ".tri", inner, inner);
    expand = ConvBnAct(name + ".expand", inner, channels, 1, 1, 0, false, slope);
}

Tensor SensingBlock::forward(const Tensor& x, Mode mode) {
    Tensor y = expand.forward(tri.forward(reduce.forward(x, mode), mode), mode);
    add_inplace(y, x);
    return y;
}

Tensor SensingBlock::backward(const Tensor& grad_out) {
    Tensor dx = reduce.backward(tri.backward(expand.backward(grad_out)));
    add_inplace(dx, grad_out);
    return dx;
}

void SensingBlock::collect(std::vector<Parameter*>& out) {
    reduce.collect(out);
    tri.collect(out);
    expand.collect(out);
}

void SensingBlock::collect_buffers(std::vector<NamedBuffer>& out) {
    reduce.collect_buffers(out);
    tri.collect_buffers(out);
    expand.collect_buffers(out);
}

void SensingBlock::init(std::mt19937_64& rng) {
    reduce.init(rng);
    tri.init(rng);
    expand.init(rng);
}

// ---------------------------------------------------------------------------
// CBAM
// ---------------------------------------------------------------------------
Cbam::Cbam(const std::string& name, int channels, int reduction, int spatial_kernel) {
    if (channels < reduction) {
        throw ConfigError(name + ": CBAM needs channels >= reduction (" + std::to_string(channels) + " < " +
                          std::to_string(reduction) + ")");
    }
    const int hidden = channels / reduction;
    fc1 = Linear(name + ".fc1", channels, hidden);
    fc2 = Linear(name + ".fc2", hidden, channels);
    spatial = Conv2d(name + ".spatial", 2, 1, spatial_kernel, 1, spatial_kernel / 2, true);
}

void Cbam::collect(std::vector<Parameter*>& out) {
    fc1.collect(out);
    fc2.collect(out);
    spatial.collect(out);
}

void Cbam::init(std::mt19937_64& rng) {
    fc1.init(rng);
    fc2.init(rng);
    spatial.init(rng);
}

Tensor Cbam::forward(const Tensor& x) {
    if (x.rank() != 4 || x.dim(1) != fc1.in_features()) {
        throw ShapeError(fc1.weight.name + ": CBAM input " + x.shape_string());
    }
    input_ = x;
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t HW = static_cast<std::size_t>(H) * W;

    // Channel descriptors, avg rows first then max rows, through one MLP pass.
    Tensor desc({2 * N, C});
    max_hw_idx_.assign(static_cast<std::size_t>(N) * C, 0);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const double* p = x.data() + (static_cast<std::size_t>(n) * C + c) * HW;
            double s = 0.0, m = p[0];
            int arg = 0;
            for (std::size_t i = 0; i < HW; ++i) {
                s += p[i];
                if (p[i] > m) {
                    m = p[i];
                    arg = static_cast<int>(i);
                }
            }
            desc[static_cast<std::size_t>(n) * C + c] = s / static_cast<double>(HW);
            desc[static_cast<std::size_t>(N + n) * C + c] = m;
            max_hw_idx_[static_cast<std::size_t>(n) * C + c] = arg;
        }
    }
    hidden_ = fc1.forward(desc);
    Tensor relu = hidden_;
    for (double& v : relu.values()) v = std::max(v, 0.0);
    const Tensor z = fc2.forward(relu);
    channel_gate_ = Tensor({N, C});
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            channel_gate_[static_cast<std::size_t>(n) * C + c] =
                sigmoid(z[static_cast<std::size_t>(n) * C + c] + z[static_cast<std::size_t>(N + n) * C + c]);
        }
    }

    scaled_ = Tensor(x.shape());
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const double g = channel_gate_[static_cast<std::size_t>(n) * C + c];
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) scaled_[off + i] = x[off + i] * g;
        }
    }

    Tensor maps({N, 2, H, W});
    max_c_idx_.assign(static_cast<std::size_t>(N) * HW, 0);
    for (int n = 0; n < N; ++n) {
        for (std::size_t i = 0; i < HW; ++i) {
            double s = 0.0, m = scaled_[(static_cast<std::size_t>(n) * C) * HW + i];
            int arg = 0;
            for (int c = 0; c < C; ++c) {
                const double v = scaled_[(static_cast<std::size_t>(n) * C + c) * HW + i];
                s += v;
                if (v > m) {
                    m = v;
                    arg = c;
                }
            }
            maps[(static_cast<std::size_t>(n) * 2) * HW + i] = s / C;
            maps[(static_cast<std::size_t>(n) * 2 + 1) * HW + i] = m;
            max_c_idx_[static_cast<std::size_t>(n) * HW + i] = arg;
        }
    }
    spatial_gate_ = spatial.forward(maps);
    for (double& v : spatial_gate_.values()) v = sigmoid(v);

    Tensor y(x.shape());
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) {
                y[off + i] = scaled_[off + i] * spatial_gate_[static_cast<std::size_t>(n) * HW + i];
            }
        }
    }
    return y;
}

Tensor Cbam::backward(const Tensor& grad_out) {
    const int N = input_.dim(0), C = input_.dim(1), H = input_.dim(2), W = input_.dim(3);
    const std::size_t HW = static_cast<std::size_t>(H) * W;

    // Spatial stage.
    Tensor d_scaled(input_.shape());
    Tensor d_logit({N, 1, H, W});
    for (int n = 0; n < N; ++n) {
        for (std::size_t i = 0; i < HW; ++i) {
            const double g = spatial_gate_[static_cast<std::size_t>(n) * HW + i];
            double acc = 0.0;
            for (int c = 0; c < C; ++c) {
                const std::size_t k = (static_cast<std::size_t>(n) * C + c) * HW + i;
                acc += grad_out[k] * scaled_[k];
                d_scaled[k] = grad_out[k] * g;
            }
            d_logit[static_cast<std::size_t>(n) * HW + i] = acc * g * (1.0 - g);
        }
    }
    const Tensor d_maps = spatial.backward(d_logit);
    for (int n = 0; n < N; ++n) {
        for (std::size_t i = 0; i < HW; ++i) {
            const double d_avg = d_maps[(static_cast<std::size_t>(n) * 2) * HW + i] / C;
            for (int c = 0; c < C; ++c) d_scaled[(static_cast<std::size_t>(n) * C + c) * HW + i] += d_avg;
            const int arg = max_c_idx_[static_cast<std::size_t>(n) * HW + i];
            d_scaled[(static_cast<std::size_t>(n) * C + arg) * HW + i] +=
                d_maps[(static_cast<std::size_t>(n) * 2 + 1) * HW + i];
        }
    }

    // Channel stage.
    Tensor dx(input_.shape());
    Tensor d_z({2 * N, C});
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const double g = channel_gate_[static_cast<std::size_t>(n) * C + c];
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * HW;
            double acc = 0.0;
            for (std::size_t i = 0; i < HW; ++i) {
                acc += d_scaled[off + i] * input_[off + i];
                dx[off + i] = d_scaled[off + i] * g;
            }
            const double dl = acc * g * (1.0 - g);
            d_z[static_cast<std::size_t>(n) * C + c] = dl;
            d_z[static_cast<std::size_t>(N + n) * C + c] = dl;
        }
    }
    Tensor d_hidden = fc2.backward(d_z);
    for (std::size_t i = 0; i < d_hidden.numel(); ++i) {
        if (!(hidden_[i] > 0.0)) d_hidden[i] = 0.0;
    }
    const Tensor d_desc = fc1.backward(d_hidden);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const double d_avg = d_desc[static_cast<std::size_t>(n) * C + c] / static_cast<double>(HW);
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) dx[off + i] += d_avg;
            dx[off + static_cast<std::size_t>(max_hw_idx_[static_cast<std::size_t>(n) * C + c])] +=
                d_desc[static_cast<std::size_t>(N + n) * C + c];
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// SensingLayer
// ---------------------------------------------------------------------------
SensingLayer::SensingLayer(const std::string& name, int channels, int ratio, int reduction, int spatial_kernel,
                           double slope)
    : block1(name + ".block1", channels, ratio, slope), block2(name + ".block2", channels, ratio, slope),
      cbam(name + ".cbam", channels, reduction, spatial_kernel) {}

Tensor SensingLayer::forward(const Tensor& x, Mode mode) {
    Tensor y = cbam.forward(block2.forward(block1.forward(x, mode), mode));
    add_inplace(y, x);
    return y;
}

Tensor SensingLayer::backward(const Tensor& grad_out) {
    Tensor dx = block1.backward(block2.backward(cbam.backward(grad_out)));
    add_inplace(dx, grad_out);
    return dx;
}

void SensingLayer::collect(std::vector<Parameter*>& out) {
    block1.collect(out);
    block2.collect(out);
    cbam.collect(out);
}

void SensingLayer::collect_buffers(std::vector<NamedBuffer>& out) {
    block1.collect_buffers(out);
    block2.collect_buffers(out);
}

void SensingLayer::init(std::mt19937_64& rng) {
    block1.init(rng);
    block2.init(rng);
    cbam.init(rng);
}

// ---------------------------------------------------------------------------
// DeepFeatureExtractor
// ---------------------------------------------------------------------------
DeepFeatureExtractor::DeepFeatureExtractor(const ModelConfig& cfg)
    : stem1("deep.stem1", 1, cfg.stem_channels, 3, 2, 1, true, cfg.leaky_slope),
      stem2("deep.stem2", cfg.stem_channels, cfg.trunk_channels, 3, 2, 1, true, cfg.leaky_slope),
      head("deep.head", cfg.trunk_channels, cfg.deep_feature_dim), rows_(cfg.input_rows), cols_(cfg.input_cols) {
    for (int i = 0; i < cfg.n_sensing_layers; ++i) {
        layers.emplace_back("deep.layers." + std::to_string(i), cfg.trunk_channels, cfg.bottleneck_ratio,
                            cfg.cbam_reduction, cfg.cbam_spatial_kernel, cfg.leaky_slope);
    }
}

Tensor DeepFeatureExtractor::forward(const Tensor& x, Mode mode) {
    if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != rows_ || x.dim(3) != cols_) {
        throw ShapeError("deep feature extractor expects Nx1x" + std::to_string(rows_) + "x" +
                         std::to_string(cols_) + " input, got " + x.shape_string());
    }
    Tensor h = stem1.forward(x, mode);
    check_finite(h, "deep.stem1");
    h = stem2.forward(h, mode);
    check_finite(h, "deep.stem2");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = layers[i].forward(h, mode);
        check_finite(h, "deep.layers." + std::to_string(i));
    }
    h = head.forward(h, mode);
    check_finite(h, "deep.head");
    head_h_ = h.dim(2);
    head_w_ = h.dim(3);
    return global_avg_pool(h);
}

Tensor DeepFeatureExtractor::backward(const Tensor& grad_out) {
    Tensor g = head.backward(global_avg_pool_backward(grad_out, head_h_, head_w_));
    for (std::size_t i = layers.size(); i-- > 0;) g = layers[i].backward(g);
    return stem1.backward(stem2.backward(g));
}

void DeepFeatureExtractor::collect(std::vector<Parameter*>& out) {
    stem1.collect(out);
    stem2.collect(out);
    for (auto& l : layers) l.collect(out);
    head.collect(out);
}

void DeepFeatureExtractor::collect_buffers(std::vector<NamedBuffer>& out) {
    stem1.collect_buffers(out);
    stem2.collect_buffers(out);
    for (auto& l : layers) l.collect_buffers(out);
    head.collect_buffers(out);
}

void DeepFeatureExtractor::init(std::mt19937_64& rng) {
    stem1.init(rng);
    stem2.init(rng);
    for (auto& l : layers) l.init(rng);
    head.init(rng);
}

// ---------------------------------------------------------------------------
// JointEncoder / ProjectionHead
// ---------------------------------------------------------------------------
JointEncoder::JointEncoder(const ModelConfig& cfg)
    : fc1("joint.fc1", 2 * cfg.joint_count, cfg.joint_hidden1), fc2("joint.fc2", cfg.joint_hidden1, cfg.joint_hidden2),
      fc3("joint.fc3", cfg.joint_hidden2, cfg.joint_feature_dim), act1_(cfg.leaky_slope), act2_(cfg.leaky_slope) {}

Tensor JointEncoder::forward(const Tensor& x) {
    return fc3.forward(act2_.forward(fc2.forward(act1_.forward(fc1.forward(x)))));
}

Tensor JointEncoder::backward(const Tensor& grad_out) {
    return fc1.backward(act1_.backward(fc2.backward(act2_.backward(fc3.backward(grad_out)))));
}

void JointEncoder::collect(std::vector<Parameter*>& out) {
    fc1.collect(out);
    fc2.collect(out);
    fc3.collect(out);
}

void JointEncoder::init(std::mt19937_64& rng) {
    fc1.init(rng);
    fc2.init(rng);
    fc3.init(rng);
}

ProjectionHead::ProjectionHead(const ModelConfig& cfg)
    : fc1("projection.fc1", cfg.deep_feature_dim, cfg.deep_feature_dim),
      fc2("projection.fc2", cfg.deep_feature_dim, cfg.embedding_dim), act_(cfg.leaky_slope) {}

Tensor ProjectionHead::forward(const Tensor& features) {
    raw_ = fc2.forward(act_.forward(fc1.forward(features)));
    const int N = raw_.dim(0), E = raw_.dim(1);
    norms_.assign(static_cast<std::size_t>(N), 0.0);
    Tensor out = raw_;
    for (int n = 0; n < N; ++n) {
        double s = 0.0;
        for (int e = 0; e < E; ++e) s += raw_[static_cast<std::size_t>(n) * E + e] * raw_[static_cast<std::size_t>(n) * E + e];
        const double norm = std::sqrt(s);
        if (!(norm > 0.0)) throw NumericError("projection head produced a zero-norm embedding");
        norms_[static_cast<std::size_t>(n)] = norm;
        for (int e = 0; e < E; ++e) out[static_cast<std::size_t>(n) * E + e] /= norm + kNormEps;
    }
    return out;
}

Tensor ProjectionHead::backward(const Tensor& grad_out) {
    const int N = raw_.dim(0), E = raw_.dim(1);
    Tensor d_raw({N, E});
    for (int n = 0; n < N; ++n) {
        const double norm = norms_[static_cast<std::size_t>(n)];
        const double d = norm + kNormEps;
        double zdu = 0.0;
        for (int e = 0; e < E; ++e) zdu += raw_[static_cast<std::size_t>(n) * E + e] * grad_out[static_cast<std::size_t>(n) * E + e];
        for (int e = 0; e < E; ++e) {
            const std::size_t k = static_cast<std::size_t>(n) * E + e;
            d_raw[k] = grad_out[k] / d - raw_[k] * zdu / (norm * d * d);
        }
    }
    return fc1.backward(act_.backward(fc2.backward(d_raw)));
}

void ProjectionHead::collect(std::vector<Parameter*>& out) {
    fc1.collect(out);
    fc2.collect(out);
}

void ProjectionHead::init(std::mt19937_64& rng) {
    fc1.init(rng);
    fc2.init(rng);
}

// ---------------------------------------------------------------------------
// MassNet
// ---------------------------------------------------------------------------
MassNet::MassNet(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    cfg.validate();
    std::mt19937_64 rng(init_seed);
    if (cfg.use_mass_branch) {
        deep = DeepFeatureExtractor(cfg);
        projection = ProjectionHead(cfg);
        deep.init(rng);
        projection.init(rng);
    }
    if (cfg.use_joint_branch) {
        joint = JointEncoder(cfg);
        joint.init(rng);
    }
    regressor = Linear("regressor", cfg.regressor_inputs(), 1);
    regressor.init(rng);
}

MassNet::Output MassNet::forward(const Tensor& images, const Tensor& joints, Mode mode) {
    Output out;
    int N = -1;
    if (cfg_.use_mass_branch) {
        N = images.dim(0);
        out.features = deep.forward(images, mode);
        out.embeddings = projection.forward(out.features);
        check_finite(out.embeddings, "projection");
    }
    if (cfg_.use_joint_branch) {
        if (joints.rank() != 2 || joints.dim(1) != 2 * cfg_.joint_count || (N >= 0 && joints.dim(0) != N)) {
            throw ShapeError("joint input must be Nx" + std::to_string(2 * cfg_.joint_count) + ", got " +
                             joints.shape_string());
        }
        N = joints.dim(0);
        out.joint_features = joint.forward(joints);
        check_finite(out.joint_features, "joint");
    }
    n_ = N;
    const int D = cfg_.use_mass_branch ? cfg_.deep_feature_dim : 0;
    const int J = cfg_.use_joint_branch ? cfg_.joint_feature_dim : 0;
    Tensor fused({N, D + J});
    for (int n = 0; n < N; ++n) {
        for (int d = 0; d < D; ++d) fused[static_cast<std::size_t>(n) * (D + J) + d] = out.features[static_cast<std::size_t>(n) * D + d];
        for (int j = 0; j < J; ++j) {
            fused[static_cast<std::size_t>(n) * (D + J) + D + j] = out.joint_features[static_cast<std::size_t>(n) * J + j];
        }
    }
    const Tensor pred = regressor.forward(fused);
    check_finite(pred, "regressor");
    out.predictions.resize(static_cast<std::size_t>(N));
    for (int n = 0; n < N; ++n) out.predictions[static_cast<std::size_t>(n)] = output_scale_[0] * pred[static_cast<std::size_t>(n)];
    return out;
}

void MassNet::backward(std::span<const double> grad_predictions, const Tensor* grad_embeddings) {
    const int N = n_;
    if (static_cast<int>(grad_predictions.size()) != N) throw ShapeError("prediction gradient length mismatch");
    Tensor g({N, 1});
    for (int n = 0; n < N; ++n) g[static_cast<std::size_t>(n)] = output_scale_[0] * grad_predictions[static_cast<std::size_t>(n)];
    const Tensor d_fused = regressor.backward(g);
    const int D = cfg_.use_mass_branch ? cfg_.deep_feature_dim : 0;
    const int J = cfg_.use_joint_branch ? cfg_.joint_feature_dim : 0;
    if (cfg_.use_joint_branch) {
        Tensor dj({N, J});
        for (int n = 0; n < N; ++n)
            for (int j = 0; j < J; ++j) dj[static_cast<std::size_t>(n) * J + j] = d_fused[static_cast<std::size_t>(n) * (D + J) + D + j];
        joint.backward(dj);
    }
    if (cfg_.use_mass_branch) {
        Tensor df({N, D});
        for (int n = 0; n < N; ++n)
            for (int d = 0; d < D; ++d) df[static_cast<std::size_t>(n) * D + d] = d_fused[static_cast<std::size_t>(n) * (D + J) + d];
        if (grad_embeddings != nullptr) add_inplace(df, projection.backward(*grad_embeddings));
        deep.backward(df);
    }
}

std::vector<Parameter*> MassNet::parameters() {
    std::vector<Parameter*> out;
    if (cfg_.use_mass_branch) {
        deep.collect(out);
        projection.collect(out);
    }
    if (cfg_.use_joint_branch) joint.collect(out);
    regressor.collect(out);
    return out;
}

std::vector<NamedBuffer> MassNet::buffers() {
    std::vector<NamedBuffer> out;
    if (cfg_.use_mass_branch) deep.collect_buffers(out);
    out.push_back({"regressor.output_scale", &output_scale_});
    return out;
}

void MassNet::zero_grad() {
    for (auto* p : parameters()) p->grad.zero();
}

std::size_t MassNet::parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->value.numel();
    return n;
}

void MassNet::set_output_bias(double value) { regressor.bias.value[0] = value / output_scale_[0]; }

void MassNet::set_output_affine(double offset, double scale) {
    if (!(scale > 0.0)) throw ArgumentError("output scale must be > 0");
    output_scale_[0] = scale;
    set_output_bias(offset);
}

void MassNet::set_norm_identity(bool on) {
    if (!cfg_.use_mass_branch) return;
    auto set = [on](TriConv& t) { t.bn.identity = on; };
    deep.stem1.bn.identity = on;
    deep.stem2.bn.identity = on;
    for (auto& l : deep.layers) {
        for (SensingBlock* b : {&l.block1, &l.block2}) {
            b->reduce.bn.identity = on;
            set(b->tri);
            b->expand.bn.identity = on;
        }
    }
    set(deep.head);
}

std::size_t count_parameters(const ModelConfig& cfg) {
    MassNet net(cfg);
    return net.parameter_count();
}

}  // namespace massnet::nn
