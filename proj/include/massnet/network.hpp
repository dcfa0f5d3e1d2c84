#pragma once

#include "massnet/layers.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace massnet::nn {

// Architecture hyperparameters. Defaults land the dual-branch model inside the
// 1.80M-3.47M parameter band for 4-8 sensing layers.
struct ModelConfig {
    int n_sensing_layers = 4;
    int stem_channels = 32;
    int trunk_channels = 128;
    int bottleneck_ratio = 4;
    int deep_feature_dim = 256;
    int joint_feature_dim = 128;
    int joint_hidden1 = 64;
    int joint_hidden2 = 128;
    int embedding_dim = 128;
    int cbam_reduction = 16;
    int cbam_spatial_kernel = 7;
    int joint_count = 14;
    bool use_joint_branch = true;
    bool use_mass_branch = true;
    double leaky_slope = 0.01;
    int input_rows = 192;
    int input_cols = 192;

    void validate() const;
    int regressor_inputs() const;
    bool operator==(const ModelConfig&) const = default;
};

// Conv -> BN -> optional LeakyReLU.
class ConvBnAct {
public:
    ConvBnAct() = default;
    ConvBnAct(const std::string& name, int in, int out, int kernel, int stride, int padding, bool activation,
              double slope);

    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& grad_out);
    void collect(std::vector<Parameter*>& out);
    void collect_buffers(std::vector<NamedBuffer>& out);
    void init(std::mt19937_64& rng) { conv.init(rng); }

    Conv2d conv;
    BatchNorm2d bn;

private:
    bool activation_ = true;
    LeakyReLU act_;
};

// Parallel 1x1 / 3x3 / 5x5 same-padded convolutions, summed, then batch
// normalization. No activation.
class TriConv {
public:
    TriConv() = default;
    TriConv(const std::string& name, int in, int out);

    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& grad_out);
    void collect(std::vector<Parameter*>& out);
    void collect_buffers(std::vector<NamedBuffer>& out);
    void init(std::mt19937_64& rng);

    Conv2d conv1, conv3, conv5;
    BatchNorm2d bn;
};

// Bottleneck: 1x1 reduce (BN, LeakyReLU) -> TriConv -> 1x1 expand (BN),
// plus identity shortcut.
class SensingBlock {
public:
    SensingBlock() = default;
    SensingBlock(const std::string& name, int channels, int ratio, double slope);

    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& grad_out);
    void collect(std::vector<Parameter*>& out);
    void collect_buffers(std::vector<NamedBuffer>& out);
    void init(std::mt19937_64& rng);

    ConvBnAct reduce;
    TriConv tri;
    ConvBnAct expand;
};

// Channel attention (shared MLP over avg- and max-pooled descriptors, sigmoid)
// followed by spatial attention (conv over channel-wise avg/max maps,
// sigmoid). Output = x * channel_gate * spatial_gate.
class Cbam {
public:
    Cbam() = default;
    Cbam(const std::string& name, int channels, int reduction, int spatial_kernel);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);
    void collect(std::vector<Parameter*>& out);
    void init(std::mt19937_64& rng);

    Linear fc1, fc2;
    Conv2d spatial;

    // Gates from the most recent forward: N x C and N x 1 x H x W.
    const Tensor& channel_gate() const { return channel_gate_; }
    const Tensor& spatial_gate() const { return spatial_gate_; }

private:
    Tensor input_, scaled_, hidden_, channel_gate_, spatial_gate_;
    std::vector<int> max_hw_idx_;  // N x C
    std::vector<int> max_c_idx_;   // N x H x W
};

// Two sensing blocks then CBAM, with a layer-level identity shortcut.
class SensingLayer {
public:
    SensingLayer() = default;
    SensingLayer(const std::string& name, int channels, int ratio, int reduction, int spatial_kernel, double slope);

    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& grad_out);
    void collect(std::vector<Parameter*>& out);
    void collect_buffers(std::vector<NamedBuffer>& out);
    void init(std::mt19937_64& rng);

    SensingBlock block1, block2;
    Cbam cbam;
};

// Stem (two stride-2 Conv-BN-LeakyReLU) -> sensing layers -> TriConv -> global
// average pooling. Input N x 1 x H x W, output N x D.
class DeepFeatureExtractor {
public:
    DeepFeatureExtractor() = default;
    explicit DeepFeatureExtractor(const ModelConfig& cfg);

    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& grad_out);
    void collect(std::vector<Parameter*>& out);
    void collect_buffers(std::vector<NamedBuffer>& out);
    void init(std::mt19937_64& rng);

    ConvBnAct stem1, stem2;
    std::vector<SensingLayer> layers;
    TriConv head;

private:
    int rows_ = 0, cols_ = 0;
    int head_h_ = 0, head_w_ = 0;
};

// 3-layer MLP over the 2J joint vector, 128-d output.
class JointEncoder {
public:
    JointEncoder() = default;
    explicit JointEncoder(const ModelConfig& cfg);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);
    void collect(std::vector<Parameter*>& out);
    void init(std::mt19937_64& rng);

    Linear fc1, fc2, fc3;

private:
    LeakyReLU act1_, act2_;
};

// 2-layer MLP then unit L2 normalization (norm + 1e-12 in the denominator).
class ProjectionHead {
public:
    static constexpr double kNormEps = 1e-12;

    ProjectionHead() = default;
    explicit ProjectionHead(const ModelConfig& cfg);

    Tensor forward(const Tensor& features);
    Tensor backward(const Tensor& grad_out);
    void collect(std::vector<Parameter*>& out);
    void init(std::mt19937_64& rng);

    Linear fc1, fc2;

private:
    LeakyReLU act_;
    Tensor raw_;
    std::vector<double> norms_;
};

class MassNet {
public:
    struct Output {
        Tensor features;                 // N x D (empty without the mass branch)
        Tensor embeddings;               // N x E, unit rows (empty without the mass branch)
        Tensor joint_features;           // N x 128 (empty without the joint branch)
        std::vector<double> predictions;  // N
    };

    MassNet() = default;
    explicit MassNet(const ModelConfig& cfg, std::uint64_t init_seed = 0);

    const ModelConfig& config() const { return cfg_; }

    // images: N x 1 x rows x cols; joints: N x 2J (ignored without joint branch).
    Output forward(const Tensor& images, const Tensor& joints, Mode mode);
    // grad_embeddings may be null (no contrastive term).
    void backward(std::span<const double> grad_predictions, const Tensor* grad_embeddings);

    std::vector<Parameter*> parameters();
    std::vector<NamedBuffer> buffers();
    void zero_grad();
    std::size_t parameter_count();

    // Predictions are output_scale * regressor(x). The scale is fixed (a
    // buffer, not a parameter); it lets the regressor work in standardized
    // units while predictions and losses stay in kg.
    void set_output_bias(double value);
    void set_output_affine(double offset, double scale);
    double output_scale() const { return output_scale_[0]; }
    // Puts every batch-normalization layer in pass-through mode.
    void set_norm_identity(bool on);

    DeepFeatureExtractor deep;
    JointEncoder joint;
    ProjectionHead projection;
    Linear regressor;

private:
    ModelConfig cfg_;
    Tensor output_scale_{std::vector<int>{1}, 1.0};
    int n_ = 0;
};

// Exact number of trainable scalars of the model built from cfg.
std::size_t count_parameters(const ModelConfig& cfg);

}  // namespace massnet::nn
