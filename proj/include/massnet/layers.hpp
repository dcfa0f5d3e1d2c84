#pragma once

#include "massnet/tensor.hpp"

#include <random>
#include <string>
#include <vector>

namespace massnet::nn {

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, std::vector<int> shape) : name(std::move(n)), value(shape), grad(shape) {}
};

struct NamedBuffer {
    std::string name;
    Tensor* tensor;
};

enum class Mode { train, eval };

// Every layer below caches what its backward pass needs during forward, so a
// layer instance must see exactly one forward before each backward.

// ---------------------------------------------------------------------------
// Conv2d: square kernel, symmetric zero padding, optional bias.
// weight: out x in x k x k.
// ---------------------------------------------------------------------------
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride, int padding,
           bool bias);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);

    void collect(std::vector<Parameter*>& out);
    void init(std::mt19937_64& rng);

    int in_channels() const { return in_; }
    int out_channels() const { return out_; }
    int kernel() const { return k_; }
    int stride() const { return stride_; }
    int padding() const { return pad_; }
    int out_size(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

    Parameter weight;
    Parameter bias;

private:
    int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
    bool has_bias_ = false;
    Tensor input_;
};

// ---------------------------------------------------------------------------
// BatchNorm2d over (N, H, W) per channel. Running statistics use momentum
// 0.1 and the unbiased batch variance. `identity` bypasses the layer.
// ---------------------------------------------------------------------------
class BatchNorm2d {
public:
    BatchNorm2d() = default;
    BatchNorm2d(const std::string& name, int channels, double momentum = 0.1, double eps = 1e-5);

    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& grad_out);

    void collect(std::vector<Parameter*>& out);
    void collect_buffers(std::vector<NamedBuffer>& out);

    Parameter gamma;
    Parameter beta;
    Tensor running_mean;
    Tensor running_var;
    bool identity = false;

private:
    std::string name_;
    int channels_ = 0;
    double momentum_ = 0.1, eps_ = 1e-5;
    Mode last_mode_ = Mode::eval;
    Tensor xhat_;
    std::vector<double> inv_std_;
};

// ---------------------------------------------------------------------------
// Linear: x (N x in) -> x W^T + b, weight out x in.
// ---------------------------------------------------------------------------
class Linear {
public:
    Linear() = default;
    Linear(const std::string& name, int in_features, int out_features, bool bias = true);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);

    void collect(std::vector<Parameter*>& out);
    void init(std::mt19937_64& rng);

    int in_features() const { return in_; }
    int out_features() const { return out_; }

    Parameter weight;
    Parameter bias;

private:
    int in_ = 0, out_ = 0;
    bool has_bias_ = true;
    Tensor input_;
};

class LeakyReLU {
public:
    explicit LeakyReLU(double slope = 0.01) : slope_(slope) {}
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out) const;

private:
    double slope_;
    Tensor input_;
};

// Element-wise helpers.
double sigmoid(double x);
void add_inplace(Tensor& a, const Tensor& b);

// Global average pooling N x C x H x W -> N x C.
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& grad_out, int h, int w);

}  // namespace massnet::nn
