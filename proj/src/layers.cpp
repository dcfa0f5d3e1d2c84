#include "massnet/layers.hpp"

#include "massnet/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace massnet::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

namespace {

void uniform_init(Tensor& t, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : t.values()) v = u(rng);
}

void im2col(const double* x, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, double* cols) {
    const std::size_t P = static_cast<std::size_t>(Ho) * Wo;
    for (int c = 0; c < C; ++c) {
        const double* xc = x + static_cast<std::size_t>(c) * H * W;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                double* row = cols + ((static_cast<std::size_t>(c) * k + ki) * k + kj) * P;
                for (int oh = 0; oh < Ho; ++oh) {
                    const int ih = oh * stride - pad + ki;
                    double* dst = row + static_cast<std::size_t>(oh) * Wo;
                    if (ih < 0 || ih >= H) {
                        std::fill(dst, dst + Wo, 0.0);
                        continue;
                    }
                    const double* src = xc + static_cast<std::size_t>(ih) * W;
                    for (int ow = 0; ow < Wo; ++ow) {
                        const int iw = ow * stride - pad + kj;
                        dst[ow] = (iw < 0 || iw >= W) ? 0.0 : src[iw];
                    }
                }
            }
        }
    }
}

void col2im_add(const double* cols, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, double* x) {
    const std::size_t P = static_cast<std::size_t>(Ho) * Wo;
    for (int c = 0; c < C; ++c) {
        double* xc = x + static_cast<std::size_t>(c) * H * W;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const double* row = cols + ((static_cast<std::size_t>(c) * k + ki) * k + kj) * P;
                for (int oh = 0; oh < Ho; ++oh) {
                    const int ih = oh * stride - pad + ki;
                    if (ih < 0 || ih >= H) continue;
                    const double* src = row + static_cast<std::size_t>(oh) * Wo;
                    double* dst = xc + static_cast<std::size_t>(ih) * W;
                    for (int ow = 0; ow < Wo; ++ow) {
                        const int iw = ow * stride - pad + kj;
                        if (iw >= 0 && iw < W) dst[iw] += src[ow];
                    }
                }
            }
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------
Conv2d::Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride, int padding,
               bool bias)
    : weight(name + ".weight", {out_channels, in_channels, kernel, kernel}),
      in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), pad_(padding), has_bias_(bias) {
    if (in_channels <= 0 || out_channels <= 0 || kernel <= 0 || stride <= 0 || padding < 0) {
        throw ShapeError("invalid convolution geometry for " + name);
    }
    if (bias) this->bias = Parameter(name + ".bias", {out_channels});
}

void Conv2d::collect(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    if (has_bias_) out.push_back(&bias);
}

void Conv2d::init(std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_ * k_ * k_));
    uniform_init(weight.value, bound, rng);
    if (has_bias_) uniform_init(bias.value, bound, rng);
}

Tensor Conv2d::forward(const Tensor& x) {
    if (x.rank() != 4 || x.dim(1) != in_) {
        throw ShapeError(weight.name + ": expected " + std::to_string(in_) + " input channels, got tensor " +
                         x.shape_string());
    }
    input_ = x;
    const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
    const int Ho = out_size(H), Wo = out_size(W);
    if (Ho <= 0 || Wo <= 0) throw ShapeError(weight.name + ": input too small " + x.shape_string());
    const int K = in_ * k_ * k_;
    const int P = Ho * Wo;
    Tensor y({N, out_, Ho, Wo});
    ConstMapMat wmat(weight.value.data(), out_, K);
    const bool pointwise = k_ == 1 && stride_ == 1 && pad_ == 0;
    std::vector<double> cols(pointwise ? 0 : static_cast<std::size_t>(K) * P);
    for (int n = 0; n < N; ++n) {
        const double* xn = x.data() + static_cast<std::size_t>(n) * in_ * H * W;
        MapMat yn(y.data() + static_cast<std::size_t>(n) * out_ * P, out_, P);
        if (pointwise) {
            yn.noalias() = wmat * ConstMapMat(xn, in_, P);
        } else {
            im2col(xn, in_, H, W, k_, stride_, pad_, Ho, Wo, cols.data());
            yn.noalias() = wmat * ConstMapMat(cols.data(), K, P);
        }
        if (has_bias_) {
            for (int o = 0; o < out_; ++o) yn.row(o).array() += bias.value[static_cast<std::size_t>(o)];
        }
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
    const int N = input_.dim(0), H = input_.dim(2), W = input_.dim(3);
    const int Ho = out_size(H), Wo = out_size(W);
    if (grad_out.rank() != 4 || grad_out.dim(0) != N || grad_out.dim(1) != out_ || grad_out.dim(2) != Ho ||
        grad_out.dim(3) != Wo) {
        throw ShapeError(weight.name + ": gradient shape " + grad_out.shape_string() + " mismatch");
    }
    const int K = in_ * k_ * k_;
    const int P = Ho * Wo;
    Tensor dx(input_.shape());
    ConstMapMat wmat(weight.value.data(), out_, K);
    MapMat dw(weight.grad.data(), out_, K);
    const bool pointwise = k_ == 1 && stride_ == 1 && pad_ == 0;
    std::vector<double> cols(pointwise ? 0 : static_cast<std::size_t>(K) * P);
    std::vector<double> dcols(pointwise ? 0 : static_cast<std::size_t>(K) * P);
    for (int n = 0; n < N; ++n) {
        const double* xn = input_.data() + static_cast<std::size_t>(n) * in_ * H * W;
        double* dxn = dx.data() + static_cast<std::size_t>(n) * in_ * H * W;
        ConstMapMat gy(grad_out.data() + static_cast<std::size_t>(n) * out_ * P, out_, P);
        if (has_bias_) {
            for (int o = 0; o < out_; ++o) bias.grad[static_cast<std::size_t>(o)] += gy.row(o).sum();
        }
        if (pointwise) {
            dw.noalias() += gy * ConstMapMat(xn, in_, P).transpose();
            MapMat(dxn, in_, P).noalias() = wmat.transpose() * gy;
        } else {
            im2col(xn, in_, H, W, k_, stride_, pad_, Ho, Wo, cols.data());
            dw.noalias() += gy * ConstMapMat(cols.data(), K, P).transpose();
            MapMat(dcols.data(), K, P).noalias() = wmat.transpose() * gy;
            col2im_add(dcols.data(), in_, H, W, k_, stride_, pad_, Ho, Wo, dxn);
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// BatchNorm2d
// ---------------------------------------------------------------------------
BatchNorm2d::BatchNorm2d(const std::string& name, int channels, double momentum, double eps)
    : gamma(name + ".gamma", {channels}), beta(name + ".beta", {channels}),
      running_mean({channels}, 0.0), running_var({channels}, 1.0),
      name_(name), channels_(channels), momentum_(momentum), eps_(eps) {
    gamma.value.fill(1.0);
}

void BatchNorm2d::collect(std::vector<Parameter*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
}

void BatchNorm2d::collect_buffers(std::vector<NamedBuffer>& out) {
    out.push_back({name_ + ".running_mean", &running_mean});
    out.push_back({name_ + ".running_var", &running_var});
}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
    if (x.rank() != 4 || x.dim(1) != channels_) {
        throw ShapeError(name_ + ": expected " + std::to_string(channels_) + " channels, got " + x.shape_string());
    }
    last_mode_ = mode;
    if (identity) return x;
    const int N = x.dim(0), C = channels_;
    const std::size_t HW = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    const double M = static_cast<double>(N) * HW;
    Tensor y(x.shape());
    xhat_ = Tensor(x.shape());
    inv_std_.assign(static_cast<std::size_t>(C), 0.0);
    for (int c = 0; c < C; ++c) {
        double mean, var;
        if (mode == Mode::train) {
            double s = 0.0;
            for (int n = 0; n < N; ++n) {
                const double* p = x.data() + (static_cast<std::size_t>(n) * C + c) * HW;
                for (std::size_t i = 0; i < HW; ++i) s += p[i];
            }
            mean = s / M;
            double ss = 0.0;
            for (int n = 0; n < N; ++n) {
                const double* p = x.data() + (static_cast<std::size_t>(n) * C + c) * HW;
                for (std::size_t i = 0; i < HW; ++i) ss += (p[i] - mean) * (p[i] - mean);
            }
            var = ss / M;
            const double unbiased = M > 1 ? ss / (M - 1) : var;
            running_mean[static_cast<std::size_t>(c)] =
                (1 - momentum_) * running_mean[static_cast<std::size_t>(c)] + momentum_ * mean;
            running_var[static_cast<std::size_t>(c)] =
                (1 - momentum_) * running_var[static_cast<std::size_t>(c)] + momentum_ * unbiased;
        } else {
            mean = running_mean[static_cast<std::size_t>(c)];
            var = running_var[static_cast<std::size_t>(c)];
        }
        const double inv = 1.0 / std::sqrt(var + eps_);
        inv_std_[static_cast<std::size_t>(c)] = inv;
        const double g = gamma.value[static_cast<std::size_t>(c)], b = beta.value[static_cast<std::size_t>(c)];
        for (int n = 0; n < N; ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) {
                const double xh = (x.data()[off + i] - mean) * inv;
                xhat_.data()[off + i] = xh;
                y.data()[off + i] = g * xh + b;
            }
        }
    }
    return y;
}

Tensor BatchNorm2d::backward(const Tensor& grad_out) {
    if (identity) return grad_out;
    const int N = grad_out.dim(0), C = channels_;
    const std::size_t HW = static_cast<std::size_t>(grad_out.dim(2)) * grad_out.dim(3);
    const double M = static_cast<double>(N) * HW;
    Tensor dx(grad_out.shape());
    for (int c = 0; c < C; ++c) {
        double sum_dy = 0.0, sum_dy_xh = 0.0;
        for (int n = 0; n < N; ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) {
                sum_dy += grad_out.data()[off + i];
                sum_dy_xh += grad_out.data()[off + i] * xhat_.data()[off + i];
            }
        }
        gamma.grad[static_cast<std::size_t>(c)] += sum_dy_xh;
        beta.grad[static_cast<std::size_t>(c)] += sum_dy;
        const double g = gamma.value[static_cast<std::size_t>(c)];
        const double inv = inv_std_[static_cast<std::size_t>(c)];
        for (int n = 0; n < N; ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) {
                const double dy = grad_out.data()[off + i];
                if (last_mode_ == Mode::train) {
                    dx.data()[off + i] = g * inv / M * (M * dy - sum_dy - xhat_.data()[off + i] * sum_dy_xh);
                } else {
                    dx.data()[off + i] = g * inv * dy;
                }
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------
Linear::Linear(const std::string& name, int in_features, int out_features, bool bias)
    : weight(name + ".weight", {out_features, in_features}), in_(in_features), out_(out_features),
      has_bias_(bias) {
    if (in_features <= 0 || out_features <= 0) throw ShapeError("invalid linear layer size for " + name);
    if (bias) this->bias = Parameter(name + ".bias", {out_features});
}

void Linear::collect(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    if (has_bias_) out.push_back(&bias);
}

void Linear::init(std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
    uniform_init(weight.value, bound, rng);
    if (has_bias_) uniform_init(bias.value, bound, rng);
}

Tensor Linear::forward(const Tensor& x) {
    if (x.rank() != 2 || x.dim(1) != in_) {
        throw ShapeError(weight.name + ": expected " + std::to_string(in_) + " features, got " + x.shape_string());
    }
    input_ = x;
    const int N = x.dim(0);
    Tensor y({N, out_});
    MapMat ym(y.data(), N, out_);
    ym.noalias() = ConstMapMat(x.data(), N, in_) * ConstMapMat(weight.value.data(), out_, in_).transpose();
    if (has_bias_) {
        for (int n = 0; n < N; ++n)
            for (int o = 0; o < out_; ++o) ym(n, o) += bias.value[static_cast<std::size_t>(o)];
    }
    return y;
}

Tensor Linear::backward(const Tensor& grad_out) {
    const int N = input_.dim(0);
    if (grad_out.rank() != 2 || grad_out.dim(0) != N || grad_out.dim(1) != out_) {
        throw ShapeError(weight.name + ": gradient shape " + grad_out.shape_string() + " mismatch");
    }
    ConstMapMat gy(grad_out.data(), N, out_);
    MapMat(weight.grad.data(), out_, in_).noalias() += gy.transpose() * ConstMapMat(input_.data(), N, in_);
    if (has_bias_) {
        for (int n = 0; n < N; ++n)
            for (int o = 0; o < out_; ++o) bias.grad[static_cast<std::size_t>(o)] += gy(n, o);
    }
    Tensor dx({N, in_});
    MapMat(dx.data(), N, in_).noalias() = gy * ConstMapMat(weight.value.data(), out_, in_);
    return dx;
}

// ---------------------------------------------------------------------------
// Activations and pooling
// ---------------------------------------------------------------------------
Tensor LeakyReLU::forward(const Tensor& x) {
    input_ = x;
    Tensor y = x;
    for (double& v : y.values()) v = v > 0.0 ? v : slope_ * v;
    return y;
}

Tensor LeakyReLU::backward(const Tensor& grad_out) const {
    Tensor dx = grad_out;
    for (std::size_t i = 0; i < dx.numel(); ++i) {
        if (!(input_[i] > 0.0)) dx[i] *= slope_;
    }
    return dx;
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void add_inplace(Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("add: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
    for (std::size_t i = 0; i < a.numel(); ++i) a[i] += b[i];
}

Tensor global_avg_pool(const Tensor& x) {
    const int N = x.dim(0), C = x.dim(1);
    const std::size_t HW = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    Tensor y({N, C});
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const double* p = x.data() + (static_cast<std::size_t>(n) * C + c) * HW;
            double s = 0.0;
            for (std::size_t i = 0; i < HW; ++i) s += p[i];
            y[static_cast<std::size_t>(n) * C + c] = s / static_cast<double>(HW);
        }
    }
    return y;
}

Tensor global_avg_pool_backward(const Tensor& grad_out, int h, int w) {
    const int N = grad_out.dim(0), C = grad_out.dim(1);
    const std::size_t HW = static_cast<std::size_t>(h) * w;
    Tensor dx({N, C, h, w});
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const double g = grad_out[static_cast<std::size_t>(n) * C + c] / static_cast<double>(HW);
            double* p = dx.data() + (static_cast<std::size_t>(n) * C + c) * HW;
            std::fill(p, p + HW, g);
        }
    }
    return dx;
}

}  // namespace massnet::nn
