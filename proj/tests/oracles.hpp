#pragma once

// Reference implementations used by the tests and the acceptance binary.
// Each one is written straight from the defining formula, without sharing
// code with the library.

#include "massnet/data_model.hpp"
#include "massnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace oracle {

// Corner-aligned bilinear value of output cell (i, j) for an upsample by factor.
inline double bilinear_cell(const massnet::PressureFrame& f, int factor, int i, int j) {
    const int R = f.rows(), C = f.cols();
    const double y = R == 1 ? 0.0 : i * double(R - 1) / double(R * factor - 1);
    const double x = C == 1 ? 0.0 : j * double(C - 1) / double(C * factor - 1);
    double acc = 0.0;
    // Sum of tent weights over all source cells.
    for (int r = 0; r < R; ++r) {
        const double wy = std::max(0.0, 1.0 - std::abs(y - r));
        if (wy == 0.0) continue;
        for (int c = 0; c < C; ++c) {
            const double wx = std::max(0.0, 1.0 - std::abs(x - c));
            acc += wy * wx * f.at(r, c);
        }
    }
    return acc;
}

// Direct 2-D convolution, N x Cin x H x W with weight Cout x Cin x k x k.
inline massnet::nn::Tensor conv2d(const massnet::nn::Tensor& x, const massnet::nn::Tensor& w, const double* bias,
                                  int stride, int pad) {
    const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Cout = w.dim(0), k = w.dim(2);
    const int Ho = (H + 2 * pad - k) / stride + 1, Wo = (W + 2 * pad - k) / stride + 1;
    massnet::nn::Tensor y({N, Cout, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < Cout; ++o)
            for (int a = 0; a < Ho; ++a)
                for (int b = 0; b < Wo; ++b) {
                    double s = bias ? bias[o] : 0.0;
                    for (int c = 0; c < Cin; ++c)
                        for (int p = 0; p < k; ++p)
                            for (int q = 0; q < k; ++q) {
                                const int r = a * stride - pad + p, cc = b * stride - pad + q;
                                if (r < 0 || r >= H || cc < 0 || cc >= W) continue;
                                s += w.at(o, c, p, q) * x.at(n, c, r, cc);
                            }
                    y.at(n, o, a, b) = s;
                }
    return y;
}

// y = x W^T + b for x N x in, W out x in.
inline std::vector<double> dense(const std::vector<double>& x, int n, const massnet::nn::Tensor& w,
                                 const massnet::nn::Tensor& b) {
    const int out = w.dim(0), in = w.dim(1);
    std::vector<double> y(static_cast<std::size_t>(n) * out);
    for (int r = 0; r < n; ++r)
        for (int o = 0; o < out; ++o) {
            double s = b.empty() ? 0.0 : b[o];
            for (int i = 0; i < in; ++i) s += x[static_cast<std::size_t>(r) * in + i] * w[static_cast<std::size_t>(o) * in + i];
            y[static_cast<std::size_t>(r) * out + o] = s;
        }
    return y;
}

inline double leaky(double v, double slope) { return v > 0.0 ? v : slope * v; }

// The weight-penalized contrastive loss as a plain double loop over anchors,
// positives and the full denominator. No log-sum-exp shift.
inline double masscon_direct(const std::vector<std::vector<double>>& m, const std::vector<std::string>& ids,
                             const std::vector<double>& w, double tau, bool penalty) {
    const std::size_t N = m.size();
    auto dot = [&](std::size_t i, std::size_t j) {
        double s = 0.0;
        for (std::size_t e = 0; e < m[i].size(); ++e) s += m[i][e] * m[j][e];
        return s;
    };
    auto delta = [&](std::size_t i, std::size_t j) { return penalty ? std::exp(std::abs(w[i] - w[j]) / w[i]) : 1.0; };
    double L = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        std::vector<std::size_t> P;
        for (std::size_t p = 0; p < N; ++p)
            if (p != i && ids[p] == ids[i]) P.push_back(p);
        if (P.empty()) continue;
        double denom = 0.0;
        for (std::size_t a = 0; a < N; ++a)
            if (a != i) denom += std::exp(delta(i, a) * dot(i, a) / tau);
        double inner = 0.0;
        for (std::size_t p : P) inner += std::log(std::exp(delta(i, p) * dot(i, p) / tau) / denom);
        L += -inner / double(P.size());
    }
    return L;
}

// Plain supervised contrastive loss built from a similarity matrix and
// positive / anchor masks, the textbook way: per anchor, mean log-probability
// of the positives under a softmax over all other samples.
inline double supcon(const std::vector<std::vector<double>>& m, const std::vector<std::string>& ids, double tau) {
    const std::size_t N = m.size();
    std::vector<std::vector<double>> S(N, std::vector<double>(N));
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) {
            double s = 0.0;
            for (std::size_t e = 0; e < m[i].size(); ++e) s += m[i][e] * m[j][e];
            S[i][j] = s / tau;
        }
    double total = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        double row_max = -INFINITY;
        for (std::size_t j = 0; j < N; ++j)
            if (j != i) row_max = std::max(row_max, S[i][j]);
        double z = 0.0;
        for (std::size_t j = 0; j < N; ++j)
            if (j != i) z += std::exp(S[i][j] - row_max);
        const double log_z = row_max + std::log(z);
        double sum_logp = 0.0;
        int count = 0;
        for (std::size_t j = 0; j < N; ++j) {
            if (j == i || ids[j] != ids[i]) continue;
            sum_logp += S[i][j] - log_z;
            ++count;
        }
        if (count > 0) total -= sum_logp / count;
    }
    return total;
}

// Random unit vector.
inline std::vector<double> unit_vector(int dim, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> v(static_cast<std::size_t>(dim));
    double s = 0.0;
    for (double& x : v) {
        x = g(rng);
        s += x * x;
    }
    s = std::sqrt(s);
    for (double& x : v) x /= s;
    return v;
}

inline double norm(const std::vector<double>& a) {
    double s = 0.0;
    for (double x : a) s += x * x;
    return std::sqrt(s);
}

// Relative error between two gradient vectors: ||a - b|| / (||a|| + ||b||),
// zero when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::sqrt(na) + std::sqrt(nb);
    return denom == 0.0 ? 0.0 : std::sqrt(d) / denom;
}

}  // namespace oracle
