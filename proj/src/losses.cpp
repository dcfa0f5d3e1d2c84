#include "massnet/losses.hpp"

#include "massnet/errors.hpp"

#include <algorithm>
#include <cmath>

namespace massnet::loss {

double penalty_factor(double m_i, double m_j) {
    if (!(m_i > 0.0)) throw ArgumentError("penalty factor needs a positive anchor mass, got " + std::to_string(m_i));
    return std::exp(std::abs(m_i - m_j) / m_i);
}

void ContrastiveBatch::validate() const {
    const int n = size();
    if (n < 2) throw ArgumentError("contrastive batch needs at least 2 samples");
    if (static_cast<int>(weights_kg.size()) != n) throw ArgumentError("weights and subject ids differ in length");
    if (dim <= 0 || embeddings.size() != static_cast<std::size_t>(n) * dim) {
        throw ArgumentError("embedding buffer does not match N x E");
    }
    if (!(temperature > 0.0)) throw ArgumentError("temperature must be > 0");
    for (double v : embeddings) {
        if (std::isnan(v)) throw NumericError("NaN in contrastive embeddings");
    }
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int e = 0; e < dim; ++e) s += embeddings[static_cast<std::size_t>(i) * dim + e] * embeddings[static_cast<std::size_t>(i) * dim + e];
        if (std::abs(std::sqrt(s) - 1.0) > kUnitNormTolerance) {
            throw ArgumentError("embedding " + std::to_string(i) + " is not unit-norm (norm " + std::to_string(std::sqrt(s)) + ")");
        }
    }
}

double masscon_loss(const ContrastiveBatch& batch, std::vector<double>* grad) {
    batch.validate();
    const int N = batch.size();
    const int E = batch.dim;
    const auto& m = batch.embeddings;
    auto dot = [&](int i, int j) {
        double s = 0.0;
        for (int e = 0; e < E; ++e) s += m[static_cast<std::size_t>(i) * E + e] * m[static_cast<std::size_t>(j) * E + e];
        return s;
    };
    if (grad) grad->assign(static_cast<std::size_t>(N) * E, 0.0);

    std::vector<double> logits(static_cast<std::size_t>(N));
    std::vector<double> coeff(static_cast<std::size_t>(N));  // delta / tau per pair
    double total = 0.0;
    for (int i = 0; i < N; ++i) {
        int n_pos = 0;
        for (int j = 0; j < N; ++j) {
            if (j != i && batch.subject_ids[static_cast<std::size_t>(j)] == batch.subject_ids[static_cast<std::size_t>(i)]) ++n_pos;
        }
        if (n_pos == 0) continue;

        double max_logit = -INFINITY;
        for (int a = 0; a < N; ++a) {
            if (a == i) continue;
            const double delta = batch.penalty_enabled
                                     ? penalty_factor(batch.weights_kg[static_cast<std::size_t>(i)], batch.weights_kg[static_cast<std::size_t>(a)])
                                     : 1.0;
            coeff[static_cast<std::size_t>(a)] = delta / batch.temperature;
            logits[static_cast<std::size_t>(a)] = coeff[static_cast<std::size_t>(a)] * dot(i, a);
            max_logit = std::max(max_logit, logits[static_cast<std::size_t>(a)]);
        }
        double denom = 0.0;
        for (int a = 0; a < N; ++a) {
            if (a != i) denom += std::exp(logits[static_cast<std::size_t>(a)] - max_logit);
        }
        const double lse = max_logit + std::log(denom);

        double pos_sum = 0.0;
        for (int p = 0; p < N; ++p) {
            if (p != i && batch.subject_ids[static_cast<std::size_t>(p)] == batch.subject_ids[static_cast<std::size_t>(i)]) {
                pos_sum += logits[static_cast<std::size_t>(p)];
            }
        }
        total += lse - pos_sum / n_pos;

        if (grad) {
            // dl_i/dlogit_a = softmax_a - [a in P(i)] / |P(i)|.
            for (int a = 0; a < N; ++a) {
                if (a == i) continue;
                const bool positive = batch.subject_ids[static_cast<std::size_t>(a)] == batch.subject_ids[static_cast<std::size_t>(i)];
                const double w = std::exp(logits[static_cast<std::size_t>(a)] - lse) - (positive ? 1.0 / n_pos : 0.0);
                const double c = w * coeff[static_cast<std::size_t>(a)];
                for (int e = 0; e < E; ++e) {
                    (*grad)[static_cast<std::size_t>(i) * E + e] += c * m[static_cast<std::size_t>(a) * E + e];
                    (*grad)[static_cast<std::size_t>(a) * E + e] += c * m[static_cast<std::size_t>(i) * E + e];
                }
            }
        }
    }
    if (!std::isfinite(total)) throw NumericError("contrastive loss is not finite");
    return total;
}

double mae_loss(std::span<const double> pred, std::span<const double> target, std::vector<double>* grad) {
    if (pred.size() != target.size()) throw ArgumentError("MAE: prediction and target lengths differ");
    if (pred.empty()) throw ArgumentError("MAE: empty input");
    const double n = static_cast<double>(pred.size());
    double s = 0.0;
    if (grad) grad->assign(pred.size(), 0.0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        s += std::abs(d);
        if (grad) (*grad)[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / n;
    }
    return s / n;
}

LossBreakdown overall_loss(double l_mae, double l_con, double lambda) {
    if (!(lambda >= 0.0)) throw ArgumentError("lambda must be >= 0");
    return {l_mae, l_con, l_mae + lambda * l_con, lambda};
}

}  // namespace massnet::loss
