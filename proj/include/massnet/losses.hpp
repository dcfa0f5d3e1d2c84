#pragma once

#include <span>
#include <string>
#include <vector>

namespace massnet::loss {

// exp(|m_i - m_j| / m_i). Asymmetric: the anchor's mass is the denominator.
double penalty_factor(double m_i, double m_j);

inline constexpr double kUnitNormTolerance = 1e-6;

// Embeddings are row-major N x E, unit rows; subject ids define positives.
struct ContrastiveBatch {
    std::span<const double> embeddings;
    int dim = 0;
    std::vector<std::string> subject_ids;
    std::vector<double> weights_kg;
    double temperature = 0.1;
    bool penalty_enabled = true;

    int size() const { return static_cast<int>(subject_ids.size()); }
    void validate() const;
};

// Weight-penalized supervised contrastive loss, summed over anchors. Anchors
// without positives contribute zero. With penalty_enabled = false this is the
// plain supervised contrastive loss. If grad is non-null it receives dL/dm
// (N x E, overwritten).
double masscon_loss(const ContrastiveBatch& batch, std::vector<double>* grad = nullptr);

// Mean absolute error. If grad is non-null it receives d/dpred (sign / N).
double mae_loss(std::span<const double> pred, std::span<const double> target, std::vector<double>* grad = nullptr);

struct LossBreakdown {
    double l_mae = 0.0;
    double l_con = 0.0;
    double l_all = 0.0;
    double lambda = 0.0;
};

LossBreakdown overall_loss(double l_mae, double l_con, double lambda);

}  // namespace massnet::loss
