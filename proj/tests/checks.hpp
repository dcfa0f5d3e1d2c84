#pragma once

// Property checks shared by the unit tests and the acceptance binary.

#include "massnet/network.hpp"

#include <cstdint>
#include <string>

namespace checks {

struct LossOracleResult {
    double max_rel_masscon = 0.0;  // vs the direct double loop
    double max_abs_supcon = 0.0;   // penalty off vs the SupCon oracle
    int batches = 0;
};

// Random batches with N <= 8, E <= 4, tau in [0.05, 1], weights in [40, 105].
LossOracleResult loss_oracle(int batches, std::uint64_t seed);

// Central differences of masscon_loss w.r.t. the embeddings on an N = 4 batch.
double masscon_gradient_error(std::uint64_t seed);

// The tiny network used by the gradient check: D = 8, E = 4, 8x8 input, one
// sensing layer.
massnet::nn::ModelConfig tiny_config();

struct ModelGradResult {
    double max_rel = 0.0;
    std::string worst;  // parameter with the largest error
    int parameters = 0;
    int zero_tensors = 0;  // analytic below kZeroGradient, numeric at round-off; not ratioed
};

inline constexpr double kZeroGradient = 1e-9;

// Central differences of sum(c * pred) + sum(g * emb) w.r.t. every parameter
// of the tiny model, train-mode normalization over a batch of 3.
ModelGradResult model_gradient_error(std::uint64_t seed);

struct AugmentResult {
    bool flip_exact = true;
    bool shift_exact = true;
    double rotate_max_px = 0.0;
    bool weights_invariant = true;
    int trials = 0;
};

// Argmax cell of a random peaked frame vs a joint placed on it, across random
// ops.
AugmentResult augmentation_equivariance(int trials, std::uint64_t seed);

struct SegmentationResult {
    double iou = 0.0;
    double aggregation_error = 0.0;  // vs a direct duration-weighted mean
    double static_spread = 0.0;
    double active_spread = 0.0;
};

// Synthetic session with 14 planted movements, default thresholds.
SegmentationResult segmentation_session(std::uint64_t seed);

}  // namespace checks
