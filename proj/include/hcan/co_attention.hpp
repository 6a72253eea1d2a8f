#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <utility>

#include "hcan/autodiff.hpp"

namespace hcan {

/// Image feature map: one d-dimensional feature per spatial location (d x N).
struct FeatureGrid {
    Tensor features;

    FeatureGrid() = default;
    explicit FeatureGrid(Tensor v);

    std::size_t dim() const { return features.rows(); }
    std::size_t locations() const { return features.cols(); }
};

struct ParallelCoAttentionParams {
    Var w_affinity;  // W_b, d x d
    Var w_image;     // W_v, k x d
    Var w_question;  // W_q, k x d
    Var h_image;     // w_hv, k
    Var h_question;  // w_hq, k
    std::optional<Var> b_image;
    std::optional<Var> b_question;
};

struct AttendParams {
    Var w_x;  // k x d
    Var w_g;  // k x d
    Var h_x;  // k
    std::optional<Var> bias;
};

// One parameter set per alternating step; pass the same set three times to share.
struct AlternatingCoAttentionParams {
    std::array<AttendParams, 3> steps;
};

struct CoAttentionResult {
    Var a_v;     // N
    Var a_q;     // T_max, zero on padding
    Var v_hat;   // d
    Var q_hat;   // d
    std::optional<Var> affinity;  // T_max x N
    std::optional<Var> summary;   // first-step question summary (alternating)
};

// Replaces a learned map with the uniform distribution over its unmasked positions.
struct AttentionOverride {
    bool uniform_image = false;
    bool uniform_question = false;
};

Var uniform_weights(Graph& graph, const Mask& mask);
// sum_i a_i * x_i over the columns of X.
Var weighted_sum(Var x, Var weights);

// C = tanh(Q^T W_b V). Rows at padded positions are computed here and masked by callers.
Var affinity(Var question, Var image, Var w_affinity, const Mask& mask);

CoAttentionResult parallel_co_attend(Var question, Var image, const ParallelCoAttentionParams& params,
                                     const Mask& mask, AttentionOverride override_maps = {});

// Scores each location (word) by its best affinity with any unmasked word
// (location), then softmax-normalizes.
CoAttentionResult maxout_co_attend(Var question, Var image, Var w_affinity, const Mask& mask,
                                   AttentionOverride override_maps = {});

struct Attended {
    Var weights;
    Var vector;
};

// x_hat = A(X; g). A missing guidance acts as the zero vector.
Attended attend_op(Var x, std::optional<Var> guidance, const AttendParams& params, const Mask& mask);

CoAttentionResult alternating_co_attend(Var question, Var image, const AlternatingCoAttentionParams& params,
                                        const Mask& mask, std::size_t rounds = 1,
                                        AttentionOverride override_maps = {});

// Both maps uniform: image mean and masked question mean.
CoAttentionResult uniform_co_attend(Var question, Var image, const Mask& mask);

}  // namespace hcan
