#include "hcan/co_attention.hpp"

#include <algorithm>

#include "hcan/errors.hpp"

namespace hcan {

FeatureGrid::FeatureGrid(Tensor v) : features(std::move(v)) {
    if (features.rank() != 2) throw DimensionError("feature grid must be d x N, got " + features.shape_str());
    if (!features.all_finite()) throw NumericError("feature grid holds non-finite values");
}

namespace {

void check_inputs(Var question, Var image, const Mask& mask, const char* op) {
    const Tensor& Q = question.value();
    const Tensor& V = image.value();
    if (Q.rank() != 2 || V.rank() != 2 || Q.rows() != V.rows()) {
        throw DimensionError(std::string(op) + ": question " + Q.shape_str() + " and image " + V.shape_str() +
                             " must share the feature dimension");
    }
    if (mask.size() != Q.cols()) throw DimensionError(std::string(op) + ": mask length does not match question");
    if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; })) {
        throw ParameterError(std::string(op) + ": question is fully masked");
    }
}

Var with_bias(Var x, const std::optional<Var>& bias) { return bias ? ad::add_bias(x, *bias) : x; }

// w^T H as a vector over the columns of H.
Var column_scores(Var hidden, Var w) { return ad::matmul(ad::transpose(hidden), w); }

}  // namespace

Var uniform_weights(Graph& graph, const Mask& mask) {
    const auto count = static_cast<double>(std::count(mask.begin(), mask.end(), true));
    if (count == 0) throw ParameterError("uniform_weights: every position is masked");
    Tensor w({mask.size()});
    for (std::size_t i = 0; i < mask.size(); ++i) w[i] = mask[i] ? 1.0 / count : 0.0;
    return graph.constant(std::move(w));
}

Var weighted_sum(Var x, Var weights) { return ad::matmul(x, weights); }

Var affinity(Var question, Var image, Var w_affinity, const Mask& mask) {
    check_inputs(question, image, mask, "affinity");
    return ad::tanh(ad::matmul(ad::transpose(question), ad::matmul(w_affinity, image)));
}

CoAttentionResult parallel_co_attend(Var question, Var image, const ParallelCoAttentionParams& params,
                                     const Mask& mask, AttentionOverride override_maps) {
    check_inputs(question, image, mask, "parallel_co_attend");
    Graph& g = *question.graph;
    const Mask all_locations(image.value().cols(), true);

    CoAttentionResult r;
    Var c = affinity(question, image, params.w_affinity, mask);
    r.affinity = c;
    Var wq_q = ad::matmul(params.w_question, question);  // k x T
    Var wv_v = ad::matmul(params.w_image, image);        // k x N

    if (override_maps.uniform_image) {
        r.a_v = uniform_weights(g, all_locations);
    } else {
        Var h_v = ad::tanh(with_bias(ad::add(wv_v, ad::matmul(wq_q, c)), params.b_image));
        r.a_v = ad::softmax(column_scores(h_v, params.h_image));
    }
    if (override_maps.uniform_question) {
        r.a_q = uniform_weights(g, mask);
    } else {
        Var h_q = ad::tanh(with_bias(ad::add(wq_q, ad::matmul(wv_v, ad::transpose(c))), params.b_question));
        r.a_q = ad::softmax_masked(column_scores(h_q, params.h_question), mask);
    }
    r.v_hat = weighted_sum(image, r.a_v);
    r.q_hat = weighted_sum(question, r.a_q);
    return r;
}

CoAttentionResult maxout_co_attend(Var question, Var image, Var w_affinity, const Mask& mask,
                                   AttentionOverride override_maps) {
    check_inputs(question, image, mask, "maxout_co_attend");
    Graph& g = *question.graph;
    CoAttentionResult r;
    Var c = affinity(question, image, w_affinity, mask);
    r.affinity = c;
    r.a_v = override_maps.uniform_image ? uniform_weights(g, Mask(image.value().cols(), true))
                                        : ad::softmax(ad::reduce_max(c, 0, mask));
    r.a_q = override_maps.uniform_question ? uniform_weights(g, mask)
                                           : ad::softmax_masked(ad::reduce_max(c, 1), mask);
    r.v_hat = weighted_sum(image, r.a_v);
    r.q_hat = weighted_sum(question, r.a_q);
    return r;
}

Attended attend_op(Var x, std::optional<Var> guidance, const AttendParams& params, const Mask& mask) {
    const Tensor& X = x.value();
    if (X.rank() != 2 || mask.size() != X.cols()) {
        throw DimensionError("attend_op: mask length " + std::to_string(mask.size()) + " does not fit " + X.shape_str());
    }
    Graph& g = *x.graph;
    Var guide = guidance ? *guidance : g.constant(Tensor({X.rows()}));
    Var shift = ad::matmul(params.w_g, guide);
    if (params.bias) shift = ad::add(shift, *params.bias);
    Var hidden = ad::tanh(ad::add_bias(ad::matmul(params.w_x, x), shift));
    Attended out;
    out.weights = ad::softmax_masked(column_scores(hidden, params.h_x), mask);
    out.vector = weighted_sum(x, out.weights);
    return out;
}

CoAttentionResult alternating_co_attend(Var question, Var image, const AlternatingCoAttentionParams& params,
                                        const Mask& mask, std::size_t rounds, AttentionOverride override_maps) {
    check_inputs(question, image, mask, "alternating_co_attend");
    if (rounds == 0) throw ParameterError("alternating_co_attend: rounds must be at least 1");
    Graph& g = *question.graph;
    const Mask all_locations(image.value().cols(), true);

    auto attend_question = [&](std::optional<Var> guide, const AttendParams& p) {
        if (override_maps.uniform_question) {
            Var w = uniform_weights(g, mask);
            return Attended{w, weighted_sum(question, w)};
        }
        return attend_op(question, guide, p, mask);
    };
    auto attend_image = [&](Var guide) {
        if (override_maps.uniform_image) {
            Var w = uniform_weights(g, all_locations);
            return Attended{w, weighted_sum(image, w)};
        }
        return attend_op(image, guide, params.steps[1], all_locations);
    };

    CoAttentionResult r;
    Attended summary = attend_question(std::nullopt, params.steps[0]);
    r.summary = summary.vector;
    Var guide = summary.vector;
    for (std::size_t round = 0; round < rounds; ++round) {
        Attended img = attend_image(guide);
        Attended q = attend_question(img.vector, params.steps[2]);
        r.a_v = img.weights;
        r.v_hat = img.vector;
        r.a_q = q.weights;
        r.q_hat = q.vector;
        guide = q.vector;
    }
    return r;
}

CoAttentionResult uniform_co_attend(Var question, Var image, const Mask& mask) {
    check_inputs(question, image, mask, "uniform_co_attend");
    Graph& g = *question.graph;
    CoAttentionResult r;
    r.a_v = uniform_weights(g, Mask(image.value().cols(), true));
    r.a_q = uniform_weights(g, mask);
    r.v_hat = weighted_sum(image, r.a_v);
    r.q_hat = weighted_sum(question, r.a_q);
    return r;
}

}  // namespace hcan
