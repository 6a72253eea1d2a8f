#include "hcan/question_hierarchy.hpp"

#include <array>

#include "hcan/errors.hpp"

namespace hcan {

QuestionTokens QuestionTokens::make(std::vector<std::size_t> ids, std::size_t max_length) {
    if (ids.empty()) throw ParameterError("question must contain at least one token");
    if (ids.size() > max_length) {
        throw DimensionError("question of " + std::to_string(ids.size()) + " tokens exceeds maximum length " +
                             std::to_string(max_length));
    }
    QuestionTokens q;
    q.length = ids.size();
    q.ids = std::move(ids);
    q.ids.resize(max_length, kPadId);
    q.mask.assign(max_length, false);
    for (std::size_t t = 0; t < q.length; ++t) q.mask[t] = true;
    return q;
}

Var maybe_dropout(Var x, const DropoutConfig& dropout) {
    if (!dropout.training || dropout.p == 0.0) return x;
    if (dropout.rng == nullptr) throw ParameterError("training-mode dropout needs a random stream");
    return ad::dropout(x, dropout.p, *dropout.rng);
}

Var embed_words(const QuestionTokens& tokens, const WordEmbeddingParams& params) {
    return ad::gather_columns(params.table, tokens.ids, tokens.mask);
}

namespace {

Var convolve(Var word, Var weight, Var bias, std::size_t window, const Mask& mask) {
    std::vector<Var> shifted;
    for (std::size_t s = 0; s < window; ++s) shifted.push_back(ad::shift_columns(word, s));
    Var stacked = window == 1 ? word : ad::concat_rows(shifted);
    const std::size_t d = word.value().rows();
    if (weight.value().rank() != 2 || weight.value().rows() != d || weight.value().cols() != window * d) {
        throw DimensionError("phrase_convolve: window " + std::to_string(window) + " filter has shape " +
                             weight.value().shape_str() + ", expected [" + std::to_string(d) + " x " +
                             std::to_string(window * d) + "]");
    }
    return ad::mask_columns(ad::tanh(ad::add_bias(ad::matmul(weight, stacked), bias)), mask);
}

}  // namespace

PhraseGrams phrase_convolve(Var word, const PhraseConvParams& params, const Mask& mask) {
    return {convolve(word, params.w1, params.b1, 1, mask), convolve(word, params.w2, params.b2, 2, mask),
            convolve(word, params.w3, params.b3, 3, mask)};
}

Var phrase_pool(const PhraseGrams& grams, const Mask& mask) {
    return ad::mask_columns(ad::elementwise_max3(grams.unigram, grams.bigram, grams.trigram), mask);
}

Var word_layer(Var word, const WordLayerParams& params, const Mask& mask) {
    return ad::mask_columns(ad::tanh(ad::add_bias(ad::matmul(params.w, word), params.b)), mask);
}

Var lstm_encode(Var phrase, const LstmParams& params, const Mask& mask) {
    const Tensor& X = phrase.value();
    if (X.rank() != 2) throw DimensionError("lstm_encode: expected d x T input, got " + X.shape_str());
    const std::size_t d = X.rows(), T = X.cols();
    if (mask.size() != T) throw DimensionError("lstm_encode: mask length does not match sequence");
    const Shape gates{4 * d, d};
    if (params.w_input.shape() != gates || params.w_hidden.shape() != gates || params.bias.shape() != Shape{4 * d}) {
        throw DimensionError("lstm_encode: gate parameters must be [4d x d] with d = " + std::to_string(d));
    }
    Graph& g = *phrase.graph;
    Var h = g.constant(Tensor({d}));
    Var c = h;
    std::vector<Var> outputs;
    outputs.reserve(T);
    Var zero_column = h;
    for (std::size_t t = 0; t < T; ++t) {
        if (!mask[t]) {
            outputs.push_back(zero_column);
            continue;
        }
        Var x = ad::column(phrase, t);
        Var z = ad::add_bias(ad::add(ad::matmul(params.w_input, x), ad::matmul(params.w_hidden, h)), params.bias);
        Var in = ad::sigmoid(ad::slice_rows(z, 0, d));
        Var forget = ad::sigmoid(ad::slice_rows(z, d, d));
        Var cell = ad::tanh(ad::slice_rows(z, 2 * d, d));
        Var out = ad::sigmoid(ad::slice_rows(z, 3 * d, d));
        c = ad::add(ad::mul(forget, c), ad::mul(in, cell));
        h = ad::mul(out, ad::tanh(c));
        outputs.push_back(h);
    }
    return ad::stack_columns(outputs);
}

HierarchicalQuestionFeatures build_hierarchy(const QuestionTokens& tokens, const HierarchyParams& params,
                                             const DropoutConfig& dropout) {
    HierarchicalQuestionFeatures out;
    out.mask = tokens.mask;
    out.word = embed_words(tokens, params.embedding);
    Var word_in = maybe_dropout(out.word, dropout);
    if (params.use_conv) {
        out.phrase = phrase_pool(phrase_convolve(word_in, params.conv, tokens.mask), tokens.mask);
    } else {
        out.phrase = word_layer(word_in, params.word_layer, tokens.mask);
    }
    out.sentence = lstm_encode(maybe_dropout(out.phrase, dropout), params.lstm, tokens.mask);
    return out;
}

}  // namespace hcan
