#include "hcan/answer_encoder.hpp"

#include "hcan/errors.hpp"

namespace hcan {

namespace {

constexpr std::array<const char*, 3> kLevelNames{"word", "phrase", "sentence"};

Var fuse(const LevelFeatures& level, std::size_t index) {
    const Tensor& q = level.q_hat.value();
    const Tensor& v = level.v_hat.value();
    if (q.rank() != 1 || q.shape() != v.shape()) {
        throw DimensionError(std::string("encode_answer: ") + kLevelNames[index] + " level has q_hat " + q.shape_str() +
                             " and v_hat " + v.shape_str());
    }
    return ad::add(level.q_hat, level.v_hat);
}

Var dense_tanh(Var weight, Var input, Var bias, std::size_t index) {
    if (weight.value().rank() != 2 || weight.value().cols() != input.value().size()) {
        throw DimensionError(std::string("encode_answer: ") + kLevelNames[index] + " layer weight " +
                             weight.value().shape_str() + " does not accept input " + input.value().shape_str());
    }
    return ad::tanh(ad::add_bias(ad::matmul(weight, input), bias));
}

}  // namespace

AnswerDistribution encode_answer(const std::array<LevelFeatures, 3>& levels, const AnswerEncoderParams& params,
                                 const DropoutConfig& dropout) {
    Var h_word = dense_tanh(params.w_word, maybe_dropout(fuse(levels[0], 0), dropout), params.b_word, 0);
    std::array<Var, 2> phrase_in{fuse(levels[1], 1), h_word};
    Var h_phrase = dense_tanh(params.w_phrase, maybe_dropout(ad::concat_rows(phrase_in), dropout), params.b_phrase, 1);
    std::array<Var, 2> sentence_in{fuse(levels[2], 2), h_phrase};
    Var h_sentence =
        dense_tanh(params.w_sentence, maybe_dropout(ad::concat_rows(sentence_in), dropout), params.b_sentence, 2);

    AnswerDistribution out;
    out.logits = ad::matmul(params.w_out, maybe_dropout(h_sentence, dropout));
    if (params.b_out) out.logits = ad::add(out.logits, *params.b_out);
    out.probs = ad::softmax(out.logits);
    return out;
}

std::size_t predict(const Tensor& probs) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[best]) best = i;
    return best;
}

}  // namespace hcan
