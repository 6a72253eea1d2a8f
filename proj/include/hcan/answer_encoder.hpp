#pragma once

#include <array>
#include <cstddef>
#include <optional>

#include "hcan/autodiff.hpp"
#include "hcan/question_hierarchy.hpp"

namespace hcan {

struct AnswerEncoderParams {
    Var w_word;      // h x d
    Var b_word;      // h
    Var w_phrase;    // h x (d + h)
    Var b_phrase;    // h
    Var w_sentence;  // h_s x (d + h)
    Var b_sentence;  // h_s
    Var w_out;       // A x h_s
    std::optional<Var> b_out;
};

struct LevelFeatures {
    Var q_hat;
    Var v_hat;
};

struct AnswerDistribution {
    Var logits;
    Var probs;
};

// Word -> phrase -> sentence recursive fusion of co-attended features.
// levels are ordered (word, phrase, sentence).
AnswerDistribution encode_answer(const std::array<LevelFeatures, 3>& levels, const AnswerEncoderParams& params,
                                 const DropoutConfig& dropout);

// Argmax with ties broken to the lowest index.
std::size_t predict(const Tensor& probs);

}  // namespace hcan
