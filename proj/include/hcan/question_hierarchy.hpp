#pragma once

#include <cstddef>
#include <vector>

#include "hcan/autodiff.hpp"

namespace hcan {

/// Token ids padded to a fixed length with the reserved pad id 0.
struct QuestionTokens {
    std::vector<std::size_t> ids;  // length T_max
    std::size_t length = 0;        // true length T >= 1
    Mask mask;                     // true exactly for positions < length

    static QuestionTokens make(std::vector<std::size_t> ids, std::size_t max_length);
    std::size_t max_length() const { return ids.size(); }
};

inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kUnkId = 1;

struct WordEmbeddingParams {
    Var table;  // vocab x d
};

struct PhraseConvParams {
    Var w1, w2, w3;  // d x d, d x 2d, d x 3d
    Var b1, b2, b3;
};

// Gate rows are ordered (input, forget, cell, output).
struct LstmParams {
    Var w_input;   // 4d x d
    Var w_hidden;  // 4d x d
    Var bias;      // 4d
};

// Position-wise replacement for the phrase stage used when convolution is ablated.
struct WordLayerParams {
    Var w;  // d x d
    Var b;
};

struct HierarchicalQuestionFeatures {
    Var word;      // Q^w, d x T_max
    Var phrase;    // Q^p
    Var sentence;  // Q^s
    Mask mask;
};

struct DropoutConfig {
    bool training = false;
    double p = 0.0;
    Rng* rng = nullptr;
};

// Applies dropout when training, otherwise returns x.
Var maybe_dropout(Var x, const DropoutConfig& dropout);

Var embed_words(const QuestionTokens& tokens, const WordEmbeddingParams& params);

struct PhraseGrams {
    Var unigram, bigram, trigram;
};

// n-gram convolutions with windows reading forward from each position; columns
// past the sequence end are zero.
PhraseGrams phrase_convolve(Var word, const PhraseConvParams& params, const Mask& mask);
Var phrase_pool(const PhraseGrams& grams, const Mask& mask);
Var word_layer(Var word, const WordLayerParams& params, const Mask& mask);

// Single-layer LSTM, h0 = c0 = 0. Padded steps carry the state and emit zero columns.
Var lstm_encode(Var phrase, const LstmParams& params, const Mask& mask);

struct HierarchyParams {
    WordEmbeddingParams embedding;
    PhraseConvParams conv;
    LstmParams lstm;
    bool use_conv = true;  // false: word_layer replaces convolution + pooling
    WordLayerParams word_layer;
};

HierarchicalQuestionFeatures build_hierarchy(const QuestionTokens& tokens, const HierarchyParams& params,
                                             const DropoutConfig& dropout);

}  // namespace hcan
