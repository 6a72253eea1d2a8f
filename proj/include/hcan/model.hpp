#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hcan/answer_encoder.hpp"
#include "hcan/co_attention.hpp"
#include "hcan/params.hpp"
#include "hcan/question_hierarchy.hpp"
#include "json.hpp"

namespace hcan {

enum class Mechanism { parallel, alternating, maxout };

enum class Ablation {
    none,
    image_atten_only,
    question_atten_only,
    no_conv,
    no_word_atten,
    no_phrase_atten,
    no_question_atten,
};

inline constexpr std::array<Mechanism, 3> kMechanisms{Mechanism::parallel, Mechanism::alternating, Mechanism::maxout};
inline constexpr std::array<Ablation, 7> kAblations{
    Ablation::none,          Ablation::image_atten_only, Ablation::question_atten_only, Ablation::no_conv,
    Ablation::no_word_atten, Ablation::no_phrase_atten,  Ablation::no_question_atten,
};
inline constexpr std::array<const char*, 3> kLevelKeys{"word", "phrase", "sentence"};

std::string to_string(Mechanism m);
std::string to_string(Ablation a);
Mechanism parse_mechanism(std::string_view name);
Ablation parse_ablation(std::string_view name);

struct ModelConfig {
    std::size_t vocab_size = 2;
    std::size_t d = 64;
    std::size_t k = 48;
    std::size_t h_s = 64;
    std::size_t max_length = 1;  // T_max
    std::size_t locations = 1;   // N
    std::size_t answers = 2;     // A
    Mechanism mechanism = Mechanism::parallel;
    std::size_t rounds = 1;
    double dropout = 0.5;
    Ablation ablation = Ablation::none;
    bool share_alternating_params = false;
    bool attention_bias = true;
    bool output_bias = true;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& config);
// Missing keys keep their defaults; unknown enum names raise ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Canonical (name, shape) list of every learnable tensor for a configuration.
std::vector<std::pair<std::string, Shape>> param_shapes(const ModelConfig& config);

// Xavier-uniform weights, zero biases, LSTM forget-gate bias 1.
ParamStore init_params(const ModelConfig& config, std::uint64_t seed);
ParamStore zero_params(const ModelConfig& config);
// Throws DimensionError naming the first tensor whose shape differs, FormatError
// for missing or unknown names.
void check_params(const ModelConfig& config, const ParamStore& params);

enum class Mode { train, eval };

struct ForwardOutput {
    HierarchicalQuestionFeatures question;
    std::array<CoAttentionResult, 3> levels;  // word, phrase, sentence
    AnswerDistribution answer;
};

ForwardOutput forward(Graph& graph, const ParamVars& params, const ModelConfig& config, const QuestionTokens& tokens,
                      const FeatureGrid& grid, Mode mode, Rng* rng = nullptr);

// Per-level attention overrides implied by an ablation.
std::array<AttentionOverride, 3> ablation_overrides(Ablation ablation);

}  // namespace hcan
