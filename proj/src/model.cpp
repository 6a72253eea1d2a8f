#include "hcan/model.hpp"

#include <cmath>
#include <random>

#include "hcan/errors.hpp"

namespace hcan {

std::string to_string(Mechanism m) {
    switch (m) {
        case Mechanism::parallel: return "parallel";
        case Mechanism::alternating: return "alternating";
        case Mechanism::maxout: return "maxout";
    }
    return "?";
}

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::none: return "none";
        case Ablation::image_atten_only: return "image_atten_only";
        case Ablation::question_atten_only: return "question_atten_only";
        case Ablation::no_conv: return "no_conv";
        case Ablation::no_word_atten: return "no_word_atten";
        case Ablation::no_phrase_atten: return "no_phrase_atten";
        case Ablation::no_question_atten: return "no_question_atten";
    }
    return "?";
}

Mechanism parse_mechanism(std::string_view name) {
    for (auto m : kMechanisms)
        if (to_string(m) == name) return m;
    throw ConfigError("unknown mechanism '" + std::string(name) + "' (expected parallel, alternating or maxout)");
}

Ablation parse_ablation(std::string_view name) {
    for (auto a : kAblations)
        if (to_string(a) == name) return a;
    throw ConfigError("unknown ablation variant '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
    auto positive = [](std::size_t v, const char* what) {
        if (v == 0) throw ConfigError(std::string("model config: ") + what + " must be at least 1");
    };
    positive(d, "d");
    positive(k, "k");
    positive(h_s, "h_s");
    positive(max_length, "max_length");
    positive(locations, "locations");
    positive(rounds, "rounds");
    if (vocab_size < 2) throw ConfigError("model config: vocab_size must cover the reserved pad and unk ids");
    if (answers < 2) throw ConfigError("model config: answers must be at least 2");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model config: dropout must lie in [0, 1)");
}

nlohmann::json to_json(const ModelConfig& c) {
    return {
        {"vocab_size", c.vocab_size},
        {"d", c.d},
        {"k", c.k},
        {"h_s", c.h_s},
        {"max_length", c.max_length},
        {"locations", c.locations},
        {"answers", c.answers},
        {"mechanism", to_string(c.mechanism)},
        {"rounds", c.rounds},
        {"dropout", c.dropout},
        {"ablation", to_string(c.ablation)},
        {"share_alternating_params", c.share_alternating_params},
        {"attention_bias", c.attention_bias},
        {"output_bias", c.output_bias},
        {"seed", c.seed},
    };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("model config must be a JSON object");
    ModelConfig c;
    try {
        c.vocab_size = j.value("vocab_size", c.vocab_size);
        c.d = j.value("d", c.d);
        c.k = j.value("k", c.k);
        c.h_s = j.value("h_s", c.h_s);
        c.max_length = j.value("max_length", c.max_length);
        c.locations = j.value("locations", c.locations);
        c.answers = j.value("answers", c.answers);
        c.mechanism = parse_mechanism(j.value("mechanism", to_string(c.mechanism)));
        c.rounds = j.value("rounds", c.rounds);
        c.dropout = j.value("dropout", c.dropout);
        c.ablation = parse_ablation(j.value("ablation", to_string(c.ablation)));
        c.share_alternating_params = j.value("share_alternating_params", c.share_alternating_params);
        c.attention_bias = j.value("attention_bias", c.attention_bias);
        c.output_bias = j.value("output_bias", c.output_bias);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    return c;
}

namespace {

std::string level_prefix(std::size_t level) { return std::string("coatt.") + kLevelKeys[level] + "."; }

std::vector<std::string> alternating_step_prefixes(const ModelConfig& c, std::size_t level) {
    const std::string base = level_prefix(level);
    if (c.share_alternating_params) return {base + "shared.", base + "shared.", base + "shared."};
    return {base + "step1.", base + "step2.", base + "step3."};
}

bool is_bias(const std::string& name) {
    const auto dot = name.rfind('.');
    const std::string leaf = name.substr(dot + 1);
    return leaf.rfind("b", 0) == 0 || leaf == "bias";
}

}  // namespace

std::vector<std::pair<std::string, Shape>> param_shapes(const ModelConfig& c) {
    c.validate();
    const std::size_t d = c.d, k = c.k;
    std::vector<std::pair<std::string, Shape>> out;
    out.emplace_back("embed.table", Shape{c.vocab_size, d});
    if (c.ablation == Ablation::no_conv) {
        out.emplace_back("wordlayer.w", Shape{d, d});
        out.emplace_back("wordlayer.b", Shape{d});
    } else {
        for (std::size_t s = 1; s <= 3; ++s) {
            out.emplace_back("conv.w" + std::to_string(s), Shape{d, s * d});
            out.emplace_back("conv.b" + std::to_string(s), Shape{d});
        }
    }
    out.emplace_back("lstm.w_input", Shape{4 * d, d});
    out.emplace_back("lstm.w_hidden", Shape{4 * d, d});
    out.emplace_back("lstm.bias", Shape{4 * d});

    for (std::size_t level = 0; level < 3; ++level) {
        const std::string p = level_prefix(level);
        switch (c.mechanism) {
            case Mechanism::parallel:
                out.emplace_back(p + "w_affinity", Shape{d, d});
                out.emplace_back(p + "w_image", Shape{k, d});
                out.emplace_back(p + "w_question", Shape{k, d});
                out.emplace_back(p + "h_image", Shape{k});
                out.emplace_back(p + "h_question", Shape{k});
                if (c.attention_bias) {
                    out.emplace_back(p + "b_image", Shape{k});
                    out.emplace_back(p + "b_question", Shape{k});
                }
                break;
            case Mechanism::maxout:
                out.emplace_back(p + "w_affinity", Shape{d, d});
                break;
            case Mechanism::alternating: {
                const auto steps = alternating_step_prefixes(c, level);
                const std::size_t distinct = c.share_alternating_params ? 1 : 3;
                for (std::size_t s = 0; s < distinct; ++s) {
                    out.emplace_back(steps[s] + "w_x", Shape{k, d});
                    out.emplace_back(steps[s] + "w_g", Shape{k, d});
                    out.emplace_back(steps[s] + "h_x", Shape{k});
                    if (c.attention_bias) out.emplace_back(steps[s] + "bias", Shape{k});
                }
                break;
            }
        }
    }

    out.emplace_back("answer.w_word", Shape{d, d});
    out.emplace_back("answer.b_word", Shape{d});
    out.emplace_back("answer.w_phrase", Shape{d, 2 * d});
    out.emplace_back("answer.b_phrase", Shape{d});
    out.emplace_back("answer.w_sentence", Shape{c.h_s, 2 * d});
    out.emplace_back("answer.b_sentence", Shape{c.h_s});
    out.emplace_back("answer.w_out", Shape{c.answers, c.h_s});
    if (c.output_bias) out.emplace_back("answer.b_out", Shape{c.answers});
    return out;
}

ParamStore init_params(const ModelConfig& config, std::uint64_t seed) {
    Rng rng(seed);
    ParamStore params;
    for (auto& [name, shape] : param_shapes(config)) {
        Tensor t(shape);
        if (name == "lstm.bias") {
            for (std::size_t i = config.d; i < 2 * config.d; ++i) t[i] = 1.0;
        } else if (!is_bias(name)) {
            const double fan_out = static_cast<double>(shape.size() == 2 ? shape[0] : 1);
            const double fan_in = static_cast<double>(shape.size() == 2 ? shape[1] : shape[0]);
            const double limit = std::sqrt(6.0 / (fan_in + fan_out));
            std::uniform_real_distribution<double> dist(-limit, limit);
            for (auto& v : t.data()) v = dist(rng);
        }
        params.add(name, std::move(t));
    }
    return params;
}

ParamStore zero_params(const ModelConfig& config) {
    ParamStore params;
    for (auto& [name, shape] : param_shapes(config)) params.add(name, Tensor(shape));
    return params;
}

void check_params(const ModelConfig& config, const ParamStore& params) {
    const auto expected = param_shapes(config);
    for (const auto& [name, shape] : expected) {
        if (!params.contains(name)) throw FormatError("missing tensor '" + name + "'");
        const Tensor& t = params.at(name);
        if (t.shape() != shape) {
            throw DimensionError("tensor '" + name + "' has shape " + t.shape_str() + " but the config expects " +
                                 shape_string(shape));
        }
    }
    if (params.size() != expected.size()) {
        for (const auto& e : params) {
            bool known = false;
            for (const auto& x : expected) known = known || x.first == e.name;
            if (!known) throw FormatError("unknown tensor name '" + e.name + "'");
        }
    }
}

std::array<AttentionOverride, 3> ablation_overrides(Ablation ablation) {
    std::array<AttentionOverride, 3> o{};
    switch (ablation) {
        case Ablation::image_atten_only:
            for (auto& x : o) x.uniform_question = true;
            break;
        case Ablation::question_atten_only:
            for (auto& x : o) x.uniform_image = true;
            break;
        case Ablation::no_word_atten: o[0] = {true, true}; break;
        case Ablation::no_phrase_atten: o[1] = {true, true}; break;
        case Ablation::no_question_atten: o[2] = {true, true}; break;
        case Ablation::none:
        case Ablation::no_conv: break;
    }
    return o;
}

namespace {

std::optional<Var> optional_param(const ParamVars& p, const std::string& name) {
    if (p.contains(name)) return p(name);
    return std::nullopt;
}

CoAttentionResult co_attend_level(const ParamVars& p, const ModelConfig& c, std::size_t level, Var question,
                                  Var image, const Mask& mask, AttentionOverride o) {
    if (o.uniform_image && o.uniform_question) return uniform_co_attend(question, image, mask);
    const std::string pre = level_prefix(level);
    switch (c.mechanism) {
        case Mechanism::parallel: {
            ParallelCoAttentionParams params{p(pre + "w_affinity"), p(pre + "w_image"), p(pre + "w_question"),
                                             p(pre + "h_image"),    p(pre + "h_question"),
                                             optional_param(p, pre + "b_image"), optional_param(p, pre + "b_question")};
            return parallel_co_attend(question, image, params, mask, o);
        }
        case Mechanism::maxout: return maxout_co_attend(question, image, p(pre + "w_affinity"), mask, o);
        case Mechanism::alternating: {
            const auto steps = alternating_step_prefixes(c, level);
            AlternatingCoAttentionParams params;
            for (std::size_t s = 0; s < 3; ++s) {
                params.steps[s] = AttendParams{p(steps[s] + "w_x"), p(steps[s] + "w_g"), p(steps[s] + "h_x"),
                                               optional_param(p, steps[s] + "bias")};
            }
            return alternating_co_attend(question, image, params, mask, c.rounds, o);
        }
    }
    throw ConfigError("unhandled mechanism");
}

}  // namespace

ForwardOutput forward(Graph& graph, const ParamVars& p, const ModelConfig& c, const QuestionTokens& tokens,
                      const FeatureGrid& grid, Mode mode, Rng* rng) {
    if (tokens.max_length() != c.max_length) {
        throw DimensionError("question padded to " + std::to_string(tokens.max_length()) +
                             " tokens but the model expects " + std::to_string(c.max_length));
    }
    if (grid.dim() != c.d || grid.locations() != c.locations) {
        throw DimensionError("feature grid " + grid.features.shape_str() + " does not match model [" +
                             std::to_string(c.d) + " x " + std::to_string(c.locations) + "]");
    }
    DropoutConfig dropout{mode == Mode::train, c.dropout, rng};

    HierarchyParams hp;
    hp.embedding.table = p("embed.table");
    hp.use_conv = c.ablation != Ablation::no_conv;
    if (hp.use_conv) {
        hp.conv = {p("conv.w1"), p("conv.w2"), p("conv.w3"), p("conv.b1"), p("conv.b2"), p("conv.b3")};
    } else {
        hp.word_layer = {p("wordlayer.w"), p("wordlayer.b")};
    }
    hp.lstm = {p("lstm.w_input"), p("lstm.w_hidden"), p("lstm.bias")};

    ForwardOutput out;
    out.question = build_hierarchy(tokens, hp, dropout);
    Var image = graph.constant(grid.features);
    const auto overrides = ablation_overrides(c.ablation);
    const std::array<Var, 3> q_levels{out.question.word, out.question.phrase, out.question.sentence};
    for (std::size_t level = 0; level < 3; ++level) {
        out.levels[level] = co_attend_level(p, c, level, q_levels[level], image, tokens.mask, overrides[level]);
    }

    AnswerEncoderParams ap{p("answer.w_word"),     p("answer.b_word"),     p("answer.w_phrase"), p("answer.b_phrase"),
                           p("answer.w_sentence"), p("answer.b_sentence"), p("answer.w_out"),
                           optional_param(p, "answer.b_out")};
    std::array<LevelFeatures, 3> fused;
    for (std::size_t level = 0; level < 3; ++level) fused[level] = {out.levels[level].q_hat, out.levels[level].v_hat};
    out.answer = encode_answer(fused, ap, dropout);
    return out;
}

}  // namespace hcan
