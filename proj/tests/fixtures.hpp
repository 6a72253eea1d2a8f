#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "hcan/model.hpp"

namespace fixtures {

struct Instance {
    hcan::ModelConfig config;
    hcan::ParamStore params;
    hcan::QuestionTokens tokens;
    hcan::FeatureGrid grid;
};

inline std::size_t pick(hcan::Rng& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Small random model, question and grid. Biases are moved off zero.
inline Instance random_instance(std::uint64_t seed, hcan::Mechanism mechanism, hcan::Ablation ablation,
                                std::size_t rounds = 1) {
    hcan::Rng rng(seed);
    Instance x;
    auto& c = x.config;
    c.vocab_size = pick(rng, 3, 9);
    c.d = pick(rng, 2, 6);
    c.k = pick(rng, 2, 5);
    c.h_s = pick(rng, 2, 6);
    c.max_length = pick(rng, 1, 6);
    c.locations = pick(rng, 1, 6);
    c.answers = pick(rng, 2, 6);
    c.mechanism = mechanism;
    c.ablation = ablation;
    c.rounds = rounds;
    c.dropout = 0.0;
    c.seed = seed;
    x.params = hcan::init_params(c, seed);
    std::uniform_real_distribution<double> shift(-0.5, 0.5);
    for (auto& [name, t] : x.params) {
        const auto leaf = name.substr(name.rfind('.') + 1);
        if (leaf[0] == 'b') // biases
            for (auto& v : t.data()) v += shift(rng);
    }
    const std::size_t len = pick(rng, 1, c.max_length);
    std::vector<std::size_t> ids;
    for (std::size_t t = 0; t < len; t++) ids.push_back(pick(rng, 1, c.vocab_size - 1));
    x.tokens = hcan::QuestionTokens::make(ids, c.max_length);
    hcan::Tensor v({c.d, c.locations});
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& e : v.data()) e = gauss(rng);
    x.grid = hcan::FeatureGrid(v);
    return x;
}

inline std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("hcan_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace fixtures
