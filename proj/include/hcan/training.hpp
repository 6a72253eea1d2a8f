#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hcan/data_io.hpp"
#include "hcan/model.hpp"
#include "hcan/params.hpp"

namespace hcan {

// ---- optimizer ----------------------------------------------------------------

struct RmsPropConfig {
    double lr = 4e-4;
    double alpha = 0.99;  // squared-gradient smoothing
    double weight_decay = 1e-8;
    double epsilon = 1e-8;
    // Rows exempt from weight decay, per tensor (the embedding pad row).
    std::map<std::string, std::vector<std::size_t>> decay_exempt_rows;
};

struct OptimizerState {
    RmsPropConfig config;
    ParamStore squared;  // running mean of squared gradients, named like the parameters
};

OptimizerState make_optimizer_state(const ParamStore& params, RmsPropConfig config);

// g = grad + wd * theta; v = alpha * v + (1 - alpha) * g^2; theta -= lr * g / (sqrt(v) + eps)
void rmsprop_update(ParamStore& params, const Gradients& grads, OptimizerState& state);
std::pair<ParamStore, OptimizerState> rmsprop_step(const ParamStore& params, const Gradients& grads,
                                                   const OptimizerState& state);

// ---- encoded examples -----------------------------------------------------------

inline constexpr std::size_t kNoAnswer = static_cast<std::size_t>(-1);

struct EncodedExample {
    QuestionTokens tokens;
    FeatureGrid grid;
    std::size_t answer = kNoAnswer;  // kNoAnswer when outside the answer vocabulary
    std::string question_type;
    std::optional<Planted> planted;
};

std::vector<EncodedExample> encode_dataset(const Dataset& dataset, const Vocabulary& questions,
                                           const Vocabulary& answers, std::size_t max_length);

// ---- evaluation -----------------------------------------------------------------

struct Accuracy {
    std::size_t correct = 0;
    std::size_t total = 0;
    double value() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
};

struct EvalResult {
    Accuracy overall;
    double mean_loss = 0.0;  // over examples with an in-vocabulary answer
    // Only templates that occur in the data appear here.
    std::map<std::string, Accuracy> per_type;
};

EvalResult evaluate(const ModelConfig& config, const ParamStore& params, const std::vector<EncodedExample>& data);
EvalResult evaluate_with(const std::vector<EncodedExample>& data,
                         const std::function<std::size_t(const EncodedExample&)>& predictor);

// ---- training loop ----------------------------------------------------------------

struct TrainConfig {
    std::size_t max_epochs = 256;
    std::size_t patience = 5;
    std::size_t batch_size = 32;
    std::uint64_t seed = 7;
    std::size_t threads = 1;
};

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    std::size_t steps = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
    double best_val_accuracy = 0.0;
    bool improved = false;
};

// Resumable bookkeeping.
struct TrainProgress {
    std::size_t epoch = 0;  // epochs completed
    double best_val_accuracy = -1.0;
    std::size_t best_epoch = 0;
    std::size_t since_best = 0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    std::size_t stop_epoch = 0;
    std::size_t best_epoch = 0;
    double best_val_accuracy = 0.0;
    std::string best_checkpoint;
    bool early_stopped = false;
};

using EpochCallback =
    std::function<void(const EpochStats&, const ParamStore&, const OptimizerState&, const TrainProgress&)>;

// Mini-batch training with per-epoch seeded shuffling, fixed-order gradient
// reduction (mean over the batch) and early stopping on validation accuracy.
TrainReport train_loop(const ModelConfig& config, ParamStore& params, OptimizerState& optimizer,
                       const std::vector<EncodedExample>& train, const std::vector<EncodedExample>& val,
                       const TrainConfig& train_config, TrainProgress progress = {},
                       const EpochCallback& on_epoch = nullptr);

// Loss and gradients of one example.
double example_gradients(const ModelConfig& config, const ParamStore& params, const EncodedExample& example, Mode mode,
                         std::uint64_t dropout_seed, Gradients* grads);

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace hcan
