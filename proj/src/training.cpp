#include "hcan/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "hcan/errors.hpp"

namespace hcan {

OptimizerState make_optimizer_state(const ParamStore& params, RmsPropConfig config) {
    if (!(config.lr > 0.0) || !(config.alpha >= 0.0 && config.alpha < 1.0) || config.weight_decay < 0.0 ||
        !(config.epsilon > 0.0)) {
        throw ConfigError("rmsprop: need lr > 0, 0 <= alpha < 1, weight_decay >= 0, epsilon > 0");
    }
    return {std::move(config), params.zeros_like()};
}

void rmsprop_update(ParamStore& params, const Gradients& grads, OptimizerState& state) {
    if (grads.size() != params.size() || state.squared.size() != params.size()) {
        throw DimensionError("rmsprop: parameter, gradient and state counts differ");
    }
    const auto& c = state.config;
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto& [name, theta] = params[p];
        auto& [state_name, v] = state.squared[p];
        if (state_name != name) throw IndexError("rmsprop: state tensor '" + state_name + "' does not match '" + name + "'");
        if (theta.shape() != grads[p].shape() || theta.shape() != v.shape()) {
            throw DimensionError("rmsprop: shape mismatch for '" + name + "'");
        }
        std::vector<bool> exempt;
        if (auto it = c.decay_exempt_rows.find(name); it != c.decay_exempt_rows.end()) {
            exempt.assign(theta.rows(), false);
            for (auto r : it->second)
                if (r < exempt.size()) exempt[r] = true;
        }
        const std::size_t cols = theta.cols();
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double wd = !exempt.empty() && exempt[i / cols] ? 0.0 : c.weight_decay;
            const double g = grads[p][i] + wd * theta[i];
            v[i] = c.alpha * v[i] + (1.0 - c.alpha) * g * g;
            theta[i] -= c.lr * g / (std::sqrt(v[i]) + c.epsilon);
        }
    }
}

std::pair<ParamStore, OptimizerState> rmsprop_step(const ParamStore& params, const Gradients& grads,
                                                   const OptimizerState& state) {
    std::pair<ParamStore, OptimizerState> out{params, state};
    rmsprop_update(out.first, grads, out.second);
    return out;
}

std::vector<EncodedExample> encode_dataset(const Dataset& dataset, const Vocabulary& questions,
                                           const Vocabulary& answers, std::size_t max_length) {
    std::vector<EncodedExample> out;
    out.reserve(dataset.size());
    for (const auto& e : dataset) {
        std::vector<std::size_t> ids;
        ids.reserve(e.question.size());
        for (const auto& w : e.question) ids.push_back(questions.id(w));
        if (ids.size() > max_length) {
            throw DimensionError("example '" + e.id + "' has " + std::to_string(ids.size()) +
                                 " tokens, more than the model's maximum of " + std::to_string(max_length));
        }
        EncodedExample x;
        x.tokens = QuestionTokens::make(std::move(ids), max_length);
        x.grid = e.grid;
        x.answer = answers.find(e.answer).value_or(kNoAnswer);
        x.question_type = e.question_type;
        x.planted = e.planted;
        out.push_back(std::move(x));
    }
    return out;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over a combined word
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double example_gradients(const ModelConfig& config, const ParamStore& params, const EncodedExample& example, Mode mode,
                         std::uint64_t dropout_seed, Gradients* grads) {
    if (example.answer == kNoAnswer) throw IndexError("example has no answer in the answer vocabulary");
    Graph graph;
    ParamVars vars(graph, params);
    Rng rng(dropout_seed);
    ForwardOutput out = forward(graph, vars, config, example.tokens, example.grid, mode, &rng);
    Var loss = ad::cross_entropy(out.answer.logits, example.answer);
    if (grads) {
        graph.backward(loss);
        *grads = vars.gradients();
    }
    return loss.value()[0];
}

EvalResult evaluate_with(const std::vector<EncodedExample>& data,
                         const std::function<std::size_t(const EncodedExample&)>& predictor) {
    EvalResult r;
    for (const auto& x : data) {
        const bool hit = x.answer != kNoAnswer && predictor(x) == x.answer;
        r.overall.total += 1;
        r.overall.correct += hit ? 1 : 0;
        if (!x.question_type.empty()) {
            auto& bucket = r.per_type[x.question_type];
            bucket.total += 1;
            bucket.correct += hit ? 1 : 0;
        }
    }
    return r;
}

EvalResult evaluate(const ModelConfig& config, const ParamStore& params, const std::vector<EncodedExample>& data) {
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    EvalResult r = evaluate_with(data, [&](const EncodedExample& x) {
        Graph graph;
        ParamVars vars(graph, params);
        ForwardOutput out = forward(graph, vars, config, x.tokens, x.grid, Mode::eval);
        if (x.answer != kNoAnswer) {
            const Tensor& p = out.answer.probs.value();
            loss_sum += -std::log(std::max(p[x.answer], 1e-300));
            ++loss_count;
        }
        return predict(out.answer.probs.value());
    });
    r.mean_loss = loss_count == 0 ? 0.0 : loss_sum / static_cast<double>(loss_count);
    return r;
}

namespace {

template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t i = t; i < n; i += threads) fn(i);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace

TrainReport train_loop(const ModelConfig& config, ParamStore& params, OptimizerState& optimizer,
                       const std::vector<EncodedExample>& train, const std::vector<EncodedExample>& val,
                       const TrainConfig& tc, TrainProgress progress, const EpochCallback& on_epoch) {
    config.validate();
    check_params(config, params);
    if (tc.batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (tc.max_epochs == 0) throw ConfigError("max_epochs must be at least 1");
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < train.size(); ++i)
        if (train[i].answer != kNoAnswer) usable.push_back(i);
    if (usable.empty()) throw ParameterError("training set has no examples with an in-vocabulary answer");
    if (val.empty()) throw ParameterError("validation set is empty");

    TrainReport report;
    report.best_epoch = progress.best_epoch;
    report.best_val_accuracy = std::max(progress.best_val_accuracy, 0.0);

    while (progress.epoch < tc.max_epochs && !(progress.epoch > 0 && progress.since_best >= tc.patience)) {
        const std::size_t epoch = progress.epoch + 1;
        std::vector<std::size_t> order = usable;
        Rng shuffle_rng(mix_seed(tc.seed, epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        EpochStats stats;
        stats.epoch = epoch;
        double loss_sum = 0.0;
        for (std::size_t start = 0, batch = 0; start < order.size(); start += tc.batch_size, ++batch) {
            const std::size_t count = std::min(tc.batch_size, order.size() - start);
            std::vector<Gradients> per_example(count);
            std::vector<double> losses(count);
            try {
                parallel_for(count, tc.threads, [&](std::size_t j) {
                    const std::uint64_t seed = mix_seed(mix_seed(tc.seed, epoch), start + j);
                    losses[j] = example_gradients(config, params, train[order[start + j]], Mode::train, seed,
                                                  &per_example[j]);
                });
            } catch (const NumericError& e) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch) + ": " + e.what());
            }
            Gradients total = zero_gradients(params);
            for (std::size_t j = 0; j < count; ++j) {
                if (!std::isfinite(losses[j])) {
                    throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                                       std::to_string(batch) + ": non-finite loss");
                }
                accumulate(total, per_example[j]);
                loss_sum += losses[j];
            }
            const double scale = 1.0 / static_cast<double>(count);
            for (auto& t : total)
                for (auto& v : t.data()) v *= scale;
            rmsprop_update(params, total, optimizer);
            ++stats.steps;
        }
        stats.train_loss = loss_sum / static_cast<double>(order.size());
        stats.train_accuracy = evaluate(config, params, train).overall.value();
        stats.val_accuracy = evaluate(config, params, val).overall.value();

        progress.epoch = epoch;
        stats.improved = stats.val_accuracy > progress.best_val_accuracy;
        if (stats.improved) {
            progress.best_val_accuracy = stats.val_accuracy;
            progress.best_epoch = epoch;
            progress.since_best = 0;
        } else {
            ++progress.since_best;
        }
        stats.best_val_accuracy = progress.best_val_accuracy;
        report.epochs.push_back(stats);
        if (on_epoch) on_epoch(stats, params, optimizer, progress);
    }
    report.stop_epoch = progress.epoch;
    report.best_epoch = progress.best_epoch;
    report.best_val_accuracy = std::max(progress.best_val_accuracy, 0.0);
    report.early_stopped = progress.epoch < tc.max_epochs;
    return report;
}

}  // namespace hcan
