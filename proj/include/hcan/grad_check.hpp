#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hcan/params.hpp"

namespace hcan {

/// Evaluates a scalar loss at `params`. When `grads` is non-null it also
/// fills analytic gradients aligned with `params`.
using LossClosure = std::function<double(const ParamStore& params, Gradients* grads)>;

/// Builds a LossClosure from a function that records a scalar loss on a fresh graph.
LossClosure graph_closure(std::function<Var(Graph&, const ParamVars&)> build, GraphOptions options = {});

struct GradCheckOptions {
    double tolerance = 1e-4;
    double step = 1e-5;
    // Relative error denominators never drop below this, so coordinates whose
    // true gradient is ~0 are judged by absolute error.
    double denominator_floor = 1e-6;
    std::size_t full_sweep_limit = 10000;
    std::size_t sample_size = 256;
    std::uint64_t seed = 0;
};

struct TensorCheck {
    std::string name;
    std::size_t coordinates_checked = 0;
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    bool finite = true;
    bool passed = true;
};

struct GradCheckReport {
    double tolerance = 0.0;
    std::vector<TensorCheck> tensors;
    bool passed = true;

    std::vector<std::string> failing() const;
};

double relative_error(double analytic, double numeric, double floor);

// Compares analytic gradients with central differences for every tensor. Tensors
// below full_sweep_limit coordinates are checked exhaustively, larger ones on a
// seeded random sample.
GradCheckReport grad_check(const LossClosure& loss, ParamStore params, const GradCheckOptions& options = {});

}  // namespace hcan
