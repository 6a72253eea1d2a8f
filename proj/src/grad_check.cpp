#include "hcan/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace hcan {

LossClosure graph_closure(std::function<Var(Graph&, const ParamVars&)> build, GraphOptions options) {
    return [build = std::move(build), options](const ParamStore& params, Gradients* grads) {
        Graph graph(options);
        ParamVars vars(graph, params);
        Var loss = build(graph, vars);
        const double value = loss.value()[0];
        if (grads) {
            graph.backward(loss);
            *grads = vars.gradients();
        }
        return value;
    };
}

std::vector<std::string> GradCheckReport::failing() const {
    std::vector<std::string> out;
    for (const auto& t : tensors)
        if (!t.passed) out.push_back(t.name);
    return out;
}

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const LossClosure& loss, ParamStore params, const GradCheckOptions& options) {
    GradCheckReport report;
    report.tolerance = options.tolerance;

    Gradients analytic;
    loss(params, &analytic);

    std::mt19937_64 rng(options.seed);
    for (std::size_t p = 0; p < params.size(); ++p) {
        TensorCheck check;
        check.name = params[p].name;
        Tensor& value = params[p].value;
        const Tensor& grad = analytic.at(p);

        if (auto bad = grad.first_non_finite(); bad != grad.size()) {
            check.finite = false;
            check.passed = false;
            check.worst_index = bad;
            check.max_relative_error = std::numeric_limits<double>::infinity();
            report.tensors.push_back(check);
            report.passed = false;
            continue;
        }

        std::vector<std::size_t> coords(value.size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (value.size() >= options.full_sweep_limit) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(std::min(options.sample_size, coords.size()));
            std::sort(coords.begin(), coords.end());
        }

        for (auto i : coords) {
            const double saved = value[i];
            value[i] = saved + options.step;
            const double up = loss(params, nullptr);
            value[i] = saved - options.step;
            const double down = loss(params, nullptr);
            value[i] = saved;
            const double numeric = (up - down) / (2.0 * options.step);
            ++check.coordinates_checked;
            if (!std::isfinite(numeric)) {
                check.finite = false;
                check.worst_index = i;
                check.max_relative_error = std::numeric_limits<double>::infinity();
                break;
            }
            const double err = relative_error(grad[i], numeric, options.denominator_floor);
            if (check.coordinates_checked == 1 || err > check.max_relative_error) {
                check.max_relative_error = err;
                check.worst_index = i;
                check.analytic_at_worst = grad[i];
                check.numeric_at_worst = numeric;
            }
        }
        check.passed = check.finite && check.max_relative_error < options.tolerance;
        report.passed = report.passed && check.passed;
        report.tensors.push_back(check);
    }
    return report;
}

}  // namespace hcan
