#include <cmath>
#include <limits>

#include "doctest.h"
#include "hcan/co_attention.hpp"
#include "hcan/errors.hpp"

using namespace hcan;

TEST_CASE("parallel co-attention on a 1-d example") {
    Graph g;
    const double q[2] = {0.7, -0.2}, v[2] = {1.5, -0.5};
    const double wb = 0.8, wv = -0.6, wq = 1.1, hv = 2.0, hq = -1.5, bv = 0.1, bq = -0.3;
    Var Q = g.constant(Tensor::matrix(1, 2, {q[0], q[1]}));
    Var V = g.constant(Tensor::matrix(1, 2, {v[0], v[1]}));
    auto s = [&](double x) { return g.constant(Tensor::vector({x})); };
    auto m = [&](double x) { return g.constant(Tensor::matrix(1, 1, {x})); };
    ParallelCoAttentionParams p{m(wb), m(wv), m(wq), s(hv), s(hq), s(bv), s(bq)};
    auto r = parallel_co_attend(Q, V, p, {true, true});

    double C[2][2];
    for (int t = 0; t < 2; t++)
        for (int n = 0; n < 2; n++) C[t][n] = std::tanh(q[t] * wb * v[n]);
    double sv[2], sq[2];
    for (int n = 0; n < 2; n++) sv[n] = hv * std::tanh(wv * v[n] + wq * q[0] * C[0][n] + wq * q[1] * C[1][n] + bv);
    for (int t = 0; t < 2; t++) sq[t] = hq * std::tanh(wq * q[t] + wv * v[0] * C[t][0] + wv * v[1] * C[t][1] + bq);
    const double av0 = 1.0 / (1.0 + std::exp(sv[1] - sv[0])), aq0 = 1.0 / (1.0 + std::exp(sq[1] - sq[0]));
    CHECK(r.affinity->value()(1, 0) == doctest::Approx(C[1][0]).epsilon(1e-14));
    CHECK(r.a_v.value()[0] == doctest::Approx(av0).epsilon(1e-13));
    CHECK(r.a_q.value()[0] == doctest::Approx(aq0).epsilon(1e-13));
    CHECK(r.v_hat.value()[0] == doctest::Approx(av0 * v[0] + (1 - av0) * v[1]).epsilon(1e-13));
    CHECK(r.q_hat.value()[0] == doctest::Approx(aq0 * q[0] + (1 - aq0) * q[1]).epsilon(1e-13));
}

TEST_CASE("maxout ignores padded question positions") {
    Graph g;
    // position 1 is padding with a large feature that would dominate the max
    Var Q = g.constant(Tensor::matrix(1, 2, {0.1, 5.0}));
    Var V = g.constant(Tensor::matrix(1, 3, {1.0, -1.0, 0.5}));
    Var W = g.constant(Tensor::matrix(1, 1, {1.0}));
    auto r = maxout_co_attend(Q, V, W, {true, false});
    double s[3], z = 0;
    for (int n = 0; n < 3; n++) z += (s[n] = std::exp(std::tanh(0.1 * V.value()[n])));
    for (int n = 0; n < 3; n++) CHECK(r.a_v.value()[n] == doctest::Approx(s[n] / z).epsilon(1e-13));
    CHECK(r.a_q.value()[0] == 1.0);
    CHECK(r.a_q.value()[1] == 0.0);
}

TEST_CASE("alternating attention with one round by hand") {
    Graph g;
    const double q[2] = {0.4, -0.9}, v[2] = {1.0, 0.3};
    Var Q = g.constant(Tensor::matrix(1, 2, {q[0], q[1]}));
    Var V = g.constant(Tensor::matrix(1, 2, {v[0], v[1]}));
    auto m = [&](double x) { return g.constant(Tensor::matrix(1, 1, {x})); };
    auto s = [&](double x) { return g.constant(Tensor::vector({x})); };
    AlternatingCoAttentionParams p{{AttendParams{m(1.2), m(9.0), s(0.7), s(0.05)},
                                    AttendParams{m(-0.8), m(0.6), s(1.3), s(0.0)},
                                    AttendParams{m(0.5), m(-1.1), s(-0.9), s(0.2)}}};
    auto r = alternating_co_attend(Q, V, p, {true, true}, 1);
    auto attend = [](const double* x, double g, double wx, double wg, double h, double b) {
        const double s0 = h * std::tanh(wx * x[0] + wg * g + b), s1 = h * std::tanh(wx * x[1] + wg * g + b);
        const double a0 = 1.0 / (1.0 + std::exp(s1 - s0));
        return std::pair{a0, a0 * x[0] + (1 - a0) * x[1]};
    };
    auto [a1, summary] = attend(q, 0.0, 1.2, 9.0, 0.7, 0.05);  // w_g has no effect on the first step
    auto [a2, vhat] = attend(v, summary, -0.8, 0.6, 1.3, 0.0);
    auto [a3, qhat] = attend(q, vhat, 0.5, -1.1, -0.9, 0.2);
    CHECK(r.summary->value()[0] == doctest::Approx(summary).epsilon(1e-13));
    CHECK(r.a_v.value()[0] == doctest::Approx(a2).epsilon(1e-13));
    CHECK(r.v_hat.value()[0] == doctest::Approx(vhat).epsilon(1e-13));
    CHECK(r.a_q.value()[0] == doctest::Approx(a3).epsilon(1e-13));
    CHECK(r.q_hat.value()[0] == doctest::Approx(qhat).epsilon(1e-13));
    (void)a1;

    auto r2 = alternating_co_attend(Q, V, p, {true, true}, 2);
    auto [b2, vhat2] = attend(v, qhat, -0.8, 0.6, 1.3, 0.0);
    auto [b3, qhat2] = attend(q, vhat2, 0.5, -1.1, -0.9, 0.2);
    CHECK(r2.a_v.value()[0] == doctest::Approx(b2).epsilon(1e-13));
    CHECK(r2.q_hat.value()[0] == doctest::Approx(qhat2).epsilon(1e-13));
    (void)b3;
    CHECK_THROWS_AS(alternating_co_attend(Q, V, p, {true, true}, 0), ParameterError);
}

TEST_CASE("uniform co-attention averages unmasked columns") {
    Graph g;
    Var Q = g.constant(Tensor::matrix(2, 3, {1, 2, 9, 3, 4, 9}));
    Var V = g.constant(Tensor::matrix(2, 2, {1, 3, 0, 4}));
    auto r = uniform_co_attend(Q, V, {true, true, false});
    CHECK(r.q_hat.value() == Tensor::vector({1.5, 3.5}));
    CHECK(r.v_hat.value() == Tensor::vector({2.0, 2.0}));
    CHECK(r.a_q.value()[2] == 0.0);
}

TEST_CASE("attend without guidance equals zero guidance") {
    Graph g;
    Var X = g.constant(Tensor::matrix(2, 3, {0.3, -0.2, 0.5, 1.0, 0.1, -0.4}));
    AttendParams p{g.constant(Tensor::matrix(2, 2, {1, 0.5, -0.3, 0.8})), g.constant(Tensor::matrix(2, 2, {2, 1, 1, 2})),
                   g.constant(Tensor::vector({0.9, -0.7})), std::nullopt};
    auto a = attend_op(X, std::nullopt, p, {true, true, true});
    auto b = attend_op(X, g.constant(Tensor::vector({0, 0})), p, {true, true, true});
    CHECK(a.weights.value() == b.weights.value());
}

TEST_CASE("input validation") {
    Graph g;
    Var Q = g.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    Var V3 = g.constant(Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6}));
    Var W = g.constant(Tensor::identity(2));
    CHECK_THROWS_AS(maxout_co_attend(Q, V3, W, {true, true}), DimensionError);
    CHECK_THROWS_AS(maxout_co_attend(Q, Q, W, {false, false}), ParameterError);
    CHECK_THROWS_AS(maxout_co_attend(Q, Q, W, {true}), DimensionError);
    CHECK_THROWS_AS(FeatureGrid(Tensor::vector({1, 2})), DimensionError);
    CHECK_THROWS_AS(FeatureGrid(Tensor::matrix(1, 1, {std::numeric_limits<double>::quiet_NaN()})), NumericError);
}
