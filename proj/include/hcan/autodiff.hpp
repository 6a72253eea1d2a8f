#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hcan/tensor.hpp"

namespace hcan {

using Mask = std::vector<bool>;
using Rng = std::mt19937_64;

// Test hook: deliberately wrong backward rules, used to show that gradient
// checking catches a broken derivative and names the affected tensors.
enum class Fault { none, sigmoid_backward };

struct GraphOptions {
    Fault fault = Fault::none;
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
    Graph* graph = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Tensor& grad() const;
    const Shape& shape() const { return value().shape(); }
};

/// Append-only computation graph with reverse-mode differentiation.
///
/// Nodes are created by the primitives below; each records its inputs and a
/// backward rule. backward() walks nodes in exact reverse creation order.
/// Every primitive rejects non-finite results with NumericError.
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, std::size_t self)>;

    explicit Graph(GraphOptions options = {}) : options_(options) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Tensor value);
    // Leaf owning its value; receives a gradient when requires_grad is set.
    Var input(Tensor value, bool requires_grad = true);
    // Leaf borrowing `value`, which must outlive the graph and stay unchanged
    // until backward() returns.
    Var parameter(const Tensor& value);

    void backward(Var loss);
    // Clears gradients so backward() may run again.
    void reset_grads();

    const Tensor& value(std::size_t id) const;
    const Tensor& grad(std::size_t id) const;
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
    const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }
    const std::string& op(std::size_t id) const { return nodes_.at(id).op; }
    std::size_t size() const { return nodes_.size(); }
    const GraphOptions& options() const { return options_; }

    // Primitive authoring interface.
    Var emplace(const char* op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);
    // Gradient buffer of node `id` during backward, or nullptr when the node
    // does not require a gradient.
    Tensor* grad_sink(std::size_t id);

private:
    struct Node {
        std::string op;
        Tensor owned;
        const Tensor* borrowed = nullptr;
        Tensor grad;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        bool requires_grad = false;

        const Tensor& value() const { return borrowed ? *borrowed : owned; }
    };

    GraphOptions options_;
    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

namespace ad {

// Matrix product. `a` is m x k; `b` is k x n (result m x n) or a length-k
// vector (result length m).
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
// Adds vector `bias` (length m) to every column of `x` (m x n, or length m).
Var add_bias(Var x, Var bias);
Var mul(Var a, Var b);
Var tanh(Var x);
Var sigmoid(Var x);
Var sum(Var x);

// Exp-normalizes `scores` over the positions where mask is true; masked
// positions are exactly 0.
Var softmax_masked(Var scores, const Mask& mask);
Var softmax(Var scores);

// Coordinate-wise maximum. Gradient goes to the argmax input only; ties go to
// the earliest argument.
Var elementwise_max3(Var a, Var b, Var c);

// Maximum over axis 0 (per column, skipping rows where row_mask is false) or
// axis 1 (per row, skipping columns where col_mask is false). Empty mask
// means no masking. Ties route to the lowest index.
Var reduce_max(Var x, std::size_t axis, const Mask& mask = {});

// Inverted dropout; identity when p == 0.
Var dropout(Var x, double p, Rng& rng);

// -log softmax(logits)[target], evaluated with log-sum-exp.
Var cross_entropy(Var logits, std::size_t target);

// Column t is row ids[t] of `table` (vocab x d), or zero where mask is false.
Var gather_columns(Var table, std::span<const std::size_t> ids, const Mask& mask);
// Column t is column t + offset of x, or zero past the end.
Var shift_columns(Var x, std::size_t offset);
Var mask_columns(Var x, const Mask& mask);
// Stacks along rows. Inputs are all vectors or all matrices with equal column count.
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
Var column(Var x, std::size_t index);
Var stack_columns(std::span<const Var> columns);

}  // namespace ad

}  // namespace hcan
