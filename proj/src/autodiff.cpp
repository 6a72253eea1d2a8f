#include "hcan/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "hcan/errors.hpp"

namespace hcan {

const Tensor& Var::value() const { return graph->value(id); }
const Tensor& Var::grad() const { return graph->grad(id); }

Var Graph::constant(Tensor value) { return emplace("constant", std::move(value), {}, nullptr); }

Var Graph::input(Tensor value, bool requires_grad) {
    Var v = emplace("input", std::move(value), {}, nullptr);
    nodes_[v.id].requires_grad = requires_grad;
    return v;
}

Var Graph::parameter(const Tensor& value) {
    if (!value.all_finite()) throw NumericError("parameter holds non-finite values");
    Node node;
    node.op = "parameter";
    node.borrowed = &value;
    node.requires_grad = true;
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
}

const Tensor& Graph::value(std::size_t id) const { return nodes_.at(id).value(); }

const Tensor& Graph::grad(std::size_t id) const {
    const Node& n = nodes_.at(id);
    if (!backward_done_) throw GraphError("gradients are not available before backward()");
    if (!n.requires_grad) throw GraphError("node " + std::to_string(id) + " (" + n.op + ") does not require a gradient");
    return n.grad;
}

Tensor* Graph::grad_sink(std::size_t id) {
    Node& n = nodes_[id];
    return n.requires_grad ? &n.grad : nullptr;
}

Var Graph::emplace(const char* op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
    if (auto bad = value.first_non_finite(); bad != value.size()) {
        throw NumericError(std::string(op) + " produced a non-finite value at flat index " + std::to_string(bad));
    }
    Node node;
    node.op = op;
    node.owned = std::move(value);
    for (auto in : inputs) {
        if (in >= nodes_.size()) throw GraphError("input node does not precede " + std::string(op));
        node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
    }
    node.inputs = std::move(inputs);
    if (node.requires_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
}

void Graph::backward(Var loss) {
    if (loss.graph != this) throw GraphError("loss belongs to a different graph");
    if (backward_done_) throw GraphError("backward() called twice without reset_grads()");
    if (value(loss.id).size() != 1) {
        throw GraphError("backward() needs a scalar root, got shape " + value(loss.id).shape_str());
    }
    for (auto& n : nodes_) {
        if (n.requires_grad) n.grad = Tensor(n.value().shape());
    }
    backward_done_ = true;
    if (!nodes_[loss.id].requires_grad) return;
    nodes_[loss.id].grad.fill(1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.requires_grad && n.backward) n.backward(*this, i);
    }
}

void Graph::reset_grads() {
    for (auto& n : nodes_) n.grad = Tensor();
    backward_done_ = false;
}

namespace ad {

namespace {

void same_graph(Var a, Var b, const char* op) {
    if (a.graph != b.graph || a.graph == nullptr) throw GraphError(std::string(op) + ": operands from different graphs");
}

void same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
}

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

Var matmul(Var a, Var b) {
    same_graph(a, b, "matmul");
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (A.rank() != 2 || (B.rank() != 1 && B.rank() != 2) || A.cols() != B.rows()) {
        throw DimensionError("matmul: cannot multiply " + A.shape_str() + " by " + B.shape_str());
    }
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    Tensor out(B.rank() == 1 ? Shape{m} : Shape{m, n});
    gemm_nn(A.data().data(), B.data().data(), out.data().data(), m, k, n);
    return a.graph->emplace("matmul", std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id, m, k, n](Graph& g, std::size_t self) {
        const Tensor& G = g.grad(self);
        const Tensor& A = g.value(ia);
        const Tensor& B = g.value(ib);
        if (Tensor* ga = g.grad_sink(ia)) {
            // dA = G * B^T
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * B[p * n + j];
                    (*ga)[i * k + p] += s;
                }
            }
        }
        if (Tensor* gb = g.grad_sink(ib)) {
            // dB = A^T * G
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = A[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) (*gb)[p * n + j] += av * G[i * n + j];
                }
            }
        }
    });
}

Var transpose(Var a) {
    const Tensor& A = a.value();
    if (A.rank() != 2) throw DimensionError("transpose: expected a matrix, got " + A.shape_str());
    const std::size_t m = A.rows(), n = A.cols();
    Tensor out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out(j, i) = A(i, j);
    return a.graph->emplace("transpose", std::move(out), {a.id}, [ia = a.id, m, n](Graph& g, std::size_t self) {
        const Tensor& G = g.grad(self);
        Tensor* ga = g.grad_sink(ia);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) (*ga)(i, j) += G(j, i);
    });
}

Var add(Var a, Var b) {
    same_graph(a, b, "add");
    same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    const Tensor& B = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
    return a.graph->emplace("add", std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Graph& g, std::size_t self) {
        const Tensor& G = g.grad(self);
        for (auto id : {ia, ib}) {
            if (Tensor* s = g.grad_sink(id))
                for (std::size_t i = 0; i < G.size(); ++i) (*s)[i] += G[i];
        }
    });
}

Var add_bias(Var x, Var bias) {
    same_graph(x, bias, "add_bias");
    const Tensor& X = x.value();
    const Tensor& b = bias.value();
    if (b.rank() != 1 || X.rank() == 0 || X.rows() != b.size()) {
        throw DimensionError("add_bias: bias " + b.shape_str() + " does not fit " + X.shape_str());
    }
    const std::size_t m = X.rows(), n = X.cols();
    Tensor out = X;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b[i];
    return x.graph->emplace("add_bias", std::move(out), {x.id, bias.id}, [ix = x.id, ib = bias.id, m, n](Graph& g, std::size_t self) {
        const Tensor& G = g.grad(self);
        if (Tensor* gx = g.grad_sink(ix))
            for (std::size_t i = 0; i < G.size(); ++i) (*gx)[i] += G[i];
        if (Tensor* gb = g.grad_sink(ib))
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) (*gb)[i] += G[i * n + j];
    });
}

Var mul(Var a, Var b) {
    same_graph(a, b, "mul");
    same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    const Tensor& B = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
    return a.graph->emplace("mul", std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Graph& g, std::size_t self) {
        const Tensor& G = g.grad(self);
        if (Tensor* ga = g.grad_sink(ia)) {
            const Tensor& B = g.value(ib);
            for (std::size_t i = 0; i < G.size(); ++i) (*ga)[i] += G[i] * B[i];
        }
        if (Tensor* gb = g.grad_sink(ib)) {
            const Tensor& A = g.value(ia);
            for (std::size_t i = 0; i < G.size(); ++i) (*gb)[i] += G[i] * A[i];
        }
    });
}

Var tanh(Var x) {
    Tensor out = x.value();
    for (auto& v : out.data()) v = std::tanh(v);
    return x.graph->emplace("tanh", std::move(out), {x.id}, [ix = x.id](Graph& g, std::size_t self) {
        const Tensor& G = g.grad(self);
        const Tensor& Y = g.value(self);
        Tensor* gx = g.grad_sink(ix);
        for (std::size_t i = 0; i < G.size(); ++i) (*gx)[i] += G[i] * (1.0 - Y[i] * Y[i]);
    });
}

Var sigmoid(Var x) {
    Tensor out = x.value();
    for (auto& v : out.data()) v = 1.0 / (1.0 + std::exp(-v));
    return x.graph->emplace("sigmoid", std::move(out), {x.id}, [ix = x.id](Graph& g, std::size_t self) {
        const Tensor& G = g.grad(self);
        const Tensor& Y = g.value(self);
        Tensor* gx = g.grad_sink(ix);
        const bool broken = g.options().fault == Fault::sigmoid_backward;
        for (std::size_t i = 0; i < G.size(); ++i) {
            const double dy = broken ? Y[i] : Y[i] * (1.0 - Y[i]);
            (*gx)[i] += G[i] * dy;
        }
    });
}

Var sum(Var x) {
    double s = 0.0;
    for (double v : x.value().data()) s += v;
    return x.graph->emplace("sum", Tensor::scalar(s), {x.id}, [ix = x.id](Graph& g, std::size_t self) {
        const double G = g.grad(self)[0];
        Tensor* gx = g.grad_sink(ix);
        for (auto& v : gx->data()) v += G;
    });
}

Var softmax_masked(Var scores, const Mask& mask) {
    const Tensor& S = scores.value();
    if (S.rank() != 1) throw DimensionError("softmax_masked: expected a vector, got " + S.shape_str());
    if (mask.size() != S.size()) {
        throw DimensionError("softmax_masked: mask length " + std::to_string(mask.size()) + " vs scores " +
                             S.shape_str());
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < S.size(); ++i)
        if (mask[i]) mx = std::max(mx, S[i]);
    if (mx == -std::numeric_limits<double>::infinity()) {
        throw ParameterError("softmax_masked: every position is masked, distribution undefined");
    }
    Tensor out(S.shape());
    double z = 0.0;
    for (std::size_t i = 0; i < S.size(); ++i) {
        if (mask[i]) {
            out[i] = std::exp(S[i] - mx);
            z += out[i];
        }
    }
    for (auto& v : out.data()) v /= z;
    return scores.graph->emplace("softmax_masked", std::move(out), {scores.id}, [is = scores.id](Graph& g, std::size_t self) {
        const Tensor& G = g.grad(self);
        const Tensor& P = g.value(self);
        double dot = 0.0;
        for (std::size_t i = 0; i < P.size(); ++i) dot += G[i] * P[i];
        Tensor* gs = g.grad_sink(is);
        // Masked entries have P = 0 and receive nothing.
        for (std::size_t i = 0; i < P.size(); ++i) (*gs)[i] += P[i] * (G[i] - dot);
    });
}

Var softmax(Var scores) { return softmax_masked(scores, Mask(scores.value().size(), true)); }

Var elementwise_max3(Var a, Var b, Var c) {
    same_graph(a, b, "elementwise_max3");
    same_graph(a, c, "elementwise_max3");
    same_shape(a.value(), b.value(), "elementwise_max3");
    same_shape(a.value(), c.value(), "elementwise_max3");
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    const Tensor& C = c.value();
    Tensor out(A.shape());
    std::vector<std::uint8_t> route(A.size());
    for (std::size_t i = 0; i < A.size(); ++i) {
        std::uint8_t r = 0;
        double best = A[i];
        if (B[i] > best) { best = B[i]; r = 1; }
        if (C[i] > best) { best = C[i]; r = 2; }
        out[i] = best;
        route[i] = r;
    }
    std::array<std::size_t, 3> ids{a.id, b.id, c.id};
    return a.graph->emplace("elementwise_max3", std::move(out), {a.id, b.id, c.id},
                            [ids, route = std::move(route)](Graph& g, std::size_t self) {
                                const Tensor& G = g.grad(self);
                                std::array<Tensor*, 3> sinks{g.grad_sink(ids[0]), g.grad_sink(ids[1]), g.grad_sink(ids[2])};
                                for (std::size_t i = 0; i < G.size(); ++i) {
                                    if (Tensor* s = sinks[route[i]]) (*s)[i] += G[i];
                                }
                            });
}

Var reduce_max(Var x, std::size_t axis, const Mask& mask) {
    const Tensor& X = x.value();
    if (X.rank() != 2) throw DimensionError("reduce_max: expected a matrix, got " + X.shape_str());
    if (axis > 1) throw DimensionError("reduce_max: axis must be 0 or 1");
    const std::size_t m = X.rows(), n = X.cols();
    const std::size_t reduced = axis == 0 ? m : n;
    const std::size_t kept = axis == 0 ? n : m;
    if (!mask.empty() && mask.size() != reduced) {
        throw DimensionError("reduce_max: mask length " + std::to_string(mask.size()) + " does not match reduced extent " +
                             std::to_string(reduced));
    }
    Tensor out({kept});
    std::vector<std::size_t> arg(kept);
    for (std::size_t o = 0; o < kept; ++o) {
        bool found = false;
        double best = 0.0;
        for (std::size_t r = 0; r < reduced; ++r) {
            if (!mask.empty() && !mask[r]) continue;
            const double v = axis == 0 ? X(r, o) : X(o, r);
            if (!found || v > best) {
                best = v;
                arg[o] = r;
                found = true;
            }
        }
        if (!found) throw ParameterError("reduce_max: every position is masked");
        out[o] = best;
    }
    return x.graph->emplace("reduce_max", std::move(out), {x.id}, [ix = x.id, axis, n, arg = std::move(arg)](Graph& g, std::size_t self) {
        const Tensor& G = g.grad(self);
        Tensor* gx = g.grad_sink(ix);
        for (std::size_t o = 0; o < arg.size(); ++o) {
            const std::size_t flat = axis == 0 ? arg[o] * n + o : o * n + arg[o];
            (*gx)[flat] += G[o];
        }
    });
}

Var dropout(Var x, double p, Rng& rng) {
    if (!(p >= 0.0 && p < 1.0)) throw ParameterError("dropout: probability must lie in [0, 1), got " + std::to_string(p));
    if (p == 0.0) return x;
    const double scale = 1.0 / (1.0 - p);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Tensor keep(x.value().shape());
    for (auto& k : keep.data()) k = unit(rng) >= p ? scale : 0.0;
    Tensor out = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= keep[i];
    return x.graph->emplace("dropout", std::move(out), {x.id}, [ix = x.id, keep = std::move(keep)](Graph& g, std::size_t self) {
        const Tensor& G = g.grad(self);
        Tensor* gx = g.grad_sink(ix);
        for (std::size_t i = 0; i < G.size(); ++i) (*gx)[i] += G[i] * keep[i];
    });
}

Var cross_entropy(Var logits, std::size_t target) {
    const Tensor& L = logits.value();
    if (L.rank() != 1) throw DimensionError("cross_entropy: expected a logit vector, got " + L.shape_str());
    if (target >= L.size()) {
        throw IndexError("cross_entropy: target " + std::to_string(target) + " out of range for " +
                         std::to_string(L.size()) + " classes");
    }
    const double mx = *std::max_element(L.data().begin(), L.data().end());
    double z = 0.0;
    for (double v : L.data()) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    return logits.graph->emplace("cross_entropy", Tensor::scalar(lse - L[target]), {logits.id},
                                 [il = logits.id, target, lse](Graph& g, std::size_t self) {
                                     const double G = g.grad(self)[0];
                                     const Tensor& L = g.value(il);
                                     Tensor* gl = g.grad_sink(il);
                                     for (std::size_t i = 0; i < L.size(); ++i) {
                                         const double p = std::exp(L[i] - lse);
                                         (*gl)[i] += G * (p - (i == target ? 1.0 : 0.0));
                                     }
                                 });
}

Var gather_columns(Var table, std::span<const std::size_t> ids, const Mask& mask) {
    const Tensor& W = table.value();
    if (W.rank() != 2) throw DimensionError("gather_columns: table must be a matrix, got " + W.shape_str());
    if (mask.size() != ids.size()) throw DimensionError("gather_columns: mask and id lengths differ");
    const std::size_t vocab = W.rows(), d = W.cols(), T = ids.size();
    if (T == 0) throw DimensionError("gather_columns: empty id sequence");
    for (std::size_t t = 0; t < T; ++t) {
        if (mask[t] && ids[t] >= vocab) {
            throw IndexError("gather_columns: token id " + std::to_string(ids[t]) + " at position " + std::to_string(t) +
                             " exceeds vocabulary size " + std::to_string(vocab));
        }
    }
    Tensor out({d, T});
    for (std::size_t t = 0; t < T; ++t) {
        if (!mask[t]) continue;
        for (std::size_t i = 0; i < d; ++i) out(i, t) = W(ids[t], i);
    }
    std::vector<std::size_t> rows(ids.begin(), ids.end());
    return table.graph->emplace("gather_columns", std::move(out), {table.id},
                                [it = table.id, rows = std::move(rows), mask, d](Graph& g, std::size_t self) {
                                    const Tensor& G = g.grad(self);
                                    Tensor* gw = g.grad_sink(it);
                                    const std::size_t T = rows.size();
                                    for (std::size_t t = 0; t < T; ++t) {
                                        if (!mask[t]) continue;
                                        for (std::size_t i = 0; i < d; ++i) (*gw)(rows[t], i) += G(i, t);
                                    }
                                });
}

Var shift_columns(Var x, std::size_t offset) {
    const Tensor& X = x.value();
    if (X.rank() != 2) throw DimensionError("shift_columns: expected a matrix, got " + X.shape_str());
    if (offset == 0) return x;
    const std::size_t m = X.rows(), n = X.cols();
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t t = 0; t + offset < n; ++t) out(i, t) = X(i, t + offset);
    return x.graph->emplace("shift_columns", std::move(out), {x.id}, [ix = x.id, offset, m, n](Graph& g, std::size_t self) {
        const Tensor& G = g.grad(self);
        Tensor* gx = g.grad_sink(ix);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t t = 0; t + offset < n; ++t) (*gx)(i, t + offset) += G(i, t);
    });
}

Var mask_columns(Var x, const Mask& mask) {
    const Tensor& X = x.value();
    if (X.rank() != 2 || X.cols() != mask.size()) {
        throw DimensionError("mask_columns: mask length " + std::to_string(mask.size()) + " does not fit " + X.shape_str());
    }
    if (std::all_of(mask.begin(), mask.end(), [](bool b) { return b; })) return x;
    const std::size_t m = X.rows(), n = X.cols();
    Tensor out = X;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t t = 0; t < n; ++t)
            if (!mask[t]) out(i, t) = 0.0;
    return x.graph->emplace("mask_columns", std::move(out), {x.id}, [ix = x.id, mask, m, n](Graph& g, std::size_t self) {
        const Tensor& G = g.grad(self);
        Tensor* gx = g.grad_sink(ix);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t t = 0; t < n; ++t)
                if (mask[t]) (*gx)(i, t) += G(i, t);
    });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("concat_rows: nothing to concatenate");
    Graph* graph = parts.front().graph;
    const Tensor& first = parts.front().value();
    const bool vectors = first.rank() == 1;
    const std::size_t n = first.cols();
    std::size_t total = 0;
    std::vector<std::size_t> ids;
    for (const Var& p : parts) {
        same_graph(parts.front(), p, "concat_rows");
        const Tensor& t = p.value();
        if (t.rank() != first.rank() || t.rank() == 0 || t.cols() != n) {
            throw DimensionError("concat_rows: cannot stack " + t.shape_str() + " with " + first.shape_str());
        }
        total += t.rows();
        ids.push_back(p.id);
    }
    Tensor out(vectors ? Shape{total} : Shape{total, n});
    std::size_t offset = 0;
    for (const Var& p : parts) {
        const Tensor& t = p.value();
        std::copy(t.data().begin(), t.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset * n));
        offset += t.rows();
    }
    return graph->emplace("concat_rows", std::move(out), ids, [ids](Graph& g, std::size_t self) {
        const Tensor& G = g.grad(self);
        std::size_t offset = 0;
        for (auto id : ids) {
            const std::size_t len = g.value(id).size();
            if (Tensor* s = g.grad_sink(id))
                for (std::size_t i = 0; i < len; ++i) (*s)[i] += G[offset + i];
            offset += len;
        }
    });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
    const Tensor& X = x.value();
    if (X.rank() == 0 || count == 0 || begin + count > X.rows()) {
        throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                             ") out of range for " + X.shape_str());
    }
    const std::size_t n = X.cols();
    Tensor out(X.rank() == 1 ? Shape{count} : Shape{count, n});
    std::copy_n(X.data().begin() + static_cast<std::ptrdiff_t>(begin * n), count * n, out.data().begin());
    return x.graph->emplace("slice_rows", std::move(out), {x.id}, [ix = x.id, off = begin * n](Graph& g, std::size_t self) {
        const Tensor& G = g.grad(self);
        Tensor* gx = g.grad_sink(ix);
        for (std::size_t i = 0; i < G.size(); ++i) (*gx)[off + i] += G[i];
    });
}

Var column(Var x, std::size_t index) {
    const Tensor& X = x.value();
    if (X.rank() != 2 || index >= X.cols()) {
        throw DimensionError("column: index " + std::to_string(index) + " out of range for " + X.shape_str());
    }
    const std::size_t m = X.rows(), n = X.cols();
    Tensor out({m});
    for (std::size_t i = 0; i < m; ++i) out[i] = X(i, index);
    return x.graph->emplace("column", std::move(out), {x.id}, [ix = x.id, index, m, n](Graph& g, std::size_t self) {
        const Tensor& G = g.grad(self);
        Tensor* gx = g.grad_sink(ix);
        for (std::size_t i = 0; i < m; ++i) (*gx)[i * n + index] += G[i];
    });
}

Var stack_columns(std::span<const Var> columns) {
    if (columns.empty()) throw DimensionError("stack_columns: no columns");
    const std::size_t m = columns.front().value().size();
    const std::size_t n = columns.size();
    std::vector<std::size_t> ids;
    Tensor out({m, n});
    for (std::size_t t = 0; t < n; ++t) {
        same_graph(columns.front(), columns[t], "stack_columns");
        const Tensor& c = columns[t].value();
        if (c.rank() != 1 || c.size() != m) {
            throw DimensionError("stack_columns: column " + c.shape_str() + " does not match length " + std::to_string(m));
        }
        for (std::size_t i = 0; i < m; ++i) out(i, t) = c[i];
        ids.push_back(columns[t].id);
    }
    return columns.front().graph->emplace("stack_columns", std::move(out), ids, [ids, m, n](Graph& g, std::size_t self) {
        const Tensor& G = g.grad(self);
        for (std::size_t t = 0; t < n; ++t) {
            if (Tensor* s = g.grad_sink(ids[t]))
                for (std::size_t i = 0; i < m; ++i) (*s)[i] += G(i, t);
        }
    });
}

}  // namespace ad

}  // namespace hcan
