#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "hcan/autodiff.hpp"
#include "hcan/tensor.hpp"

namespace hcan {

struct NamedTensor {
    std::string name;
    Tensor value;
};

/// Ordered collection of learnable tensors addressed by stable names.
class ParamStore {
public:
    void add(std::string name, Tensor value);
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    std::size_t index_of(const std::string& name) const;

    Tensor& at(const std::string& name) { return entries_[index_of(name)].value; }
    const Tensor& at(const std::string& name) const { return entries_[index_of(name)].value; }
    NamedTensor& operator[](std::size_t i) { return entries_[i]; }
    const NamedTensor& operator[](std::size_t i) const { return entries_[i]; }

    std::size_t size() const { return entries_.size(); }
    std::size_t total_coordinates() const;
    std::vector<std::string> names() const;

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    // Same names and shapes, all values zero.
    ParamStore zeros_like() const;

    bool operator==(const ParamStore& other) const;

private:
    std::vector<NamedTensor> entries_;
    std::map<std::string, std::size_t> index_;
};

/// Gradient buffers aligned index-for-index with a ParamStore.
using Gradients = std::vector<Tensor>;

Gradients zero_gradients(const ParamStore& params);
void accumulate(Gradients& into, const Gradients& from);

/// Graph leaves for every tensor of a ParamStore.
class ParamVars {
public:
    ParamVars(Graph& graph, const ParamStore& params);

    Var operator()(const std::string& name) const { return vars_.at(params_->index_of(name)); }
    bool contains(const std::string& name) const { return params_->contains(name); }
    const ParamStore& store() const { return *params_; }

    // Reads the gradient of every parameter after graph.backward().
    Gradients gradients() const;

private:
    const ParamStore* params_;
    std::vector<Var> vars_;
};

}  // namespace hcan
