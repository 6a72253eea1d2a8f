#include "hcan/params.hpp"

#include "hcan/errors.hpp"

namespace hcan {

void ParamStore::add(std::string name, Tensor value) {
    if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), std::move(value)});
}

std::size_t ParamStore::index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw IndexError("unknown parameter '" + name + "'");
    return it->second;
}

std::size_t ParamStore::total_coordinates() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
}

ParamStore ParamStore::zeros_like() const {
    ParamStore out;
    for (const auto& e : entries_) out.add(e.name, Tensor(e.value.shape()));
    return out;
}

bool ParamStore::operator==(const ParamStore& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name != other.entries_[i].name || !(entries_[i].value == other.entries_[i].value)) return false;
    }
    return true;
}

Gradients zero_gradients(const ParamStore& params) {
    Gradients g;
    g.reserve(params.size());
    for (const auto& e : params) g.emplace_back(e.value.shape());
    return g;
}

void accumulate(Gradients& into, const Gradients& from) {
    if (into.size() != from.size()) throw DimensionError("gradient sets differ in tensor count");
    for (std::size_t i = 0; i < into.size(); ++i) {
        if (into[i].shape() != from[i].shape()) {
            throw DimensionError("gradient shape mismatch " + into[i].shape_str() + " vs " + from[i].shape_str());
        }
        for (std::size_t j = 0; j < into[i].size(); ++j) into[i][j] += from[i][j];
    }
}

ParamVars::ParamVars(Graph& graph, const ParamStore& params) : params_(&params) {
    vars_.reserve(params.size());
    for (const auto& e : params) vars_.push_back(graph.parameter(e.value));
}

Gradients ParamVars::gradients() const {
    Gradients out;
    out.reserve(vars_.size());
    for (const Var& v : vars_) out.push_back(v.grad());
    return out;
}

}  // namespace hcan
