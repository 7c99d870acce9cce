#include "asvlab/neural/graph.hpp"

#include "asvlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace asvlab::nn {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ')';
    return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != shape_size(shape)) {
        throw ShapeError("tensor of shape " + shape_string(shape) + " given " + std::to_string(data.size()) +
                         " values");
    }
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double x) { return std::isfinite(x); });
}

ParamStore::ParamStore(const ParamStore& other) : adam_steps(other.adam_steps) {
    for (const auto& p : other.params_) {
        index_[p->name] = params_.size();
        params_.push_back(std::make_unique<Parameter>(*p));
    }
}

ParamStore& ParamStore::operator=(const ParamStore& other) {
    if (this != &other) {
        ParamStore copy(other);
        *this = std::move(copy);
    }
    return *this;
}

Parameter& ParamStore::add(const std::string& name, Shape shape) {
    if (index_.count(name)) {
        throw UsageError("parameter '" + name + "' already exists");
    }
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->value = Tensor(shape);
    p->grad = Tensor(shape);
    p->adam_m = Tensor(shape);
    p->adam_v = Tensor(shape);
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
}

Parameter& ParamStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw UsageError("unknown parameter '" + name + "'");
    }
    return *params_[it->second];
}

const Parameter& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw UsageError("unknown parameter '" + name + "'");
    }
    return *params_[it->second];
}

std::vector<Parameter*> ParamStore::all() {
    std::vector<Parameter*> out;
    for (auto& p : params_) {
        out.push_back(p.get());
    }
    return out;
}

std::vector<const Parameter*> ParamStore::all() const {
    std::vector<const Parameter*> out;
    for (const auto& p : params_) {
        out.push_back(p.get());
    }
    return out;
}

std::vector<Parameter*> ParamStore::with_prefix(const std::string& prefix) {
    std::vector<Parameter*> out;
    for (auto& p : params_) {
        if (p->name.rfind(prefix, 0) == 0) {
            out.push_back(p.get());
        }
    }
    return out;
}

void ParamStore::set_trainable(const std::string& prefix, bool trainable) {
    for (auto* p : with_prefix(prefix)) {
        p->trainable = trainable;
    }
}

void ParamStore::zero_grad() {
    for (auto& p : params_) {
        p->zero_grad();
    }
}

std::size_t ParamStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += p->value.size();
    }
    return n;
}

const Graph::Node& Graph::node(Var v) const {
    if (v.id >= nodes_.size()) {
        throw UsageError("variable does not belong to this graph");
    }
    return nodes_[v.id];
}

Graph::Node& Graph::node(Var v) {
    if (v.id >= nodes_.size()) {
        throw UsageError("variable does not belong to this graph");
    }
    return nodes_[v.id];
}

Var Graph::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {nodes_.size() - 1};
}

Var Graph::input(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return {nodes_.size() - 1};
}

Var Graph::param(Parameter& p) {
    Node n;
    n.value = p.value;
    n.requires_grad = p.trainable;
    n.param = p.trainable ? &p : nullptr;
    nodes_.push_back(std::move(n));
    return {nodes_.size() - 1};
}

Var Graph::record(Tensor value, const std::vector<Var>& parents, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = std::any_of(parents.begin(), parents.end(),
                                  [this](Var p) { return node(p).requires_grad; });
    if (n.requires_grad) {
        n.backward = std::move(backward);
    }
    nodes_.push_back(std::move(n));
    return {nodes_.size() - 1};
}

const Tensor& Graph::value(Var v) const { return node(v).value; }

const Tensor& Graph::grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.size() != n.value.size()) {
        // Nothing flowed here; expose zeros of the right shape.
        n.grad = Tensor(n.value.shape);
    }
    return n.grad;
}

bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor& Graph::grad_buffer(Var v) {
    Node& n = node(v);
    if (n.grad.size() != n.value.size()) {
        n.grad = Tensor(n.value.shape);
    }
    return n.grad;
}

void Graph::backward(Var loss) {
    if (nodes_.empty()) {
        throw UsageError("backward called before any forward op was recorded");
    }
    if (backward_done_) {
        throw UsageError("backward already ran on this graph");
    }
    Node& root = node(loss);
    if (root.value.size() != 1) {
        throw UsageError("backward needs a scalar loss, got shape " + shape_string(root.value.shape));
    }
    backward_done_ = true;
    if (!root.requires_grad) {
        return;
    }
    grad_buffer(loss)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || n.grad.size() == 0) {
            continue;
        }
        if (n.backward) {
            n.backward(*this, Var{i});
        }
        if (n.param != nullptr) {
            auto& pg = n.param->grad.data;
            for (std::size_t k = 0; k < pg.size(); ++k) {
                pg[k] += n.grad.data[k];
            }
        }
    }
}

}  // namespace asvlab::nn
