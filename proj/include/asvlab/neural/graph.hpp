// Tape-based reverse-mode differentiation.
//
// A Graph records every op applied during one forward pass. backward()
// walks the tape in reverse, accumulating gradients into the nodes and
// finally into the Parameters the graph was built from. A graph is used for
// one forward/backward pass and then discarded.
#pragma once

#include "asvlab/neural/tensor.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace asvlab::nn {

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;
    bool trainable = true;

    void zero_grad() { grad.fill(0.0); }
};

/// Owns named parameters. Iteration order is insertion order, which keeps
/// optimizer updates and checkpoint layouts deterministic.
class ParamStore {
public:
    ParamStore() = default;
    ParamStore(const ParamStore& other);
    ParamStore& operator=(const ParamStore& other);
    ParamStore(ParamStore&&) noexcept = default;
    ParamStore& operator=(ParamStore&&) noexcept = default;

    Parameter& add(const std::string& name, Shape shape);
    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t size() const { return params_.size(); }
    std::vector<Parameter*> all();
    std::vector<const Parameter*> all() const;

    /// Parameters whose name starts with `prefix`.
    std::vector<Parameter*> with_prefix(const std::string& prefix);
    void set_trainable(const std::string& prefix, bool trainable);

    void zero_grad();
    std::size_t parameter_count() const;

    std::int64_t adam_steps = 0;

private:
    std::deque<std::unique_ptr<Parameter>> params_;
    std::map<std::string, std::size_t> index_;
};

struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
};

class Graph {
public:
    using BackwardFn = std::function<void(Graph&, Var self)>;

    /// Leaf holding data that never needs a gradient.
    Var constant(Tensor value);
    /// Leaf whose gradient is kept after backward (used by gradient checks).
    Var input(Tensor value, bool requires_grad = true);
    /// Leaf bound to a parameter; its gradient is added to param.grad when
    /// the parameter is trainable.
    Var param(Parameter& p);

    /// Registers an op result. `backward` reads grad(result) and adds into the
    /// parents' gradients through add_grad().
    Var record(Tensor value, const std::vector<Var>& parents, BackwardFn backward);

    const Tensor& value(Var v) const;
    /// Gradient after backward(); zeros if nothing flowed into the node.
    const Tensor& grad(Var v) const;
    bool requires_grad(Var v) const;

    /// Accumulate into a node's gradient buffer (allocated on first use).
    Tensor& grad_buffer(Var v);

    /// Seeds d loss / d loss = 1 for a single-element node and runs the tape.
    /// Throws UsageError if the node is not a scalar or backward already ran.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        mutable Tensor grad;
        bool requires_grad = false;
        BackwardFn backward;
        Parameter* param = nullptr;
    };
    const Node& node(Var v) const;
    Node& node(Var v);

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

}  // namespace asvlab::nn
