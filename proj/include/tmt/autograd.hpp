#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tmt/tensor.hpp"

namespace tmt {

// Define-by-run reverse-mode differentiation. Every kernel computes its
// value eagerly and, when gradients are wanted, records a closure that
// scatters the output adjoint into its parents. Graphs are one-shot:
// parameters live on a ParamTape and keep their gradient buffers across
// passes (accumulation until zero_grad), intermediates are freed with the
// loss Var.

struct Node {
    Tensor value;
    Tensor grad; // allocated lazily, same shape as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backward_fn; // reads this->grad, accumulates into parents

    Tensor& ensure_grad() {
        if (grad.numel() != value.numel()) grad = Tensor::zeros(value.shape());
        return grad;
    }
};

using NodePtr = std::shared_ptr<Node>;

class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(node_); }
    const Tensor& value() const { return node_->value; }
    Tensor& grad() { return node_->ensure_grad(); }
    const Tensor& grad() const { return const_cast<Node*>(node_.get())->ensure_grad(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    const std::vector<std::size_t>& shape() const { return node_->value.shape(); }
    std::size_t numel() const { return node_->value.numel(); }

    NodePtr node_;
};

// Scoped suppressor: ops built inside record no graph (forward values only).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_enabled();

// Ordered, uniquely named parameter set. parameters[i] and gradients[i]
// share a node, so shapes agree by construction.
class ParamTape {
public:
    Var add(const std::string& name, Tensor init);
    Var get(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t size() const { return entries_.size(); }
    const std::string& name(std::size_t i) const { return entries_[i].first; }
    const Var& param(std::size_t i) const { return entries_[i].second; }
    const std::vector<std::pair<std::string, Var>>& entries() const { return entries_; }

    void zero_grad();

private:
    std::vector<std::pair<std::string, Var>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Reverse pass from a scalar loss. Gradients of tape parameters accumulate;
// intermediate adjoints are reset per call so repeated backward on the same
// loss adds exactly one more contribution. Disconnected parameters keep a
// zero gradient.
void backward(const Var& loss);

} // namespace tmt
