#include "tmt/autograd.hpp"

#include <unordered_set>

#include "tmt/errors.hpp"

namespace tmt {

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad && g_grad_enabled;
}

Var ParamTape::add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
    Var v(std::move(init), /*requires_grad=*/true);
    v.node_->requires_grad = true; // parameters carry grads even inside NoGrad scopes
    v.node_->ensure_grad();
    index_[name] = entries_.size();
    entries_.emplace_back(name, v);
    return v;
}

Var ParamTape::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter name: " + name);
    return entries_[it->second].second;
}

void ParamTape::zero_grad() {
    for (auto& [name, var] : entries_) {
        Tensor& g = var.node_->ensure_grad();
        for (double& x : g.vec()) x = 0.0;
    }
}

void backward(const Var& loss) {
    if (!loss.defined()) throw ContractError("backward: undefined loss");
    if (!loss.value().is_scalar()) {
        throw ContractError("backward: loss must be scalar, got shape " +
                            loss.value().shape_string());
    }

    // iterative post-order DFS over parents
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.node_.get(), 0);
    visited.insert(loss.node_.get());
    while (!stack.empty()) {
        auto& [node, child] = stack.back();
        if (child < node->parents.size()) {
            Node* p = node->parents[child].get();
            ++child;
            if (visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // reset interior adjoints; leaves (parameters) keep theirs and accumulate
    for (Node* n : order) {
        if (!n->parents.empty()) {
            Tensor& g = n->ensure_grad();
            for (double& x : g.vec()) x = 0.0;
        }
    }

    loss.node_->ensure_grad()[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn();
    }
}

} // namespace tmt
