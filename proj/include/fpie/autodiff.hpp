#pragma once

#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpie/tensor.hpp"

namespace fpie {

class Tape;

/// One record on the tape: a value, its (lazily allocated) gradient, and the
/// recipe that pushes the output gradient back to the parents.
struct Node {
    Tensor value;
    Tensor grad; // same shape as value once materialized
    std::vector<Node*> parents;
    std::function<void(Node&)> backward_fn;
    bool requires_grad = false;
    bool leaf = false;
    size_t index = 0;

    Tensor& ensure_grad() {
        if (grad.empty()) grad = Tensor::zeros(value.shape());
        return grad;
    }

    /// Adds g into this node's gradient buffer.
    void accumulate(const Tensor& g) {
        Tensor& dst = ensure_grad();
        const float* ps = g.data();
        float* pd = dst.data();
        const size_t m = dst.size();
        for (size_t i = 0; i < m; ++i) pd[i] += ps[i];
    }
};

/// Trainable (or frozen) named tensor with persistent gradient storage.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Tensor v, bool train = true)
        : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape())), trainable(train) {}
};

inline void zero_grads(std::vector<Parameter*>& params) {
    for (Parameter* p : params) p->grad.fill(0.0f);
}

/// Dynamic define-by-run tape. Nodes are owned by the tape and live until it
/// is destroyed; parents always precede children in creation order.
///
/// Gradient contract: backward() refreshes interior gradients each call but
/// only ever adds into leaf gradients, so leaves (parameters, checked inputs)
/// accumulate across calls until zeroed by the caller.
class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }

    Node* leaf(Tensor value, bool requires_grad = false) {
        Node& n = push();
        n.value = std::move(value);
        n.requires_grad = requires_grad && recording_;
        n.leaf = true;
        return &n;
    }

    /// Leaf whose gradient buffer aliases the parameter's persistent storage.
    Node* param(Parameter& p) {
        Node& n = push();
        n.value = p.value;
        n.grad = p.grad; // shared buffer: accumulation lands in the parameter
        n.requires_grad = recording_;
        n.leaf = true;
        return &n;
    }

    Node* make(Tensor value, std::vector<Node*> parents, std::function<void(Node&)> backward_fn) {
        Node& n = push();
        n.value = std::move(value);
        if (recording_) {
            for (Node* p : parents) {
                if (p->requires_grad) {
                    n.requires_grad = true;
                    break;
                }
            }
            if (n.requires_grad) {
                n.parents = std::move(parents);
                n.backward_fn = std::move(backward_fn);
            }
        }
        return &n;
    }

    /// Reverse-mode sweep from a scalar root. Every parameter reachable from
    /// the root receives its chain-rule gradient; unreachable ones are left
    /// untouched (all-zero if freshly zeroed).
    void backward(Node* root) {
        if (root->value.shape().numel() != 1) {
            throw std::invalid_argument("backward: root must be a scalar (1,1,1,1), got " +
                                        root->value.shape().str());
        }
        if (!recording_) {
            throw std::logic_error("backward: tape is not recording");
        }
        // Reachability over the parent DAG.
        std::vector<char> reachable(nodes_.size(), 0);
        std::vector<Node*> stack{root};
        reachable[root->index] = 1;
        while (!stack.empty()) {
            Node* n = stack.back();
            stack.pop_back();
            for (Node* p : n->parents) {
                if (!reachable[p->index]) {
                    reachable[p->index] = 1;
                    stack.push_back(p);
                }
            }
        }
        // Interior gradients are per-sweep scratch; leaf gradients persist.
        for (size_t i = 0; i < nodes_.size(); ++i) {
            if (reachable[i] && !nodes_[i].leaf && !nodes_[i].grad.empty()) {
                nodes_[i].grad.fill(0.0f);
            }
        }
        {
            Tensor seed = Tensor::full(root->value.shape(), 1.0f);
            root->accumulate(seed);
        }
        for (size_t i = nodes_.size(); i-- > 0;) {
            Node& n = nodes_[i];
            if (!reachable[i] || !n.requires_grad || !n.backward_fn) continue;
            if (n.grad.empty()) continue; // no gradient ever flowed here
            n.backward_fn(n);
        }
    }

    size_t size() const { return nodes_.size(); }

private:
    Node& push() {
        Node& n = nodes_.emplace_back();
        n.index = nodes_.size() - 1;
        return n;
    }

    std::deque<Node> nodes_;
    bool recording_;
};

} // namespace fpie
