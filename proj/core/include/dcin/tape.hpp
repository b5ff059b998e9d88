#pragma once

#include <functional>
#include <vector>

#include "dcin/tensor.hpp"

namespace dcin {

using NodeId = int;

// Reverse-mode tape over matrix-valued nodes. One tape holds one forward
// graph (typically one training batch); backward() replays the recorded ops
// in reverse and flushes leaf gradients into the gradient tensors the leaves
// were registered with.
class GradTape {
public:
    // Registers a trainable leaf. `grad_sink` receives the accumulated
    // gradient when backward() finishes; it must outlive the tape.
    NodeId leaf(const Tensor& value, Tensor* grad_sink);
    // A value that does not require gradients.
    NodeId constant(Tensor value);

    NodeId gather_rows(NodeId table, std::vector<std::size_t> indices);
    NodeId matmul(NodeId a, NodeId b);
    NodeId add_row_bias(NodeId x, NodeId b);
    NodeId relu(NodeId x);
    NodeId sigmoid(NodeId x);
    NodeId concat_cols(const std::vector<NodeId>& parts);
    // Shape-header change over the same contiguous data.
    NodeId reshape(NodeId x, std::vector<std::size_t> shape);
    NodeId elem_add(NodeId a, NodeId b);
    NodeId elem_sub(NodeId a, NodeId b);
    NodeId elem_mul(NodeId a, NodeId b);
    NodeId group_dot(NodeId q, NodeId k, std::size_t m);
    NodeId rowwise_softmax(NodeId scores);
    NodeId group_weighted_sum(NodeId w, NodeId v);
    // Mean binary NLL over a column of probabilities, log arguments clamped
    // at 1e-12. Returns a scalar node.
    NodeId nll_mean(NodeId probs, std::vector<double> labels);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    const Tensor& grad(NodeId id) const { return nodes_[id].grad; }

    // Seeds d(loss)/d(loss) = 1, replays the tape in reverse, then adds each
    // leaf's gradient into its registered sink.
    void backward(NodeId loss);

    std::size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(GradTape&)> back;  // null for leaves/constants
        Tensor* sink = nullptr;
        bool needs_grad = false;
    };

    NodeId push(Tensor value, bool needs_grad, std::function<void(GradTape&)> back);
    Tensor& grad_mut(NodeId id) { return nodes_[id].grad; }
    bool needs_grad(NodeId id) const { return nodes_[id].needs_grad; }

    std::vector<Node> nodes_;
};

}  // namespace dcin
