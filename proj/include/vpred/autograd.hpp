#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "vpred/tensor.hpp"
#include "vpred/tensor_ops.hpp"

namespace vpred {

// Reverse-mode tape. A Var is a shared node in an acyclic graph; backward()
// walks the graph once in reverse topological order. Graphs are built per
// forward pass; parameter leaves persist across passes (Adam updates their
// value in place, zero_grad() clears accumulated gradients).
struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily, same shape as value
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backfn;

    Tensor& ensure_grad() {
        if (grad.numel() == 0) {
            grad = Tensor(value.shape());
        }
        return grad;
    }
    void zero_grad() {
        if (grad.numel() != 0) {
            grad.fill(0.0f);
        }
    }
};

using Var = std::shared_ptr<Node>;

Var leaf(Tensor value, bool requires_grad = false);

Var conv2d(const Var& input, const Var& kernel);
Var relu(const Var& input);
Var downsample2x(const Var& input);
Var upsample2x(const Var& input);
Var concat_channels(const Var& a, const Var& b);

// Bias-free normalization. In training mode the divisor is the batch channel
// std; in inference mode it is `running_std` (a constant, so the op is a
// fixed diagonal scaling). clamp_count, when given, accumulates the number of
// channels whose divisor hit the 1e-5 floor.
Var bf_norm(const Var& input, const Var& gain, const Tensor& running_std, bool training,
            std::vector<double>* batch_std_out = nullptr, int* clamp_count = nullptr);

Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, float factor);
Var sum(const Var& a);                              // -> scalar
Var mse_loss(const Var& pred, const Tensor& target);  // -> scalar, mean over all elements
Var select_pixel(const Var& input, int n, int c, int i, int j);  // -> scalar

// Backpropagate from a scalar root; errors on non-scalar.
void backward(const Var& root);

}  // namespace vpred
