#pragma once

#include <vector>

#include "vpred/tensor.hpp"

namespace vpred {

// Adam with bias correction; defaults match the usual beta1=0.9, beta2=0.999,
// eps=1e-8.
struct AdamState {
    std::vector<Tensor> m;  // first moments, one per parameter
    std::vector<Tensor> v;  // second moments
    int64_t step = 0;
    float lr = 3e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;

    static AdamState init(const std::vector<Tensor*>& params, float lr);
};

// One update over a matched list of parameters and gradients. Shapes must
// agree with the state's moment tensors.
void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads, AdamState& state);

}  // namespace vpred
