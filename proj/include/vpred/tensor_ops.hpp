#pragma once

#include "vpred/tensor.hpp"

namespace vpred {

// Raw kernels shared by the autograd layer and the inference-only paths.
// Shapes follow NCHW; conv kernels are [Cout,Cin,3,3] with zero padding 1 and
// no bias term anywhere.

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel);
Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& kernel, const std::vector<int>& input_shape);
Tensor conv2d_backward_kernel(const Tensor& grad_out, const Tensor& input, const std::vector<int>& kernel_shape);

Tensor downsample2x_forward(const Tensor& input);
Tensor downsample2x_backward(const Tensor& grad_out, const std::vector<int>& input_shape);

Tensor upsample2x_forward(const Tensor& input);
Tensor upsample2x_backward(const Tensor& grad_out, const std::vector<int>& input_shape);

Tensor relu_forward(const Tensor& input);
// grad_in = grad_out where input > 0 else 0
Tensor relu_backward(const Tensor& grad_out, const Tensor& input);

// Channel statistics used by bf_norm: per-channel standard deviation over the
// (N,H,W) axes. Centered (the mean enters the statistic, it is never
// subtracted from the signal).
void channel_std(const Tensor& input, std::vector<double>& mean_out, std::vector<double>& std_out);

struct BfNormResult {
    Tensor output;
    std::vector<double> divisor;  // per channel, clamped
    std::vector<double> mean;     // per channel (training mode only)
    std::vector<double> std_raw;  // unclamped std (training mode only)
    int clamped_channels = 0;
};

inline constexpr double kBfNormEps = 1e-5;

// training=true: divide by batch channel std; training=false: divide by the
// provided running std. Both multiply by the per-channel gain.
BfNormResult bf_norm_forward(const Tensor& input, const Tensor& gain, const Tensor& running_std, bool training);

Tensor concat_channels_forward(const Tensor& a, const Tensor& b);

}  // namespace vpred
