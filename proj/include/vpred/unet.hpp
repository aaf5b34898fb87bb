#pragma once

#include <string>
#include <vector>

#include "vpred/autograd.hpp"
#include "vpred/tensor.hpp"

namespace vpred {

// Three-scale bias-free U-net. Channels double per scale; each scale runs two
// [conv 3x3 -> bf_norm -> relu] blocks; the decoder mirrors the encoder with
// nearest-neighbor upsampling, channel halving and skip concatenation; a
// final 3x3 conv maps to one channel with no output nonlinearity.
struct ModelArch {
    int tau = 2;             // conditioning frames
    int scales = 3;
    int base_channels = 64;  // 64, 128, 256 across scales at the default
    // Prediction-only baseline: drop the noisy-observation channel and map
    // the conditioning stack straight to the next frame.
    bool prediction_only = false;

    int in_channels() const { return prediction_only ? tau : tau + 1; }
    void validate() const;
    bool operator==(const ModelArch&) const = default;
};

enum class Mode { training, inference };

class DenoiserModel {
  public:
    DenoiserModel(ModelArch arch, uint64_t seed);

    const ModelArch& arch() const { return arch_; }
    Mode mode() const { return mode_; }
    void set_mode(Mode m) { mode_ = m; }

    // Input layout: channel 0 is the noisy observation y, channels 1..tau are
    // the conditioning frames most-recent-first. Output: [N,1,H,W] estimate
    // of the clean next frame (not a residual). H and W must be divisible
    // by 4 (three scales need two clean halvings).
    Tensor forward(const Tensor& input);
    Var forward_var(const Var& input);

    // f(y,c) = x_hat(y,c) - y. Inference mode only; y is [1,1,H,W], cond is
    // [1,tau,H,W] (ignored for tau = 0). Not available on prediction-only
    // models, which expose predict() instead.
    Tensor residual(const Tensor& y, const Tensor& cond);
    Tensor denoise(const Tensor& y, const Tensor& cond);
    Tensor predict(const Tensor& cond);

    // Trainable parameters (conv kernels and bf_norm gains), in checkpoint order.
    std::vector<std::pair<std::string, Var>>& params() { return params_; }
    const std::vector<std::pair<std::string, Var>>& params() const { return params_; }
    // Non-trained buffers (bf_norm running stds).
    std::vector<std::pair<std::string, Tensor>>& buffers() { return buffers_; }
    const std::vector<std::pair<std::string, Tensor>>& buffers() const { return buffers_; }

    void zero_grads();
    int clamp_warnings() const { return clamp_warnings_; }

    // Assembles the network input from a noisy frame and conditioning stack.
    static Tensor stack_input(const Tensor& y, const Tensor& cond, int tau);

  private:
    template <class Ops>
    typename Ops::V run(Ops, typename Ops::V input);

    ModelArch arch_;
    Mode mode_ = Mode::training;
    std::vector<std::pair<std::string, Var>> params_;
    std::vector<std::pair<std::string, Tensor>> buffers_;
    int clamp_warnings_ = 0;

    // slot indices resolved at construction
    struct BlockRef {
        int conv = -1;
        int gain = -1;
        int running = -1;
    };
    std::vector<BlockRef> blocks_;  // enc0.b0, enc0.b1, enc1.b0, enc1.b1, mid.b0, mid.b1,
                                    // dec1.b0, dec1.b1, dec0.b0, dec0.b1
    int final_conv_ = -1;
};

// Checkpoint format "BFUN": magic, u32 version, u32 JSON header length, JSON
// arch header, then records [u16 name-len, name, u8 ndim, u32 dims..., f32
// data LE]. Round trips are bit-exact.
void save_model(const DenoiserModel& model, const std::string& path);
DenoiserModel load_model(const std::string& path, const ModelArch* expected = nullptr);

}  // namespace vpred
