#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vpred/unet.hpp"
#include "vpred/vseq.hpp"

namespace vpred {

struct TrainConfig {
    int epochs = 150;  // desk-scale default; the full-scale protocol uses 1000
    int batch_size = 4;
    float lr = 3e-4f;
    int lr_patience = 10;              // evaluations without improvement before halving
    double lr_min_improvement = 1e-3;  // 0.1% relative
    uint64_t seed = 0;
    int eval_examples = 64;  // held-out examples per evaluation
    std::string nan_checkpoint_path;  // diagnostic dump target on NaN loss

    void validate() const;
};

struct EpochStats {
    int epoch = 0;
    double train_mse = 0.0;
    double test_mse = 0.0;
    float lr = 0.0f;
    int lr_halvings = 0;
};

struct TrainResult {
    std::vector<EpochStats> curves;
};

// Noise-level law: sqrt(sigma) ~ U(0,1), i.e. sigma = u^2 (median 0.25).
double sample_noise_sigma(Rng& rng);

// One (sequence, target-frame) example assembled into network input/target.
// Prediction-only architectures get the conditioning stack alone (sigma is
// ignored); everything else gets [noisy target, conditioning most-recent-
// first].
struct TrainExample {
    Tensor input;   // [1, arch.in_channels(), H, W]
    Tensor target;  // [1, 1, H, W]
    double sigma = 0.0;
};
TrainExample make_example(const ImageSequence& seq, int target_frame, const ModelArch& arch, double sigma,
                          Rng& noise_rng);

// Blind-denoiser training per the protocol: random target frame per example,
// sigma = u^2 noise, MSE objective, Adam, lr halved on test-loss plateau.
// Throws on NaN loss after writing the diagnostic checkpoint.
TrainResult train_model(DenoiserModel& model, const SequenceDataset& ds, const TrainConfig& cfg,
                        const std::function<void(const EpochStats&)>& on_epoch = {});

// Mean inference-mode denoising MSE over held-out examples at a fixed sigma
// (or per-example sigmas when sigma < 0).
double evaluate_model(DenoiserModel& model, const SequenceDataset& ds, const std::vector<int>& indices,
                      int max_examples, double sigma, uint64_t seed);

}  // namespace vpred
