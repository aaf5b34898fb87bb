#pragma once

#include <optional>
#include <vector>

#include "vpred/leaves.hpp"
#include "vpred/unet.hpp"

namespace vpred {

// Iterative partial denoising: coarse-to-fine score ascent driven by the
// denoiser residual, with noise injection controlled by beta.
struct SamplerConfig {
    double beta = 0.5;      // injected-noise fraction; 1 = deterministic
    double sigma0 = 0.01;   // stop threshold on the effective noise level
    double alpha_init = 0.1;
    double alpha_ratio = 1.05;  // geometric step-size schedule, capped at 1
    int max_iters = 500;
    int fixed_steps = 0;    // >0: run exactly this many steps, ignore sigma0
    int snapshot_every = 0; // >0: record intermediate frames
    uint64_t seed = 0;

    void validate() const;
    double alpha_at(int k) const;  // k is 1-based
};

struct SampleResult {
    Tensor frame;               // [1,1,H,W]
    bool converged = false;
    int iterations = 0;
    std::vector<double> sigma_trace;  // effective noise level per iteration
    std::vector<Tensor> snapshots;
};

// gamma_k^2 = ((1 - beta alpha_k)^2 - (1 - alpha_k)^2) sigma_k^2
double gamma_for_step(double alpha, double beta, double sigma);

// Draw one probable next frame given tau conditioning frames. y0 defaults to
// N(0.5, 1) noise; pass an explicit start to override.
SampleResult sample_next_frame(DenoiserModel& model, const Tensor& cond, const SamplerConfig& cfg, Rng& rng,
                               const Tensor* y0 = nullptr);

enum class RolloutMode { sample, one_step };

// Recursive generation: predict a frame, shift the conditioning window,
// repeat. Seed frames must contain at least tau frames.
ImageSequence rollout(DenoiserModel& model, const ImageSequence& seed_frames, int n_steps, RolloutMode mode,
                      const SamplerConfig& cfg, Rng& rng);

enum class OcclusionOutcome { left_occludes, right_occludes, undecided };

// Classify a generated next frame against the probe's overlap region by
// comparing its mean luminance with the two disks' known luminances
// (tolerance 0.1; within it for both, or for neither, is undecided).
OcclusionOutcome occlusion_outcome(const Tensor& frame, const ProbeSpec& spec);

const char* to_string(OcclusionOutcome o);

}  // namespace vpred
