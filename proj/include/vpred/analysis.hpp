#pragma once

#include <optional>
#include <vector>

#include "vpred/sampler.hpp"
#include "vpred/train.hpp"
#include "vpred/unet.hpp"

namespace vpred {

// PSNR(x, xhat) = 10 log10(range^2 / MSE); an exact match clamps at 100 dB.
double psnr(const Tensor& x, const Tensor& xhat, double i_range = 1.0);

// input PSNR targets (dB) -> noise levels, sigma = range * 10^(-p/20)
double sigma_for_input_psnr(double db, double i_range = 1.0);

struct PsnrPoint {
    double sigma = 0.0;
    double input_psnr = 0.0;
    double output_psnr = 0.0;
    int tau = 0;
    int seq_id = 0;
};

struct CurvePoint {
    double sigma = 0.0;
    double mean_input_psnr = 0.0;
    double mean_output_psnr = 0.0;
    int n = 0;
};

// Denoising performance over the held-out split at each noise level.
std::vector<PsnrPoint> performance_points(DenoiserModel& model, const SequenceDataset& ds,
                                          const std::vector<double>& sigmas, int max_examples_per_sigma,
                                          uint64_t seed);
std::vector<CurvePoint> aggregate_curve(const std::vector<PsnrPoint>& points);

// Least-squares slope of mean output vs mean input PSNR over [lo_db, hi_db].
double fitted_slope(const std::vector<CurvePoint>& curve, double lo_db, double hi_db);

// Reverse-mode Jacobian row of output pixel (i,j): one weight map per input
// frame (the noisy observation plus each conditioning frame).
Tensor adaptive_filter(DenoiserModel& model, const Tensor& input, int i, int j);

struct CueDecomposition {
    Tensor xhat;    // [1,1,H,W]
    Tensor xhat_y;  // observation-driven part, J_y . y
    Tensor xhat_c;  // conditioning-driven part, J_c . c
    double err_c = 0.0;       // ||x - xhat_c||^2
    double err_y = 0.0;       // ||x - xhat_y||^2
    double x_norm2 = 0.0;     // ||x||^2
    double cross = 0.0;       // <xhat_y, xhat_c>
    double euler_residual = 0.0;  // ||xhat_y + xhat_c - xhat|| / ||xhat||
    double epsilon_used = 0.0;
    bool flagged = false;  // Euler residual stayed above 1e-2 after retries
};

// Jacobian-vector products along y and c by directional finite differences
// (relative epsilon, retried at epsilon/10 when a relu boundary is straddled).
CueDecomposition cue_decomposition(DenoiserModel& model, const Tensor& x, const Tensor& y, const Tensor& c,
                                   double epsilon = 1e-3);

// | ||x-xh||^2 - (err_c + err_y - ||x||^2 + 2 cross) | with xh = xhat_y + xhat_c;
// zero up to rounding whenever the fields are consistent.
double error_decomposition_gap(const CueDecomposition& d, const Tensor& x);

// Input-PSNR value where the observation-driven and conditioning-driven PSNR
// curves cross, linearly interpolated; nullopt when no sign change occurs.
struct CuePoint {
    double input_psnr = 0.0;
    double psnr_full = 0.0;
    double psnr_y = 0.0;
    double psnr_c = 0.0;
};
std::optional<double> cue_crossing_psnr(const std::vector<CuePoint>& curve);

struct PsychometricData {
    std::vector<double> dr;
    std::vector<int> n_right;
    std::vector<int> n_undecided;
    std::vector<int> n_total;
};

struct PsychometricFit {
    double mu = 0.0;     // bias: dr at 50% right-occlusion
    double scale = 1.0;  // sensitivity scale of the logistic
    double loglik = 0.0;
    bool flagged_undecided = false;  // >20% undecided at some dr
};

// Right-occlusion frequency per radius difference, over sampler draws.
PsychometricData run_psychometric(DenoiserModel& model, const std::vector<double>& dr_grid, int n_samples,
                                  const ProbeConfig& pcfg, const SamplerConfig& scfg, uint64_t seed);

// Two-parameter logistic MLE by grid search plus local refinement.
PsychometricFit fit_logistic(const PsychometricData& data);

double logistic(double dr, double mu, double scale);

// Mean gradient magnitude over detected edge pixels (threshold on |grad|).
double edge_sharpness(const Tensor& frame, double threshold = 0.08);
double frame_variance(const Tensor& frame);

}  // namespace vpred
