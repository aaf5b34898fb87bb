#pragma once

#include <map>
#include <vector>

#include "vpred/common.hpp"
#include "vpred/rng.hpp"

namespace vpred {

// Closed-form 1D Gaussian mixtures: the analytic ground truth that the rest
// of the system is verified against. Everything here is float64.
struct GaussianMixture1D {
    std::vector<double> weights;
    std::vector<double> means;
    std::vector<double> stds;  // 0 = point mass

    void validate() const;

    static GaussianMixture1D point_masses(std::vector<double> positions, std::vector<double> weights);
    // The two equal point masses at -1/2 and +1/2 used throughout the 1D demo.
    static GaussianMixture1D bimodal_halves();
};

// Discrete context label -> mixture; a tractable stand-in for p(x|c).
using ContextMixtureFamily = std::map<int, GaussianMixture1D>;

// log p_sigma(y) where p_sigma is the mixture smoothed by N(0, sigma^2).
double noisy_logpdf(const GaussianMixture1D& gm, double y, double sigma);

// d/dy log p_sigma(y), closed form via responsibilities.
double noisy_score(const GaussianMixture1D& gm, double y, double sigma);

// E[x | y] under x ~ gm, y = x + sigma z. sigma = 0 returns y.
double mmse_denoise(const GaussianMixture1D& gm, double y, double sigma);

std::vector<double> log_spaced_grid(double lo, double hi, int n);

struct BlindDenoiseResult {
    double x_hat = 0.0;
    double sigma_hat = 0.0;
};

// MAP plug-in noise level under a log-uniform prior: argmax_sigma over the
// grid of log p(y|sigma) - log sigma, then the exact MMSE denoiser at that
// level.
BlindDenoiseResult blind_denoise_map(const GaussianMixture1D& gm, double y, const std::vector<double>& sigma_grid);

struct Sampler1DConfig {
    double alpha = 0.5;
    double beta = 1.0;    // 1 = deterministic (no injected noise)
    double sigma0 = 0.01;
    int max_iters = 500;
    std::vector<double> sigma_grid;  // defaults to 200 log-spaced points in [1e-3, 3]
};

struct Sample1DResult {
    std::vector<double> trajectory;  // y_0 .. y_final
    bool converged = false;
    int iterations = 0;
};

// Iterates y_k = y_{k-1} + alpha f(y_{k-1}) + gamma_k z_k where f is the
// blind denoiser residual and gamma follows the same rule as the image
// sampler. Terminates when |f| <= sigma0; a hit of max_iters is flagged.
Sample1DResult sample_1d(const GaussianMixture1D& gm, double y0, const Sampler1DConfig& cfg, Rng& rng);

std::vector<double> default_sigma_grid();

}  // namespace vpred
