#include "vpred/gmix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vpred {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Per-component log densities of the smoothed mixture at y.
void component_logdens(const GaussianMixture1D& gm, double y, double sigma, std::vector<double>& out) {
    const size_t k = gm.weights.size();
    out.resize(k);
    for (size_t i = 0; i < k; ++i) {
        const double var = gm.stds[i] * gm.stds[i] + sigma * sigma;
        require(var > 0.0, "noisy density undefined: sigma = 0 with a point-mass component");
        const double d = y - gm.means[i];
        out[i] = std::log(gm.weights[i]) - 0.5 * (kLog2Pi + std::log(var)) - 0.5 * d * d / var;
    }
}

double logsumexp(const std::vector<double>& v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) {
        m = std::max(m, x);
    }
    if (!std::isfinite(m)) {
        return m;
    }
    double s = 0.0;
    for (double x : v) {
        s += std::exp(x - m);
    }
    return m + std::log(s);
}

}  // namespace

void GaussianMixture1D::validate() const {
    require(!weights.empty(), "mixture must have at least one component");
    require(weights.size() == means.size() && weights.size() == stds.size(),
            "mixture component lists must have equal length");
    double total = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
        require(weights[i] > 0.0, "mixture weights must be positive");
        require(stds[i] >= 0.0, "mixture stds must be non-negative");
        total += weights[i];
    }
    require(std::abs(total - 1.0) <= 1e-12, strfmt("mixture weights must sum to 1, got %.17g", total));
}

GaussianMixture1D GaussianMixture1D::point_masses(std::vector<double> positions, std::vector<double> weights) {
    GaussianMixture1D gm;
    gm.means = std::move(positions);
    gm.weights = std::move(weights);
    gm.stds.assign(gm.means.size(), 0.0);
    gm.validate();
    return gm;
}

GaussianMixture1D GaussianMixture1D::bimodal_halves() {
    return point_masses({-0.5, 0.5}, {0.5, 0.5});
}

double noisy_logpdf(const GaussianMixture1D& gm, double y, double sigma) {
    gm.validate();
    require(sigma >= 0.0, "sigma must be non-negative");
    std::vector<double> ld;
    component_logdens(gm, y, sigma, ld);
    return logsumexp(ld);
}

double noisy_score(const GaussianMixture1D& gm, double y, double sigma) {
    gm.validate();
    require(sigma >= 0.0, "sigma must be non-negative");
    std::vector<double> ld;
    component_logdens(gm, y, sigma, ld);
    const double lse = logsumexp(ld);
    double score = 0.0;
    for (size_t i = 0; i < ld.size(); ++i) {
        const double r = std::exp(ld[i] - lse);  // responsibility
        const double var = gm.stds[i] * gm.stds[i] + sigma * sigma;
        score += r * (gm.means[i] - y) / var;
    }
    return score;
}

double mmse_denoise(const GaussianMixture1D& gm, double y, double sigma) {
    gm.validate();
    require(sigma >= 0.0, "sigma must be non-negative");
    if (sigma == 0.0) {
        return y;  // noiseless observation
    }
    std::vector<double> ld;
    component_logdens(gm, y, sigma, ld);
    const double lse = logsumexp(ld);
    const double s2 = sigma * sigma;
    double x_hat = 0.0;
    for (size_t i = 0; i < ld.size(); ++i) {
        const double r = std::exp(ld[i] - lse);
        const double prior_var = gm.stds[i] * gm.stds[i];
        const double var = prior_var + s2;
        // Posterior mean of component i under the Gaussian observation model.
        const double post_mean = (s2 * gm.means[i] + prior_var * y) / var;
        x_hat += r * post_mean;
    }
    return x_hat;
}

std::vector<double> log_spaced_grid(double lo, double hi, int n) {
    require(lo > 0.0 && hi > lo && n >= 2, "log_spaced_grid: need 0 < lo < hi and n >= 2");
    std::vector<double> g(static_cast<size_t>(n));
    const double llo = std::log(lo), lhi = std::log(hi);
    for (int i = 0; i < n; ++i) {
        g[static_cast<size_t>(i)] = std::exp(llo + (lhi - llo) * i / (n - 1));
    }
    return g;
}

std::vector<double> default_sigma_grid() { return log_spaced_grid(1e-3, 3.0, 200); }

BlindDenoiseResult blind_denoise_map(const GaussianMixture1D& gm, double y, const std::vector<double>& sigma_grid) {
    require(!sigma_grid.empty(), "blind_denoise_map: empty sigma grid");
    double best_obj = -std::numeric_limits<double>::infinity();
    double best_sigma = sigma_grid.front();
    for (double sigma : sigma_grid) {
        require(sigma > 0.0, "blind_denoise_map: grid sigmas must be positive");
        // log p(y|sigma) + log prior, prior(sigma) ~ 1/sigma (log-uniform)
        const double obj = noisy_logpdf(gm, y, sigma) - std::log(sigma);
        if (obj > best_obj) {
            best_obj = obj;
            best_sigma = sigma;
        }
    }
    return {mmse_denoise(gm, y, best_sigma), best_sigma};
}

Sample1DResult sample_1d(const GaussianMixture1D& gm, double y0, const Sampler1DConfig& cfg, Rng& rng) {
    require(cfg.alpha > 0.0 && cfg.alpha <= 1.0, "sample_1d: alpha must be in (0, 1]");
    require(cfg.beta >= 0.0 && cfg.beta <= 1.0, "sample_1d: beta must be in [0, 1]");
    require(cfg.sigma0 > 0.0, "sample_1d: sigma0 must be positive");
    const std::vector<double> grid = cfg.sigma_grid.empty() ? default_sigma_grid() : cfg.sigma_grid;

    Sample1DResult res;
    double y = y0;
    res.trajectory.push_back(y);
    for (int k = 1; k <= cfg.max_iters; ++k) {
        const double f = blind_denoise_map(gm, y, grid).x_hat - y;
        const double sigma_k = std::abs(f);
        if (sigma_k <= cfg.sigma0) {
            // final full-denoise step (alpha = 1, gamma = 0)
            y += f;
            res.trajectory.push_back(y);
            res.converged = true;
            res.iterations = k;
            return res;
        }
        const double a = cfg.alpha;
        const double g2 = ((1.0 - cfg.beta * a) * (1.0 - cfg.beta * a) - (1.0 - a) * (1.0 - a)) * sigma_k * sigma_k;
        const double gamma = std::sqrt(std::max(0.0, g2));
        y += a * f + gamma * rng.normal();
        res.trajectory.push_back(y);
        res.iterations = k;
    }
    res.converged = false;  // flagged, never silent
    return res;
}

}  // namespace vpred
