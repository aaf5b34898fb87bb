#include "vpred/sampler.hpp"

#include <algorithm>
#include <cmath>

namespace vpred {

void SamplerConfig::validate() const {
    require(beta >= 0.0 && beta <= 1.0, "sampler: beta must be in [0,1]");
    require(sigma0 > 0.0, "sampler: sigma0 must be positive");
    require(alpha_init > 0.0 && alpha_init <= 1.0, "sampler: alpha_init must be in (0,1]");
    require(alpha_ratio >= 1.0, "sampler: alpha_ratio must be >= 1");
    require(max_iters >= 1, "sampler: max_iters must be >= 1");
    require(fixed_steps >= 0 && snapshot_every >= 0, "sampler: bad step controls");
}

double SamplerConfig::alpha_at(int k) const {
    const double a = alpha_init * std::pow(alpha_ratio, static_cast<double>(k - 1));
    return std::min(a, 1.0);
}

double gamma_for_step(double alpha, double beta, double sigma) {
    // factored (u-v)(u+v) form keeps beta = 1 exactly at gamma = 0
    const double u = 1.0 - beta * alpha;
    const double v = 1.0 - alpha;
    const double g2 = (u - v) * (u + v) * sigma * sigma;
    return std::sqrt(std::max(0.0, g2));
}

SampleResult sample_next_frame(DenoiserModel& model, const Tensor& cond, const SamplerConfig& cfg, Rng& rng,
                               const Tensor* y0) {
    cfg.validate();
    require(model.mode() == Mode::inference, "sample_next_frame: model must be in inference mode");
    const int tau = model.arch().tau;
    int h = 0, w = 0;
    if (tau > 0) {
        require(cond.ndim() == 4 && cond.dim(1) == tau, "sample_next_frame: conditioning shape mismatch");
        h = cond.dim(2);
        w = cond.dim(3);
    } else {
        require(y0 != nullptr, "sample_next_frame: tau=0 needs an explicit y0 for the frame size");
    }

    SampleResult res;
    Tensor y;
    if (y0 != nullptr) {
        y = *y0;
        h = y.dim(2);
        w = y.dim(3);
    } else {
        // pure-noise start: mid-gray mean, std at the maximum training noise level
        y = Tensor({1, 1, h, w});
        for (int64_t i = 0; i < y.numel(); ++i) {
            y[i] = 0.5f + rng.normal_f();
        }
    }
    const double sqrt_d = std::sqrt(static_cast<double>(h) * w);

    const int limit = cfg.fixed_steps > 0 ? cfg.fixed_steps : cfg.max_iters;
    for (int k = 1; k <= limit; ++k) {
        Tensor xhat = model.denoise(y, cond);
        double ss = 0.0;
        for (int64_t i = 0; i < y.numel(); ++i) {
            const double d = static_cast<double>(xhat[i]) - y[i];
            ss += d * d;
        }
        const double sigma_k = std::sqrt(ss) / sqrt_d;
        res.sigma_trace.push_back(sigma_k);
        res.iterations = k;

        if (cfg.fixed_steps == 0 && sigma_k <= cfg.sigma0) {
            // final step: full denoise (alpha = 1, gamma = 0)
            y = std::move(xhat);
            res.converged = true;
            break;
        }

        const double alpha = cfg.alpha_at(k);
        const double gamma = cfg.beta >= 1.0 ? 0.0 : gamma_for_step(alpha, cfg.beta, sigma_k);
        if (alpha >= 1.0) {
            y = std::move(xhat);  // exact full-denoise step
        } else {
            for (int64_t i = 0; i < y.numel(); ++i) {
                y[i] += static_cast<float>(alpha) * (xhat[i] - y[i]);
            }
        }
        if (gamma > 0.0) {
            for (int64_t i = 0; i < y.numel(); ++i) {
                y[i] += static_cast<float>(gamma) * rng.normal_f();
            }
        }
        if (cfg.snapshot_every > 0 && k % cfg.snapshot_every == 0) {
            res.snapshots.push_back(y);
        }
    }
    if (cfg.fixed_steps > 0) {
        res.converged = true;  // fixed-length runs have no threshold to miss
    }
    res.frame = std::move(y);
    return res;
}

ImageSequence rollout(DenoiserModel& model, const ImageSequence& seed_frames, int n_steps, RolloutMode mode,
                      const SamplerConfig& cfg, Rng& rng) {
    require(n_steps >= 0, "rollout: n_steps must be >= 0");
    const int tau = model.arch().tau;
    require(seed_frames.t >= tau, strfmt("rollout: need at least %d seed frames, got %d", tau, seed_frames.t));
    const int h = seed_frames.h, w = seed_frames.w;

    ImageSequence out = seed_frames;
    out.source_tag = mode == RolloutMode::sample ? "rollout:sample" : "rollout:one_step";
    for (int step = 0; step < n_steps; ++step) {
        // conditioning window: most recent tau frames, most recent first
        Tensor cond({1, std::max(tau, 1), h, w});
        for (int k = 0; k < tau; ++k) {
            const float* src = out.frame(out.t - 1 - k);
            std::copy(src, src + static_cast<int64_t>(h) * w, cond.ptr(0, k, 0, 0));
        }

        Tensor next;
        if (mode == RolloutMode::one_step) {
            Tensor y({1, 1, h, w});
            for (int64_t i = 0; i < y.numel(); ++i) {
                y[i] = 0.5f + rng.normal_f();
            }
            next = model.denoise(y, cond);
        } else if (tau == 0) {
            Tensor y0({1, 1, h, w});
            for (int64_t i = 0; i < y0.numel(); ++i) {
                y0[i] = 0.5f + rng.normal_f();
            }
            SampleResult r = sample_next_frame(model, cond, cfg, rng, &y0);
            next = std::move(r.frame);
        } else {
            SampleResult r = sample_next_frame(model, cond, cfg, rng);
            next = std::move(r.frame);
        }
        out.pixels.reserve(out.pixels.size() + static_cast<size_t>(h) * w);
        for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) {
            out.pixels.push_back(std::clamp(next[i], 0.0f, 1.0f));
        }
        out.t += 1;
    }
    return out;
}

OcclusionOutcome occlusion_outcome(const Tensor& frame, const ProbeSpec& spec) {
    require(frame.ndim() == 4 && frame.dim(1) == 1, "occlusion_outcome: frame must be [1,1,H,W]");
    const int h = frame.dim(2), w = frame.dim(3);
    const auto& cl = spec.center_left[2];
    const auto& cr = spec.center_right[2];

    // interior of the overlap region in the true-next-frame geometry
    double total = 0.0;
    int count = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double dl = std::hypot(x - cl[0], y - cl[1]);
            const double dr = std::hypot(x - cr[0], y - cr[1]);
            if (dl <= spec.radius_left - 1.0 && dr <= spec.radius_right - 1.0) {
                total += frame.at(0, 0, y, x);
                count++;
            }
        }
    }
    require(count >= 3, "occlusion_outcome: probe geometry has no overlap region");

    const double mean = total / count;
    const double tol = 0.1;
    const bool near_left = std::abs(mean - spec.lum_left) <= tol;
    const bool near_right = std::abs(mean - spec.lum_right) <= tol;
    if (near_left == near_right) {
        return OcclusionOutcome::undecided;  // both or neither
    }
    return near_left ? OcclusionOutcome::left_occludes : OcclusionOutcome::right_occludes;
}

const char* to_string(OcclusionOutcome o) {
    switch (o) {
        case OcclusionOutcome::left_occludes:
            return "left_occludes";
        case OcclusionOutcome::right_occludes:
            return "right_occludes";
        default:
            return "undecided";
    }
}

}  // namespace vpred
