#include "vpred/analysis.hpp"

#include <algorithm>
#include <cmath>

namespace vpred {

double psnr(const Tensor& x, const Tensor& xhat, double i_range) {
    require(x.same_shape(xhat), "psnr: shape mismatch " + x.shape_str() + " vs " + xhat.shape_str());
    require(i_range > 0.0, "psnr: i_range must be positive");
    double mse = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) {
        const double d = static_cast<double>(x[i]) - xhat[i];
        mse += d * d;
    }
    mse /= static_cast<double>(x.numel());
    if (mse <= 0.0) {
        return 100.0;  // documented cap for exact matches
    }
    return std::min(100.0, 10.0 * std::log10(i_range * i_range / mse));
}

double sigma_for_input_psnr(double db, double i_range) {
    return i_range * std::pow(10.0, -db / 20.0);
}

std::vector<PsnrPoint> performance_points(DenoiserModel& model, const SequenceDataset& ds,
                                          const std::vector<double>& sigmas, int max_examples_per_sigma,
                                          uint64_t seed) {
    require(!ds.test_indices.empty(), "performance_points: empty test set");
    require(!sigmas.empty(), "performance_points: empty sigma grid");
    const Mode saved = model.mode();
    model.set_mode(Mode::inference);
    const int tau = model.arch().tau;

    std::vector<PsnrPoint> out;
    for (size_t si = 0; si < sigmas.size(); ++si) {
        const double sigma = sigmas[si];
        int produced = 0;
        for (size_t ti = 0; ti < ds.test_indices.size() && produced < max_examples_per_sigma; ++ti) {
            const int seq_id = ds.test_indices[ti];
            const ImageSequence& seq = ds.seq(seq_id);
            const int target = tau + (static_cast<int>(ti) % (seq.t - tau));
            Rng rng(seed, (static_cast<uint64_t>(si) << 32) | ti);
            TrainExample ex = make_example(seq, target, model.arch(), sigma, rng);
            Tensor xhat = model.forward(ex.input);

            PsnrPoint p;
            p.sigma = sigma;
            p.tau = tau;
            p.seq_id = seq_id;
            if (model.arch().prediction_only) {
                // no observation channel exists; the abscissa is the nominal
                // input PSNR of the requested noise level
                p.input_psnr = -20.0 * std::log10(std::max(sigma, 1e-10));
            } else {
                Tensor noisy({1, 1, seq.h, seq.w});
                std::copy(ex.input.ptr(0, 0, 0, 0), ex.input.ptr(0, 0, 0, 0) + seq.h * seq.w, noisy.data());
                p.input_psnr = psnr(ex.target, noisy);
            }
            p.output_psnr = psnr(ex.target, xhat);
            out.push_back(p);
            produced++;
        }
    }
    model.set_mode(saved);
    return out;
}

std::vector<CurvePoint> aggregate_curve(const std::vector<PsnrPoint>& points) {
    std::vector<CurvePoint> curve;
    for (const auto& p : points) {
        auto it = std::find_if(curve.begin(), curve.end(), [&](const CurvePoint& c) { return c.sigma == p.sigma; });
        if (it == curve.end()) {
            curve.push_back({p.sigma, 0.0, 0.0, 0});
            it = curve.end() - 1;
        }
        it->mean_input_psnr += p.input_psnr;
        it->mean_output_psnr += p.output_psnr;
        it->n++;
    }
    for (auto& c : curve) {
        c.mean_input_psnr /= c.n;
        c.mean_output_psnr /= c.n;
    }
    std::sort(curve.begin(), curve.end(),
              [](const CurvePoint& a, const CurvePoint& b) { return a.mean_input_psnr < b.mean_input_psnr; });
    return curve;
}

double fitted_slope(const std::vector<CurvePoint>& curve, double lo_db, double hi_db) {
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    int n = 0;
    for (const auto& c : curve) {
        if (c.mean_input_psnr < lo_db || c.mean_input_psnr > hi_db) {
            continue;
        }
        sx += c.mean_input_psnr;
        sy += c.mean_output_psnr;
        sxx += c.mean_input_psnr * c.mean_input_psnr;
        sxy += c.mean_input_psnr * c.mean_output_psnr;
        n++;
    }
    require(n >= 2, strfmt("fitted_slope: need at least 2 curve points in [%g, %g] dB", lo_db, hi_db));
    const double denom = n * sxx - sx * sx;
    require(std::abs(denom) > 1e-12, "fitted_slope: degenerate abscissa");
    return (n * sxy - sx * sy) / denom;
}

Tensor adaptive_filter(DenoiserModel& model, const Tensor& input, int i, int j) {
    require(model.mode() == Mode::inference, "adaptive_filter: model must be in inference mode");
    require(input.ndim() == 4 && input.dim(0) == 1, "adaptive_filter: input must be [1,C,H,W]");
    require(i >= 0 && i < input.dim(2) && j >= 0 && j < input.dim(3),
            strfmt("adaptive_filter: pixel (%d,%d) out of %dx%d", i, j, input.dim(2), input.dim(3)));

    Var in = leaf(input, true);
    Var out = model.forward_var(in);
    Var pixel = select_pixel(out, 0, 0, i, j);
    backward(pixel);
    return in->grad;  // [1, tau+1, H, W]: one weight map per input frame
}

namespace {

Tensor scale_copy(const Tensor& t, float factor) {
    Tensor s = t;
    s.scale_inplace(factor);
    return s;
}

}  // namespace

CueDecomposition cue_decomposition(DenoiserModel& model, const Tensor& x, const Tensor& y, const Tensor& c,
                                   double epsilon) {
    require(model.mode() == Mode::inference, "cue_decomposition: model must be in inference mode");
    const int tau = model.arch().tau;
    require(tau >= 1, "cue_decomposition: needs a conditional model (tau >= 1)");

    CueDecomposition d;
    d.xhat = model.denoise(y, c);

    double eps = epsilon;
    double best_residual = std::numeric_limits<double>::infinity();
    Tensor best_y, best_c;
    double best_eps = eps;
    for (int attempt = 0; attempt < 3; ++attempt) {
        // J_y . y and J_c . c by directional finite differences; inside the
        // network's local-linear region these are exact and sum to xhat by
        // the Euler identity for degree-1 homogeneous functions
        Tensor fy = model.denoise(scale_copy(y, 1.0f + static_cast<float>(eps)), c);
        Tensor fc = model.denoise(y, scale_copy(c, 1.0f + static_cast<float>(eps)));
        Tensor xy(d.xhat.shape()), xc(d.xhat.shape());
        for (int64_t i = 0; i < d.xhat.numel(); ++i) {
            xy[i] = static_cast<float>((fy[i] - d.xhat[i]) / eps);
            xc[i] = static_cast<float>((fc[i] - d.xhat[i]) / eps);
        }
        double num = 0.0, den = 0.0;
        for (int64_t i = 0; i < d.xhat.numel(); ++i) {
            const double r = static_cast<double>(xy[i]) + xc[i] - d.xhat[i];
            num += r * r;
            den += static_cast<double>(d.xhat[i]) * d.xhat[i];
        }
        const double residual = std::sqrt(num / std::max(den, 1e-30));
        if (residual < best_residual) {
            best_residual = residual;
            best_y = std::move(xy);
            best_c = std::move(xc);
            best_eps = eps;
        }
        if (best_residual <= 1e-2) {
            break;
        }
        eps /= 10.0;  // epsilon straddled a relu boundary, retry smaller
    }
    d.xhat_y = std::move(best_y);
    d.xhat_c = std::move(best_c);
    d.euler_residual = best_residual;
    d.epsilon_used = best_eps;
    d.flagged = d.euler_residual > 1e-2;

    for (int64_t i = 0; i < x.numel(); ++i) {
        const double dc = static_cast<double>(x[i]) - d.xhat_c[i];
        const double dy = static_cast<double>(x[i]) - d.xhat_y[i];
        d.err_c += dc * dc;
        d.err_y += dy * dy;
        d.x_norm2 += static_cast<double>(x[i]) * x[i];
        d.cross += static_cast<double>(d.xhat_y[i]) * d.xhat_c[i];
    }
    return d;
}

double error_decomposition_gap(const CueDecomposition& d, const Tensor& x) {
    double lhs = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) {
        const double r = static_cast<double>(x[i]) - (static_cast<double>(d.xhat_y[i]) + d.xhat_c[i]);
        lhs += r * r;
    }
    const double rhs = d.err_c + d.err_y - d.x_norm2 + 2.0 * d.cross;
    return std::abs(lhs - rhs);
}

std::optional<double> cue_crossing_psnr(const std::vector<CuePoint>& curve) {
    for (size_t i = 0; i + 1 < curve.size(); ++i) {
        const double a = curve[i].psnr_y - curve[i].psnr_c;
        const double b = curve[i + 1].psnr_y - curve[i + 1].psnr_c;
        if (a == 0.0) {
            return curve[i].input_psnr;
        }
        if (a < 0.0 && b >= 0.0) {
            const double t = -a / (b - a);
            return curve[i].input_psnr + t * (curve[i + 1].input_psnr - curve[i].input_psnr);
        }
    }
    return std::nullopt;
}

PsychometricData run_psychometric(DenoiserModel& model, const std::vector<double>& dr_grid, int n_samples,
                                  const ProbeConfig& pcfg, const SamplerConfig& scfg, uint64_t seed) {
    require(model.arch().tau == 2, "run_psychometric: probes provide two conditioning frames (tau = 2)");
    require(n_samples >= 1, "run_psychometric: n_samples must be >= 1");

    PsychometricData data;
    for (size_t di = 0; di < dr_grid.size(); ++di) {
        Probe probe = make_probe(dr_grid[di], pcfg);
        // conditioning stack most-recent-first: frame 1, then frame 0
        Tensor cond({1, 2, probe.seq.h, probe.seq.w});
        std::copy(probe.seq.frame(1), probe.seq.frame(1) + probe.seq.h * probe.seq.w, cond.ptr(0, 0, 0, 0));
        std::copy(probe.seq.frame(0), probe.seq.frame(0) + probe.seq.h * probe.seq.w, cond.ptr(0, 1, 0, 0));

        int right = 0, undecided = 0;
        for (int s = 0; s < n_samples; ++s) {
            Rng chain(seed, (static_cast<uint64_t>(di) << 24) | static_cast<uint64_t>(s));
            SampleResult r = sample_next_frame(model, cond, scfg, chain);
            switch (occlusion_outcome(r.frame, probe.spec)) {
                case OcclusionOutcome::right_occludes:
                    right++;
                    break;
                case OcclusionOutcome::undecided:
                    undecided++;
                    break;
                default:
                    break;
            }
        }
        data.dr.push_back(dr_grid[di]);
        data.n_right.push_back(right);
        data.n_undecided.push_back(undecided);
        data.n_total.push_back(n_samples);
    }
    return data;
}

double logistic(double dr, double mu, double scale) {
    return 1.0 / (1.0 + std::exp(-(dr - mu) / scale));
}

namespace {

double logistic_loglik(const PsychometricData& data, double mu, double scale) {
    double ll = 0.0;
    for (size_t i = 0; i < data.dr.size(); ++i) {
        const double p = std::clamp(logistic(data.dr[i], mu, scale), 1e-9, 1.0 - 1e-9);
        ll += data.n_right[i] * std::log(p) + (data.n_total[i] - data.n_right[i]) * std::log(1.0 - p);
    }
    return ll;
}

}  // namespace

PsychometricFit fit_logistic(const PsychometricData& data) {
    require(data.dr.size() >= 2, "fit_logistic: need at least two stimulus levels");

    PsychometricFit fit;
    for (size_t i = 0; i < data.dr.size(); ++i) {
        if (data.n_total[i] > 0 && data.n_undecided[i] * 5 > data.n_total[i]) {
            fit.flagged_undecided = true;  // >20% undecided at this level
        }
    }

    double mu_lo = -8.0, mu_hi = 8.0;
    double ls_lo = std::log(0.05), ls_hi = std::log(10.0);
    double best_mu = 0.0, best_ls = 0.0, best_ll = -std::numeric_limits<double>::infinity();
    for (int round = 0; round < 4; ++round) {
        const int n_grid = 41;
        for (int im = 0; im < n_grid; ++im) {
            const double mu = mu_lo + (mu_hi - mu_lo) * im / (n_grid - 1);
            for (int is = 0; is < n_grid; ++is) {
                const double ls = ls_lo + (ls_hi - ls_lo) * is / (n_grid - 1);
                const double ll = logistic_loglik(data, mu, std::exp(ls));
                if (ll > best_ll) {
                    best_ll = ll;
                    best_mu = mu;
                    best_ls = ls;
                }
            }
        }
        // shrink the search box around the incumbent
        const double mu_span = (mu_hi - mu_lo) * 0.15;
        const double ls_span = (ls_hi - ls_lo) * 0.15;
        mu_lo = best_mu - mu_span;
        mu_hi = best_mu + mu_span;
        ls_lo = best_ls - ls_span;
        ls_hi = best_ls + ls_span;
    }
    fit.mu = best_mu;
    fit.scale = std::exp(best_ls);
    fit.loglik = best_ll;
    return fit;
}

double edge_sharpness(const Tensor& frame, double threshold) {
    require(frame.ndim() == 4 && frame.dim(0) == 1 && frame.dim(1) == 1, "edge_sharpness: frame must be [1,1,H,W]");
    const int h = frame.dim(2), w = frame.dim(3);
    double total = 0.0;
    int count = 0;
    for (int y = 1; y + 1 < h; ++y) {
        for (int x = 1; x + 1 < w; ++x) {
            const double gx = 0.5 * (frame.at(0, 0, y, x + 1) - frame.at(0, 0, y, x - 1));
            const double gy = 0.5 * (frame.at(0, 0, y + 1, x) - frame.at(0, 0, y - 1, x));
            const double g = std::sqrt(gx * gx + gy * gy);
            if (g > threshold) {
                total += g;
                count++;
            }
        }
    }
    return count == 0 ? 0.0 : total / count;
}

double frame_variance(const Tensor& frame) {
    const int64_t n = frame.numel();
    double s = 0.0, s2 = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        s += frame[i];
        s2 += static_cast<double>(frame[i]) * frame[i];
    }
    const double mean = s / n;
    return std::max(0.0, s2 / n - mean * mean);
}

}  // namespace vpred
