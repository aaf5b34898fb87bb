#include "vpred/selftest.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>

#include "vpred/analysis.hpp"
#include "vpred/autograd.hpp"
#include "vpred/gmix.hpp"
#include "vpred/leaves.hpp"
#include "vpred/sampler.hpp"
#include "vpred/train.hpp"
#include "vpred/unet.hpp"
#include "vpred/vseq.hpp"

namespace vpred {

namespace {

// Independent naive convolution: the oracle against the fast path.
Tensor conv_naive(const Tensor& in, const Tensor& k) {
    const int nb = in.dim(0), ci_n = in.dim(1), h = in.dim(2), w = in.dim(3), co_n = k.dim(0);
    Tensor out({nb, co_n, h, w});
    for (int n = 0; n < nb; ++n)
        for (int co = 0; co < co_n; ++co)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    double acc = 0.0;
                    for (int ci = 0; ci < ci_n; ++ci)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                const int iy = y + ky - 1, ix = x + kx - 1;
                                if (iy >= 0 && iy < h && ix >= 0 && ix < w) {
                                    acc += static_cast<double>(in.at(n, ci, iy, ix)) * k.at(co, ci, ky, kx);
                                }
                            }
                    out.at(n, co, y, x) = static_cast<float>(acc);
                }
    return out;
}

std::string temp_file(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

SelftestResult run_selftest() {
    SelftestResult res;
    auto check = [&](const char* name, const std::function<bool()>& fn) {
        bool ok = false;
        std::string detail;
        try {
            ok = fn();
        } catch (const std::exception& e) {
            detail = std::string(" (") + e.what() + ")";
        }
        res.lines.push_back(strfmt("%-58s %s%s", name, ok ? "ok" : "FAIL", detail.c_str()));
        (ok ? res.passed : res.failed)++;
    };

    check("miyasawa identity, 1000 random mixture triples <= 1e-9", [] {
        Rng rng(101);
        for (int rep = 0; rep < 1000; ++rep) {
            GaussianMixture1D gm;
            const int k = 1 + static_cast<int>(rng.below(3));
            double tot = 0.0;
            for (int i = 0; i < k; ++i) {
                gm.weights.push_back(0.2 + rng.uniform());
                tot += gm.weights.back();
                gm.means.push_back(rng.uniform(-2.0, 2.0));
                gm.stds.push_back(rng.uniform() < 0.3 ? 0.0 : rng.uniform(0.1, 1.5));
            }
            for (auto& w : gm.weights) {
                w /= tot;
            }
            double s = 0.0;
            for (double w : gm.weights) {
                s += w;
            }
            gm.weights.back() += 1.0 - s;
            const double sigma = rng.uniform(0.05, 2.0);
            const double y = rng.uniform(-4.0, 4.0);
            const double gap = std::abs(mmse_denoise(gm, y, sigma) -
                                        (y + sigma * sigma * noisy_score(gm, y, sigma)));
            if (gap > 1e-9) {
                return false;
            }
        }
        return true;
    });

    check("conv2d matches the naive six-loop reference to 1e-6", [] {
        Rng rng(102);
        Tensor x = Tensor::randn({1, 2, 5, 5}, rng);
        Tensor k = Tensor::randn({3, 2, 3, 3}, rng);
        Tensor a = conv2d_forward(x, k);
        Tensor b = conv_naive(x, k);
        for (int64_t i = 0; i < a.numel(); ++i) {
            if (std::abs(a[i] - b[i]) > 1e-6f) {
                return false;
            }
        }
        return true;
    });

    check("autodiff matches finite differences on a composed block", [] {
        Rng rng(103);
        Tensor x = Tensor::randn({1, 2, 4, 4}, rng);
        Tensor k = Tensor::randn({2, 2, 3, 3}, rng);
        Tensor running = Tensor::full({2}, 1.0f);
        Tensor gain = Tensor::full({2}, 1.0f);
        Tensor target({1, 2, 2, 2});

        auto loss_value = [&]() {
            Var v = leaf(x, false);
            Var h = relu(bf_norm(conv2d(v, leaf(k, false)), leaf(gain, false), running, true));
            return static_cast<double>(mse_loss(downsample2x(h), target)->value[0]);
        };
        Var kv = leaf(k, true);
        Var xv = leaf(x, false);
        Var loss = mse_loss(downsample2x(relu(bf_norm(conv2d(xv, kv), leaf(gain, false), running, true))), target);
        backward(loss);
        for (int64_t i = 0; i < k.numel(); i += 7) {
            const double h = 1e-3;
            const float orig = k[i];
            k[i] = static_cast<float>(orig + h);
            const double fp = loss_value();
            k[i] = static_cast<float>(orig - h);
            const double fm = loss_value();
            k[i] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            if (std::abs(fd - kv->grad[i]) > 1e-3 + 1e-2 * std::max(std::abs(fd), std::abs(static_cast<double>(kv->grad[i])))) {
                return false;
            }
        }
        return true;
    });

    check("untrained model is degree-1 homogeneous in inference mode", [] {
        ModelArch arch;
        arch.tau = 2;
        arch.base_channels = 8;
        DenoiserModel m(arch, 104);
        m.set_mode(Mode::training);
        Rng rng(105);
        m.forward(Tensor::randn({2, 3, 16, 16}, rng));
        m.set_mode(Mode::inference);
        Tensor x = Tensor::randn({1, 3, 16, 16}, rng);
        Tensor base = m.forward(x);
        for (float lambda : {0.5f, 2.0f, 10.0f}) {
            Tensor xs = x;
            xs.scale_inplace(lambda);
            Tensor out = m.forward(xs);
            double num = 0.0, den = 0.0;
            for (int64_t i = 0; i < out.numel(); ++i) {
                const double e = static_cast<double>(lambda) * base[i];
                num += (out[i] - e) * (out[i] - e);
                den += e * e;
            }
            if (std::sqrt(num / std::max(den, 1e-30)) > 1e-4) {
                return false;
            }
        }
        return true;
    });

    check("generated dataset: occlusion event, range, shape, determinism", [] {
        LeavesConfig cfg;
        GeneratedDataset a = generate_dataset(106, 50, cfg);
        GeneratedDataset b = generate_dataset(106, 50, cfg);
        for (int i = 0; i < a.data.size(); ++i) {
            const ImageSequence& s = a.data.seq(i);
            if (s.t != 11 || s.h != 32 || s.w != 32) {
                return false;
            }
            s.validate();
            if (!has_occlusion_event(a.scenes[static_cast<size_t>(i)], cfg)) {
                return false;
            }
            if (s.pixels != b.data.seq(i).pixels) {
                return false;
            }
        }
        a.data.validate_split();
        return a.data.train_indices.size() == 45;
    });

    check("VSEQ save/load round trip is bit-exact", [] {
        LeavesConfig cfg;
        GeneratedDataset gd = generate_dataset(107, 5, cfg);
        const std::string path = temp_file("vpred_selftest.vseq");
        save_dataset(gd.data, path);
        SequenceDataset back = load_dataset(path);
        std::remove(path.c_str());
        for (int i = 0; i < back.size(); ++i) {
            if (back.seq(i).pixels != gd.data.seq(i).pixels) {
                return false;
            }
        }
        return back.train_indices == gd.data.train_indices;
    });

    check("BFUN save/load reproduces forward output bitwise", [] {
        ModelArch arch;
        arch.tau = 1;
        arch.base_channels = 8;
        DenoiserModel m(arch, 108);
        m.set_mode(Mode::training);
        Rng rng(109);
        m.forward(Tensor::randn({2, 2, 16, 16}, rng));
        m.set_mode(Mode::inference);
        Tensor probe = Tensor::randn({1, 2, 16, 16}, rng);
        Tensor before = m.forward(probe);
        const std::string path = temp_file("vpred_selftest.bfun");
        save_model(m, path);
        DenoiserModel back = load_model(path);
        std::remove(path.c_str());
        Tensor after = back.forward(probe);
        for (int64_t i = 0; i < before.numel(); ++i) {
            if (before[i] != after[i]) {
                return false;
            }
        }
        return true;
    });

    check("1D sampling: y0=-2, alpha=0.5 converges to -1/2 within 1e-3", [] {
        GaussianMixture1D gm = GaussianMixture1D::bimodal_halves();
        Sampler1DConfig cfg;
        cfg.alpha = 0.5;
        cfg.beta = 1.0;
        cfg.max_iters = 200;
        Rng rng(110);
        Sample1DResult r = sample_1d(gm, -2.0, cfg, rng);
        return r.converged && std::abs(r.trajectory.back() + 0.5) <= 1e-3;
    });

    check("gamma schedule algebra and beta=1 degeneracy", [] {
        for (double beta : {0.0, 0.3, 0.7, 1.0}) {
            for (double alpha : {0.1, 0.5, 1.0}) {
                for (double sigma : {0.02, 1.0}) {
                    const double g = gamma_for_step(alpha, beta, sigma);
                    const double lhs = (1 - alpha) * (1 - alpha) * sigma * sigma + g * g;
                    const double rhs = (1 - beta * alpha) * (1 - beta * alpha) * sigma * sigma;
                    if (std::abs(lhs - rhs) > 1e-12 * std::max(1.0, rhs)) {
                        return false;
                    }
                    if (beta == 1.0 && g != 0.0) {
                        return false;
                    }
                }
            }
        }
        return true;
    });

    check("sampler: alpha=1, beta=1 single step equals one-step denoiser", [] {
        ModelArch arch;
        arch.tau = 2;
        arch.base_channels = 8;
        DenoiserModel m(arch, 111);
        m.set_mode(Mode::inference);
        Rng rng(112);
        Tensor cond = Tensor::randn({1, 2, 16, 16}, rng, 0.3f);
        Tensor y0 = Tensor::randn({1, 1, 16, 16}, rng);
        SamplerConfig cfg;
        cfg.alpha_init = 1.0;
        cfg.beta = 1.0;
        cfg.max_iters = 1;
        Rng chain(113);
        SampleResult r = sample_next_frame(m, cond, cfg, chain, &y0);
        Tensor direct = m.denoise(y0, cond);
        for (int64_t i = 0; i < direct.numel(); ++i) {
            if (r.frame[i] != direct[i]) {
                return false;
            }
        }
        return true;
    });

    check("sampler determinism: fixed seed gives identical samples", [] {
        ModelArch arch;
        arch.tau = 1;
        arch.base_channels = 8;
        DenoiserModel m(arch, 114);
        m.set_mode(Mode::inference);
        Rng rng(115);
        Tensor cond = Tensor::randn({1, 1, 16, 16}, rng, 0.3f);
        SamplerConfig cfg;
        cfg.max_iters = 25;
        Rng c1(7), c2(7);
        SampleResult a = sample_next_frame(m, cond, cfg, c1);
        SampleResult b = sample_next_frame(m, cond, cfg, c2);
        for (int64_t i = 0; i < a.frame.numel(); ++i) {
            if (a.frame[i] != b.frame[i]) {
                return false;
            }
        }
        return true;
    });

    check("noise law sigma = u^2 has median 0.25 +- 0.01", [] {
        Rng rng(116);
        std::vector<double> sig;
        for (int i = 0; i < 100000; ++i) {
            sig.push_back(sample_noise_sigma(rng));
        }
        std::nth_element(sig.begin(), sig.begin() + sig.size() / 2, sig.end());
        return std::abs(sig[sig.size() / 2] - 0.25) <= 0.01;
    });

    check("variance partition identity on synthetic float64 vectors", [] {
        Rng rng(117);
        for (int rep = 0; rep < 100; ++rep) {
            double lhs = 0, ec = 0, ey = 0, x2 = 0, cr = 0;
            for (int i = 0; i < 64; ++i) {
                const double x = rng.normal(), xy = rng.normal(), xc = rng.normal();
                lhs += (x - xy - xc) * (x - xy - xc);
                ec += (x - xc) * (x - xc);
                ey += (x - xy) * (x - xy);
                x2 += x * x;
                cr += xy * xc;
            }
            if (std::abs(lhs - (ec + ey - x2 + 2 * cr)) > 1e-10 * std::max(1.0, lhs)) {
                return false;
            }
        }
        return true;
    });

    return res;
}

}  // namespace vpred
