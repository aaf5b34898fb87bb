#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gate.hpp"
#include "oracles.hpp"
#include "vpred/analysis.hpp"

using namespace vpred;

namespace {

DenoiserModel small_model(int tau, uint64_t seed = 21) {
    ModelArch arch;
    arch.tau = tau;
    arch.base_channels = 8;
    DenoiserModel m(arch, seed);
    m.set_mode(Mode::training);
    Rng rng(seed + 1);
    Tensor x = Tensor::randn({2, arch.in_channels(), 16, 16}, rng);
    m.forward(x);
    m.set_mode(Mode::inference);
    return m;
}

}  // namespace

TEST_CASE("psnr closed forms") {
    Tensor x = Tensor::full({1, 1, 4, 4}, 0.3f);
    Tensor y = x;
    for (int64_t i = 0; i < y.numel(); ++i) {
        y[i] += 0.1f;
    }
    CHECK(psnr(x, y) == doctest::Approx(20.0).epsilon(1e-5));
    CHECK(psnr(x, x) == 100.0);

    SUBCASE("random pair matches the direct two-line reference") {
        Rng rng(80);
        Tensor a = Tensor::randn({1, 1, 6, 6}, rng);
        Tensor b = Tensor::randn({1, 1, 6, 6}, rng);
        double mse = 0.0;
        for (int64_t i = 0; i < a.numel(); ++i) {
            mse += (static_cast<double>(a[i]) - b[i]) * (static_cast<double>(a[i]) - b[i]);
        }
        mse /= static_cast<double>(a.numel());
        const double expected = 10.0 * std::log10(1.0 / mse);
        CHECK(psnr(a, b) == doctest::Approx(expected).epsilon(1e-9));
    }
    SUBCASE("invariant under identical pixel permutation") {
        Rng rng(81);
        Tensor a = Tensor::randn({1, 1, 4, 4}, rng);
        Tensor b = Tensor::randn({1, 1, 4, 4}, rng);
        Tensor ap = a, bp = b;
        std::reverse(ap.vec().begin(), ap.vec().end());
        std::reverse(bp.vec().begin(), bp.vec().end());
        CHECK(psnr(a, b) == doctest::Approx(psnr(ap, bp)).epsilon(1e-12));
    }
    SUBCASE("shape mismatch is an error") {
        CHECK_THROWS_AS(psnr(Tensor({1, 1, 2, 2}), Tensor({1, 1, 3, 3})), Error);
    }
}

TEST_CASE("sigma_for_input_psnr inverts the PSNR formula") {
    CHECK(sigma_for_input_psnr(0.0) == doctest::Approx(1.0));
    CHECK(sigma_for_input_psnr(20.0) == doctest::Approx(0.1));
    CHECK(sigma_for_input_psnr(40.0) == doctest::Approx(0.01));
}

TEST_CASE("adaptive filter matches finite differences and Euler reconstruction") {
    DenoiserModel model = small_model(2);
    Rng rng(82);
    Tensor input = Tensor::randn({1, 3, 16, 16}, rng, 0.4f);
    for (int64_t i = 0; i < input.numel(); ++i) {
        input[i] += 0.5f;
    }
    const int pi = 7, pj = 9;
    Tensor weights = adaptive_filter(model, input, pi, pj);
    REQUIRE(weights.same_shape(input));

    SUBCASE("Jacobian row vs central finite differences at 20 coordinates") {
        auto eval = [&]() { return static_cast<double>(model.forward(input).at(0, 0, pi, pj)); };
        for (int rep = 0; rep < 20; ++rep) {
            const int64_t idx = static_cast<int64_t>(rng.below(static_cast<uint32_t>(input.numel())));
            const double fd = oracles::finite_difference(eval, input, idx, 1e-3);
            const double ag = weights[idx];
            INFO("coord ", idx, " fd=", fd, " autograd=", ag);
            CHECK(std::abs(fd - ag) <= 1e-3 + 1e-2 * std::max(std::abs(fd), std::abs(ag)));
        }
    }
    SUBCASE("sum of inputs times weights reconstructs the output pixel") {
        double recon = 0.0;
        for (int64_t i = 0; i < input.numel(); ++i) {
            recon += static_cast<double>(input[i]) * weights[i];
        }
        const double direct = model.forward(input).at(0, 0, pi, pj);
        CHECK(oracles::rel_err(recon, direct, 1e-3) <= 1e-3);
    }
    SUBCASE("pixel out of range is an error") {
        CHECK_THROWS_AS(adaptive_filter(model, input, 16, 0), Error);
    }
}

TEST_CASE("cue decomposition satisfies the Euler identity and variance partition") {
    DenoiserModel model = small_model(2);
    Rng rng(83);
    Tensor x({1, 1, 16, 16});
    for (int64_t i = 0; i < x.numel(); ++i) {
        x[i] = rng.uniform_f();
    }
    Tensor y = x;
    for (int64_t i = 0; i < y.numel(); ++i) {
        y[i] += 0.5f * rng.normal_f();
    }
    Tensor c({1, 2, 16, 16});
    for (int64_t i = 0; i < c.numel(); ++i) {
        c[i] = rng.uniform_f();
    }

    CueDecomposition d = cue_decomposition(model, x, y, c);
    // an untrained net has a dense relu-kink population, so only the flag
    // contract is asserted here; trained models are held to 1e-2 in the
    // acceptance suite
    CHECK(d.euler_residual < 0.15);
    CHECK(d.flagged == (d.euler_residual > 1e-2));
    CHECK(d.xhat_y.same_shape(d.xhat));
    CHECK(d.xhat_c.same_shape(d.xhat));

    // partition-of-variance identity with xh := xhat_y + xhat_c
    const double scale = d.x_norm2 + d.err_c + d.err_y + std::abs(d.cross);
    CHECK(error_decomposition_gap(d, x) <= 1e-6 * std::max(scale, 1.0));
}

TEST_CASE("variance partition is an exact algebraic identity in float64") {
    // synthetic vectors: expand ||x - xy - xc||^2 directly
    Rng rng(84);
    const int n = 128;
    std::vector<double> x(n), xy(n), xc(n);
    for (int i = 0; i < n; ++i) {
        x[static_cast<size_t>(i)] = rng.normal();
        xy[static_cast<size_t>(i)] = rng.normal();
        xc[static_cast<size_t>(i)] = rng.normal();
    }
    double lhs = 0.0, err_c = 0.0, err_y = 0.0, x2 = 0.0, cross = 0.0;
    for (int i = 0; i < n; ++i) {
        const double xi = x[static_cast<size_t>(i)], yi = xy[static_cast<size_t>(i)], ci = xc[static_cast<size_t>(i)];
        lhs += (xi - yi - ci) * (xi - yi - ci);
        err_c += (xi - ci) * (xi - ci);
        err_y += (xi - yi) * (xi - yi);
        x2 += xi * xi;
        cross += yi * ci;
    }
    const double rhs = err_c + err_y - x2 + 2.0 * cross;
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
}

TEST_CASE("cue crossing point interpolation") {
    std::vector<CuePoint> curve = {
        {0.0, 10.0, 2.0, 8.0},   // y-curve below c-curve
        {10.0, 14.0, 6.0, 7.0},  // still below
        {20.0, 18.0, 12.0, 6.0}, // crossed between 10 and 20
        {30.0, 22.0, 20.0, 5.0},
    };
    auto cross = cue_crossing_psnr(curve);
    REQUIRE(cross.has_value());
    CHECK(*cross > 10.0);
    CHECK(*cross < 20.0);
    // linear interpolation: diff goes -1 -> +6, zero at t = 1/7
    CHECK(*cross == doctest::Approx(10.0 + 10.0 / 7.0).epsilon(1e-9));

    std::vector<CuePoint> no_cross = {{0.0, 0.0, 5.0, 1.0}, {10.0, 0.0, 9.0, 2.0}};
    CHECK_FALSE(cue_crossing_psnr(no_cross).has_value());
}

TEST_CASE("logistic fit recovers known parameters from simulated choices") {
    const double true_mu = 0.0, true_scale = 1.0;
    Rng rng(85);
    PsychometricData data;
    for (double dr = -4.0; dr <= 4.0; dr += 1.0) {
        const double p = logistic(dr, true_mu, true_scale);
        int right = 0;
        const int n = 64;
        for (int s = 0; s < n; ++s) {
            if (rng.uniform() < p) {
                right++;
            }
        }
        data.dr.push_back(dr);
        data.n_right.push_back(right);
        data.n_undecided.push_back(0);
        data.n_total.push_back(n);
    }
    PsychometricFit fit = fit_logistic(data);
    INFO("fit mu=", fit.mu, " scale=", fit.scale);
    CHECK(std::abs(fit.mu - true_mu) <= 0.2);
    CHECK(std::abs(fit.scale - true_scale) <= 0.3);
    CHECK_FALSE(fit.flagged_undecided);
    CHECK(std::isfinite(fit.loglik));

    SUBCASE("excess undecided outcomes flag the fit") {
        data.n_undecided[0] = 20;  // > 20% of 64
        PsychometricFit flagged = fit_logistic(data);
        CHECK(flagged.flagged_undecided);
    }
}

TEST_CASE("fitted slope recovers a synthetic linear curve") {
    std::vector<CurvePoint> curve;
    for (double in = 0.0; in <= 30.0; in += 5.0) {
        curve.push_back({0.0, in, 0.5 * in + 7.0, 1});
    }
    CHECK(fitted_slope(curve, 0.0, 30.0) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK_THROWS_AS(fitted_slope(curve, 100.0, 200.0), Error);
}

TEST_CASE("edge sharpness separates sharp and blurred edges") {
    const int hw = 32;
    Tensor sharp({1, 1, hw, hw});
    Tensor blurred({1, 1, hw, hw});
    for (int y = 0; y < hw; ++y) {
        for (int x = 0; x < hw; ++x) {
            sharp.at(0, 0, y, x) = x < hw / 2 ? 0.1f : 0.9f;
            blurred.at(0, 0, y, x) = 0.1f + 0.8f / (1.0f + std::exp(-(x - hw / 2) / 1.5f));
        }
    }
    const double s_sharp = edge_sharpness(sharp);
    const double s_blur = edge_sharpness(blurred);
    INFO("sharp=", s_sharp, " blurred=", s_blur);
    CHECK(s_sharp > s_blur);
    CHECK(s_blur > 0.0);
    CHECK(edge_sharpness(Tensor::full({1, 1, hw, hw}, 0.5f)) == 0.0);
}

TEST_CASE("frame variance basics") {
    CHECK(frame_variance(Tensor::full({1, 1, 4, 4}, 0.7f)) == doctest::Approx(0.0));
    Tensor half({1, 1, 2, 2});
    half[0] = half[1] = 0.0f;
    half[2] = half[3] = 1.0f;
    CHECK(frame_variance(half) == doctest::Approx(0.25));
}

TEST_CASE("trained model: adaptive filter tracks motion against its direction") {
    REQUIRE_TRAINED_MODEL(model, "tau2.bfun");
    // one disk translating right by 3 px/frame; centers at x = 10, 13, 16
    DiskScene scene;
    scene.frames = 3;
    scene.image_size = 32;
    scene.background = 0.2;
    scene.a = {2.0, 6.0, 0.9, {{10.0, 16.0}, {13.0, 16.0}, {16.0, 16.0}}};
    scene.b = {3.0, 4.0, 0.2, {{2.0, 2.0}, {2.0, 2.0}, {2.0, 2.0}}};  // background-colored, invisible
    LeavesConfig rcfg;
    rcfg.frames = 3;
    ImageSequence seq = render_sequence(scene, rcfg);

    // observation at roughly 16 dB input PSNR
    Rng rng(320);
    Tensor y = seq.frame_tensor(2);
    const float sigma = static_cast<float>(sigma_for_input_psnr(16.0));
    for (int64_t i = 0; i < y.numel(); ++i) {
        y[i] += sigma * rng.normal_f();
    }
    Tensor cond({1, 2, 32, 32});
    std::copy(seq.frame(1), seq.frame(1) + 32 * 32, cond.ptr(0, 0, 0, 0));
    std::copy(seq.frame(0), seq.frame(0) + 32 * 32, cond.ptr(0, 1, 0, 0));
    Tensor input = DenoiserModel::stack_input(y, cond, 2);

    // output pixel at the disk center in the target frame
    const int pi = 16, pj = 16;
    Tensor weights = adaptive_filter(model, input, pi, pj);

    // most recent conditioning frame: argmax displaced opposite the (rightward)
    // motion, i.e. strictly left of the output pixel
    int best_x = -1, best_y = -1;
    float best = -1e30f;
    for (int yy = 0; yy < 32; ++yy) {
        for (int xx = 0; xx < 32; ++xx) {
            if (weights.at(0, 1, yy, xx) > best) {
                best = weights.at(0, 1, yy, xx);
                best_x = xx;
                best_y = yy;
            }
        }
    }
    INFO("conditioning-frame weight argmax at (", best_y, ",", best_x, ") for output pixel (", pi, ",", pj, ")");
    CHECK(best_x < pj);
}

TEST_CASE("trained model: conditioning dominates at very low input PSNR") {
    REQUIRE_TRAINED_MODEL(model, "tau2.bfun");
    ImageSequence probe = make_cue_scene(CueProbeKind::moving_scene);
    Tensor x = probe.frame_tensor(2);
    Tensor cond({1, 2, 32, 32});
    std::copy(probe.frame(1), probe.frame(1) + 32 * 32, cond.ptr(0, 0, 0, 0));
    std::copy(probe.frame(0), probe.frame(0) + 32 * 32, cond.ptr(0, 1, 0, 0));

    double psnr_y = 0.0, psnr_c = 0.0;
    const int draws = 3;
    for (int d = 0; d < draws; ++d) {
        Rng rng(321, static_cast<uint64_t>(d));
        Tensor y = x;
        const float sigma = static_cast<float>(sigma_for_input_psnr(-10.0));
        for (int64_t i = 0; i < y.numel(); ++i) {
            y[i] += sigma * rng.normal_f();
        }
        CueDecomposition cd = cue_decomposition(model, x, y, cond);
        psnr_y += psnr(x, cd.xhat_y) / draws;
        psnr_c += psnr(x, cd.xhat_c) / draws;
    }
    INFO("at -10 dB input: conditioning-only ", psnr_c, " dB vs observation-only ", psnr_y, " dB");
    CHECK(psnr_c > psnr_y);
}

TEST_CASE("trained models: identity-line behavior and per-point tau ordering") {
    REQUIRE_TRAINED_MODEL(t0, "tau0.bfun");
    REQUIRE_TRAINED_MODEL(t2, "tau2.bfun");
    LeavesConfig cfg;
    GeneratedDataset gd = generate_dataset(322, 60, cfg);

    // near-clean observations stay near the identity line
    auto curve0 = aggregate_curve(performance_points(t0, gd.data, {sigma_for_input_psnr(40.0)}, 20, 323));
    INFO("tau0 at 40 dB input: output ", curve0[0].mean_output_psnr, " dB (input ", curve0[0].mean_input_psnr, ")");
    CHECK(curve0[0].mean_output_psnr >= curve0[0].mean_input_psnr - 1.0);

    // the conditional curve sits above the unconditional one at every
    // low-input grid point
    for (double db : {0.0, 5.0, 10.0}) {
        const double sigma = sigma_for_input_psnr(db);
        auto c0 = aggregate_curve(performance_points(t0, gd.data, {sigma}, 20, 324));
        auto c2 = aggregate_curve(performance_points(t2, gd.data, {sigma}, 20, 324));
        INFO("at ", db, " dB input: tau0 ", c0[0].mean_output_psnr, " dB, tau2 ", c2[0].mean_output_psnr, " dB");
        CHECK(c2[0].mean_output_psnr >= c0[0].mean_output_psnr);
    }
}

TEST_CASE("performance points cover the grid with finite values") {
    DenoiserModel model = small_model(1);
    LeavesConfig lcfg;
    lcfg.image_size = 16;
    GeneratedDataset gd = generate_dataset(5, 20, lcfg);
    auto points = performance_points(model, gd.data, {1.0, 0.1}, 2, 9);
    CHECK(points.size() == 4);
    for (const auto& p : points) {
        CHECK(std::isfinite(p.input_psnr));
        CHECK(std::isfinite(p.output_psnr));
    }
    auto curve = aggregate_curve(points);
    CHECK(curve.size() == 2);
    CHECK(curve[0].n == 2);
    CHECK(curve[0].mean_input_psnr < curve[1].mean_input_psnr);
}
