#include "vpred/leaves.hpp"

#include <algorithm>
#include <cmath>

namespace vpred {

namespace {

// Cholesky factor of a symmetric positive-definite matrix (row-major n x n).
// Returns false if a pivot goes non-positive.
bool cholesky(std::vector<double>& m, int n) {
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = m[static_cast<size_t>(i) * n + j];
            for (int k = 0; k < j; ++k) {
                s -= m[static_cast<size_t>(i) * n + k] * m[static_cast<size_t>(j) * n + k];
            }
            if (i == j) {
                if (s <= 0.0) {
                    return false;
                }
                m[static_cast<size_t>(i) * n + j] = std::sqrt(s);
            } else {
                m[static_cast<size_t>(i) * n + j] = s / m[static_cast<size_t>(j) * n + j];
            }
        }
        for (int j = i + 1; j < n; ++j) {
            m[static_cast<size_t>(i) * n + j] = 0.0;
        }
    }
    return true;
}

// One GP draw with RBF kernel: amplitude^2 * exp(-(dt)^2 / (2 l^2)), plus a
// constant mean. Jitter grows on Cholesky failure.
std::vector<double> gp_sample(Rng& rng, int n, double amplitude, double length, double mean) {
    std::vector<double> cov(static_cast<size_t>(n) * n);
    double jitter = 1e-8;
    for (int attempt = 0; attempt < 8; ++attempt) {
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                const double dt = i - j;
                cov[static_cast<size_t>(i) * n + j] =
                    amplitude * amplitude * std::exp(-dt * dt / (2.0 * length * length)) + (i == j ? jitter : 0.0);
            }
        }
        if (cholesky(cov, n)) {
            break;
        }
        jitter *= 10.0;
        require(attempt < 7, "gp_sample: covariance not positive definite after jitter escalation");
    }
    std::vector<double> z(static_cast<size_t>(n));
    for (auto& v : z) {
        v = rng.normal();
    }
    std::vector<double> out(static_cast<size_t>(n), mean);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k <= i; ++k) {
            out[static_cast<size_t>(i)] += cov[static_cast<size_t>(i) * n + k] * z[static_cast<size_t>(k)];
        }
    }
    return out;
}

}  // namespace

std::vector<double> sample_gp_trajectory(Rng& rng, int n, double amplitude, double length, double mean) {
    require(n >= 1 && amplitude >= 0.0 && length > 0.0, "sample_gp_trajectory: bad parameters");
    return gp_sample(rng, n, amplitude, length, mean);
}

namespace {

Disk sample_disk(Rng& rng, const LeavesConfig& cfg, double background) {
    Disk d;
    d.depth = rng.uniform(cfg.depth_min, cfg.depth_max);
    d.radius = cfg.radius_ref / d.depth;
    do {
        d.luminance = rng.uniform();
    } while (std::abs(d.luminance - background) < cfg.min_contrast);

    const double length = cfg.gp_length0 * d.depth;
    const double amplitude = cfg.gp_amplitude;  // constant: speed ~ amplitude/length ~ 1/depth
    const double size = cfg.image_size;
    const double mx = rng.uniform(0.2 * size, 0.8 * size);
    const double my = rng.uniform(0.2 * size, 0.8 * size);
    const auto xs = gp_sample(rng, cfg.frames, amplitude, length, mx);
    const auto ys = gp_sample(rng, cfg.frames, amplitude, length, my);
    d.centers.resize(static_cast<size_t>(cfg.frames));
    for (int t = 0; t < cfg.frames; ++t) {
        d.centers[static_cast<size_t>(t)] = {xs[static_cast<size_t>(t)], ys[static_cast<size_t>(t)]};
    }
    return d;
}

}  // namespace

LeavesConfig LeavesConfig::from_json(const nlohmann::json& cfg) {
    static const std::vector<std::string> allowed = {
        "image_size",   "frames",     "depth_min",          "depth_max",  "radius_ref", "gp_length0",
        "gp_amplitude", "min_contrast", "occlusion_fraction", "supersample", "train_fraction"};
    for (auto it = cfg.begin(); it != cfg.end(); ++it) {
        require(std::find(allowed.begin(), allowed.end(), it.key()) != allowed.end(),
                "leaves config: unknown key \"" + it.key() + "\"");
    }
    LeavesConfig lc;
    lc.image_size = cfg.value("image_size", lc.image_size);
    lc.frames = cfg.value("frames", lc.frames);
    lc.depth_min = cfg.value("depth_min", lc.depth_min);
    lc.depth_max = cfg.value("depth_max", lc.depth_max);
    lc.radius_ref = cfg.value("radius_ref", lc.radius_ref);
    lc.gp_length0 = cfg.value("gp_length0", lc.gp_length0);
    lc.gp_amplitude = cfg.value("gp_amplitude", lc.gp_amplitude);
    lc.min_contrast = cfg.value("min_contrast", lc.min_contrast);
    lc.occlusion_fraction = cfg.value("occlusion_fraction", lc.occlusion_fraction);
    lc.supersample = cfg.value("supersample", lc.supersample);
    lc.train_fraction = cfg.value("train_fraction", lc.train_fraction);
    lc.validate();
    return lc;
}

nlohmann::json LeavesConfig::to_json() const {
    return nlohmann::json{{"image_size", image_size},
                          {"frames", frames},
                          {"depth_min", depth_min},
                          {"depth_max", depth_max},
                          {"radius_ref", radius_ref},
                          {"gp_length0", gp_length0},
                          {"gp_amplitude", gp_amplitude},
                          {"min_contrast", min_contrast},
                          {"occlusion_fraction", occlusion_fraction},
                          {"supersample", supersample},
                          {"train_fraction", train_fraction}};
}

void LeavesConfig::validate() const {
    require(image_size >= 8 && frames >= 1, "leaves config: image_size >= 8 and frames >= 1 required");
    require(depth_min > 0.0 && depth_max > depth_min, "leaves config: bad depth range");
    require(radius_ref > 0.0 && gp_length0 > 0.0 && gp_amplitude >= 0.0, "leaves config: bad kernel constants");
    require(min_contrast >= 0.0 && min_contrast < 0.5, "leaves config: min_contrast in [0, 0.5) required");
    require(occlusion_fraction > 0.0 && occlusion_fraction <= 1.0, "leaves config: bad occlusion fraction");
    require(supersample >= 1, "leaves config: supersample >= 1 required");
    require(train_fraction > 0.0 && train_fraction < 1.0, "leaves config: bad train fraction");
}

DiskScene sample_scene(Rng& rng, const LeavesConfig& cfg) {
    cfg.validate();
    DiskScene scene;
    scene.frames = cfg.frames;
    scene.image_size = cfg.image_size;
    scene.background = rng.uniform();
    scene.a = sample_disk(rng, cfg, scene.background);
    scene.b = sample_disk(rng, cfg, scene.background);
    return scene;
}

namespace {

// Paint one disk over the pixel buffer: coverage-weighted mix at cfg
// supersampling. Painter's order is the caller's concern.
void paint_disk(std::vector<float>& pixels, int size, int ss, const std::array<double, 2>& center,
                double radius, double luminance) {
    const double r2 = radius * radius;
    const int x_lo = std::max(0, static_cast<int>(std::floor(center[0] - radius - 1)));
    const int x_hi = std::min(size - 1, static_cast<int>(std::ceil(center[0] + radius + 1)));
    const int y_lo = std::max(0, static_cast<int>(std::floor(center[1] - radius - 1)));
    const int y_hi = std::min(size - 1, static_cast<int>(std::ceil(center[1] + radius + 1)));
    // pixel (px,py) covers [px-0.5, px+0.5) x [py-0.5, py+0.5): integer
    // coordinates are pixel centers
    const double inv_ss = 1.0 / ss;
    for (int py = y_lo; py <= y_hi; ++py) {
        for (int px = x_lo; px <= x_hi; ++px) {
            int inside = 0;
            for (int sy = 0; sy < ss; ++sy) {
                const double yy = py - 0.5 + (sy + 0.5) * inv_ss - center[1];
                for (int sx = 0; sx < ss; ++sx) {
                    const double xx = px - 0.5 + (sx + 0.5) * inv_ss - center[0];
                    if (xx * xx + yy * yy <= r2) {
                        inside++;
                    }
                }
            }
            if (inside > 0) {
                const double cov = static_cast<double>(inside) / (ss * ss);
                float& p = pixels[static_cast<size_t>(py) * size + px];
                p = static_cast<float>((1.0 - cov) * p + cov * luminance);
            }
        }
    }
}

}  // namespace

ImageSequence render_sequence(const DiskScene& scene, const LeavesConfig& cfg) {
    ImageSequence seq;
    seq.t = scene.frames;
    seq.h = scene.image_size;
    seq.w = scene.image_size;
    seq.source_tag = "leaves";
    seq.pixels.assign(static_cast<size_t>(seq.t) * seq.h * seq.w, static_cast<float>(scene.background));

    // painter's algorithm: smaller projected disk first, larger on top
    const Disk& under = scene.smaller();
    const Disk& over = scene.larger();
    for (int t = 0; t < seq.t; ++t) {
        std::vector<float> frame(seq.pixels.begin() + static_cast<int64_t>(t) * seq.h * seq.w,
                                 seq.pixels.begin() + static_cast<int64_t>(t + 1) * seq.h * seq.w);
        paint_disk(frame, scene.image_size, cfg.supersample, under.centers[static_cast<size_t>(t)],
                   under.radius, under.luminance);
        paint_disk(frame, scene.image_size, cfg.supersample, over.centers[static_cast<size_t>(t)],
                   over.radius, over.luminance);
        std::copy(frame.begin(), frame.end(), seq.frame(t));
    }

    seq.meta = {{"background", scene.background},
                {"depths", {scene.a.depth, scene.b.depth}},
                {"radii", {scene.a.radius, scene.b.radius}},
                {"luminances", {scene.a.luminance, scene.b.luminance}}};
    return seq;
}

double occlusion_fraction(const DiskScene& scene, int frame_index) {
    const Disk& small = scene.smaller();
    const Disk& large = scene.larger();
    const auto& cs = small.centers[static_cast<size_t>(frame_index)];
    const auto& cl = large.centers[static_cast<size_t>(frame_index)];

    // boolean masks at 4x resolution over the smaller disk's bounding box
    const int res = 4;
    const double step = 1.0 / res;
    const int n_steps = static_cast<int>(std::ceil(2.0 * (small.radius + 1.0) * res));
    const double x0 = cs[0] - small.radius - 1.0;
    const double y0 = cs[1] - small.radius - 1.0;
    const double rs2 = small.radius * small.radius;
    const double rl2 = large.radius * large.radius;
    int64_t in_small = 0, in_both = 0;
    for (int iy = 0; iy < n_steps; ++iy) {
        const double y = y0 + (iy + 0.5) * step;
        for (int ix = 0; ix < n_steps; ++ix) {
            const double x = x0 + (ix + 0.5) * step;
            const double ds2 = (x - cs[0]) * (x - cs[0]) + (y - cs[1]) * (y - cs[1]);
            if (ds2 > rs2) {
                continue;
            }
            in_small++;
            const double dl2 = (x - cl[0]) * (x - cl[0]) + (y - cl[1]) * (y - cl[1]);
            if (dl2 <= rl2) {
                in_both++;
            }
        }
    }
    return in_small == 0 ? 0.0 : static_cast<double>(in_both) / static_cast<double>(in_small);
}

bool has_occlusion_event(const DiskScene& scene, const LeavesConfig& cfg) {
    for (int t = 0; t < scene.frames; ++t) {
        if (occlusion_fraction(scene, t) >= cfg.occlusion_fraction) {
            return true;
        }
    }
    return false;
}

GeneratedDataset generate_dataset(uint64_t seed, int n_sequences, const LeavesConfig& cfg) {
    require(n_sequences >= 1, "generate_dataset: n must be >= 1");
    cfg.validate();

    GeneratedDataset out;
    constexpr int kMaxAttemptsPerSequence = 4096;
    int64_t total_attempts = 0;
    for (int i = 0; i < n_sequences; ++i) {
        bool accepted = false;
        for (int attempt = 0; attempt < kMaxAttemptsPerSequence; ++attempt) {
            total_attempts++;
            // one RNG stream per (sequence, attempt): deterministic under any
            // parallel execution order
            Rng rng(seed, static_cast<uint64_t>(i) * kMaxAttemptsPerSequence + attempt);
            DiskScene scene = sample_scene(rng, cfg);
            if (!has_occlusion_event(scene, cfg)) {
                continue;
            }
            out.scenes.push_back(scene);
            out.data.sequences.push_back(render_sequence(scene, cfg));
            accepted = true;
            break;
        }
        require(accepted, "generate_dataset: rejection rate too high; config is pathological");
        if (total_attempts > 100 * static_cast<int64_t>(i + 1) + 1000) {
            fail(strfmt("generate_dataset: rejection rate >99%% (%lld attempts for %d sequences)",
                        static_cast<long long>(total_attempts), i + 1));
        }
    }

    const int n_train = static_cast<int>(std::lround(cfg.train_fraction * n_sequences));
    for (int i = 0; i < n_sequences; ++i) {
        (i < n_train ? out.data.train_indices : out.data.test_indices).push_back(i);
    }
    out.data.metadata = {{"source", "leaves"},
                         {"seed", seed},
                         {"n_sequences", n_sequences},
                         {"image_size", cfg.image_size},
                         {"frames", cfg.frames},
                         {"depth_range", {cfg.depth_min, cfg.depth_max}},
                         {"radius_ref", cfg.radius_ref},
                         {"gp_length0", cfg.gp_length0},
                         {"gp_amplitude", cfg.gp_amplitude},
                         {"min_contrast", cfg.min_contrast},
                         {"occlusion_fraction", cfg.occlusion_fraction},
                         {"supersample", cfg.supersample},
                         {"train_fraction", cfg.train_fraction}};
    return out;
}

ImageSequence make_cue_scene(CueProbeKind kind, int image_size) {
    DiskScene scene;
    scene.frames = 3;
    scene.image_size = image_size;
    scene.background = 0.15;
    scene.a.radius = 6.0;
    scene.a.depth = 2.0;
    scene.a.luminance = 0.85;
    scene.b.radius = 9.0;
    scene.b.depth = 4.0 / 3.0;
    scene.b.luminance = 0.5;

    const double s = image_size / 32.0;
    if (kind == CueProbeKind::static_scene) {
        for (int k = 0; k < 3; ++k) {
            scene.a.centers.push_back({10.0 * s, 12.0 * s});
            scene.b.centers.push_back({22.0 * s, 20.0 * s});
        }
    } else {
        // brisk crossing paths, partially occluding by the target frame
        for (int k = 0; k < 3; ++k) {
            scene.a.centers.push_back({(8.0 + 4.0 * k) * s, (10.0 + 2.0 * k) * s});
            scene.b.centers.push_back({(26.0 - 4.0 * k) * s, (20.0 - 1.5 * k) * s});
        }
    }

    LeavesConfig rcfg;
    rcfg.image_size = image_size;
    rcfg.frames = 3;
    ImageSequence seq = render_sequence(scene, rcfg);
    seq.source_tag = kind == CueProbeKind::static_scene ? "cue:static" : "cue:moving";
    return seq;
}

Probe make_probe(double dr, const ProbeConfig& cfg) {
    require(std::abs(dr) <= cfg.max_abs_dr,
            strfmt("make_probe: |dr| = %g exceeds configured max %g", std::abs(dr), cfg.max_abs_dr));

    ProbeSpec spec;
    spec.radius_left = cfg.base_radius - dr / 2.0;
    spec.radius_right = cfg.base_radius + dr / 2.0;
    spec.lum_left = cfg.lum_left;
    spec.lum_right = cfg.lum_right;
    spec.background = cfg.background;
    spec.dr = dr;
    spec.true_label = dr > 0 ? 1 : (dr < 0 ? -1 : 0);
    spec.image_size = cfg.image_size;
    require(spec.radius_left >= 2.0 && spec.radius_right >= 2.0, "make_probe: radius too small for canvas");

    const double cx = (cfg.image_size - 1) / 2.0;
    const double cy = (cfg.image_size - 1) / 2.0;
    const double d_target = spec.radius_left + spec.radius_right - cfg.overlap;
    require(d_target > std::abs(spec.radius_left - spec.radius_right) + 1.0,
            "make_probe: overlap too deep, one disk would contain the other");
    for (int k = 0; k < 3; ++k) {
        const double dist = d_target + (2 - k) * 2.0 * cfg.speed;
        spec.center_left[static_cast<size_t>(k)] = {cx - dist / 2.0, cy};
        spec.center_right[static_cast<size_t>(k)] = {cx + dist / 2.0, cy};
        require(spec.center_left[static_cast<size_t>(k)][0] > 0.0 &&
                    spec.center_right[static_cast<size_t>(k)][0] < cfg.image_size - 1.0,
                "make_probe: geometry infeasible within canvas");
    }

    // 3-frame scene rendered with the same painter as the dataset
    DiskScene scene;
    scene.frames = 3;
    scene.image_size = cfg.image_size;
    scene.background = cfg.background;
    scene.a.radius = spec.radius_left;
    scene.a.depth = 1.0;  // probe depths are implied by radii; unused by the renderer
    scene.a.luminance = cfg.lum_left;
    scene.b.radius = spec.radius_right;
    scene.b.depth = 1.0;
    scene.b.luminance = cfg.lum_right;
    for (int k = 0; k < 3; ++k) {
        scene.a.centers.push_back(spec.center_left[static_cast<size_t>(k)]);
        scene.b.centers.push_back(spec.center_right[static_cast<size_t>(k)]);
    }

    LeavesConfig rcfg;
    rcfg.image_size = cfg.image_size;
    rcfg.frames = 3;

    Probe p;
    p.seq = render_sequence(scene, rcfg);
    p.seq.source_tag = "probe";
    p.seq.meta["dr"] = dr;
    p.spec = spec;
    return p;
}

}  // namespace vpred
