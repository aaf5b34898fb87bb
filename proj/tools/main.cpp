#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "vpred/analysis.hpp"
#include "vpred/gmix.hpp"
#include "vpred/leaves.hpp"
#include "vpred/report.hpp"
#include "vpred/sampler.hpp"
#include "vpred/selftest.hpp"
#include "vpred/train.hpp"
#include "vpred/unet.hpp"
#include "vpred/vseq.hpp"

using namespace vpred;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

json base_manifest(const std::string& subcommand) {
    return json{{"tool", "vpred"}, {"version", kVersion}, {"subcommand", subcommand},
                {"formats", {{"vseq", 1}, {"bfun", 1}}}};
}

std::vector<double> parse_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) {
            out.push_back(std::stod(tok));
        }
    }
    require(!out.empty(), "empty numeric list: " + csv);
    return out;
}

Tensor conditioning_from_sequence(const ImageSequence& seq, int last_frame, int tau) {
    require(last_frame + 1 >= tau, "not enough frames before the conditioning point");
    Tensor cond({1, std::max(tau, 1), seq.h, seq.w});
    for (int k = 0; k < tau; ++k) {
        const float* src = seq.frame(last_frame - k);
        std::copy(src, src + static_cast<int64_t>(seq.h) * seq.w, cond.ptr(0, k, 0, 0));
    }
    return cond;
}

ImageSequence tensor_to_sequence(const Tensor& frames, const std::string& tag) {
    ImageSequence s;
    s.t = frames.dim(0) * frames.dim(1);
    s.h = frames.dim(2);
    s.w = frames.dim(3);
    s.source_tag = tag;
    s.pixels.resize(static_cast<size_t>(frames.numel()));
    for (int64_t i = 0; i < frames.numel(); ++i) {
        s.pixels[static_cast<size_t>(i)] = std::clamp(frames[i], 0.0f, 1.0f);
    }
    return s;
}

int cmd_gen_leaves(int n, uint64_t seed, const std::string& out, const std::string& config_path) {
    LeavesConfig lc;
    if (!config_path.empty()) {
        std::ifstream is(config_path);
        require(is.good(), "cannot open config " + config_path);
        lc = LeavesConfig::from_json(json::parse(is));
    }
    GeneratedDataset gd = generate_dataset(seed, n, lc);
    save_dataset(gd.data, out);

    json manifest = base_manifest("gen-leaves");
    manifest["n"] = n;
    manifest["seed"] = seed;
    manifest["out"] = out;
    manifest["config"] = lc.to_json();
    write_manifest(std::filesystem::path(out).parent_path().string().empty()
                       ? "."
                       : std::filesystem::path(out).parent_path().string(),
                   manifest);
    printf("wrote %d sequences (%d train / %d test) to %s\n", gd.data.size(),
           static_cast<int>(gd.data.train_indices.size()), static_cast<int>(gd.data.test_indices.size()),
           out.c_str());
    return 0;
}

int cmd_train(const std::string& data, int tau, int epochs, uint64_t seed, const std::string& out,
              int base_channels, float lr, int batch, int eval_examples, const std::string& log_path,
              bool prediction_only, const std::string& init_from) {
    SequenceDataset ds = load_dataset(data);
    ModelArch arch;
    arch.tau = tau;
    arch.base_channels = base_channels;
    arch.prediction_only = prediction_only;
    DenoiserModel model = init_from.empty() ? DenoiserModel(arch, seed) : load_model(init_from, &arch);

    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.lr = lr;
    cfg.batch_size = batch;
    cfg.eval_examples = eval_examples;
    cfg.nan_checkpoint_path = out + ".nan";

    std::vector<std::vector<double>> log_rows;
    TrainResult res = train_model(model, ds, cfg, [&](const EpochStats& s) {
        printf("epoch %4d  train mse %.6f  test mse %.6f  lr %.2e  halvings %d\n", s.epoch, s.train_mse,
               s.test_mse, static_cast<double>(s.lr), s.lr_halvings);
        fflush(stdout);
        log_rows.push_back({static_cast<double>(s.epoch), s.train_mse, s.test_mse,
                            static_cast<double>(s.lr), static_cast<double>(s.lr_halvings)});
        save_model(model, out + ".partial");  // resumable snapshot of the latest epoch
    });

    save_model(model, out);
    std::filesystem::remove(out + ".partial");
    if (!log_path.empty()) {
        write_csv(log_path, {"epoch", "train_mse", "test_mse", "lr", "lr_halvings"}, log_rows);
    }

    json manifest = base_manifest("train");
    manifest["data"] = data;
    manifest["tau"] = tau;
    manifest["epochs"] = epochs;
    manifest["seed"] = seed;
    manifest["base_channels"] = base_channels;
    manifest["lr"] = lr;
    manifest["batch_size"] = batch;
    manifest["prediction_only"] = prediction_only;
    manifest["init_from"] = init_from;
    manifest["out"] = out;
    write_manifest(std::filesystem::path(out).parent_path().string().empty()
                       ? "."
                       : std::filesystem::path(out).parent_path().string(),
                   manifest);
    printf("saved model to %s (final test mse %.6f)\n", out.c_str(), res.curves.back().test_mse);
    return 0;
}

int cmd_denoise(const std::string& model_path, const std::string& data, double sigma, int max_examples,
                const std::string& out_dir) {
    DenoiserModel model = load_model(model_path);
    SequenceDataset ds = load_dataset(data);
    std::filesystem::create_directories(out_dir);

    auto points = performance_points(model, ds, {sigma}, max_examples, 1234);
    std::vector<std::vector<double>> rows;
    std::vector<ImageSequence> frames;
    double mean_in = 0.0, mean_out = 0.0;
    for (const auto& p : points) {
        rows.push_back({p.sigma, static_cast<double>(p.seq_id), p.input_psnr, p.output_psnr});
        mean_in += p.input_psnr;
        mean_out += p.output_psnr;
    }
    mean_in /= static_cast<double>(points.size());
    mean_out /= static_cast<double>(points.size());
    write_csv(out_dir + "/denoise_report.csv", {"sigma", "seq_id", "input_psnr_db", "output_psnr_db"}, rows);

    // a few example triples for visual inspection
    const int tau = model.arch().tau;
    for (size_t i = 0; i < std::min<size_t>(4, ds.test_indices.size()); ++i) {
        const ImageSequence& seq = ds.seq(ds.test_indices[i]);
        Rng rng(99, i);
        TrainExample ex = make_example(seq, tau, model.arch(), sigma, rng);
        Tensor xhat = model.forward(ex.input);
        ImageSequence triple;
        triple.t = 3;
        triple.h = seq.h;
        triple.w = seq.w;
        triple.source_tag = "denoise:target,noisy,estimate";
        auto push = [&](const float* p) {
            for (int64_t j = 0; j < static_cast<int64_t>(seq.h) * seq.w; ++j) {
                triple.pixels.push_back(std::clamp(p[j], 0.0f, 1.0f));
            }
        };
        push(ex.target.data());
        push(ex.input.data());  // channel 0 is the noisy frame
        push(xhat.data());
        frames.push_back(std::move(triple));
    }
    save_sequences(frames, out_dir + "/examples.vseq", json{{"layout", "target,noisy,estimate"}});

    json manifest = base_manifest("denoise");
    manifest["model"] = model_path;
    manifest["data"] = data;
    manifest["sigma"] = sigma;
    manifest["examples"] = max_examples;
    write_manifest(out_dir, manifest);
    printf("sigma %.4f: mean input %.2f dB -> output %.2f dB over %zu examples\n", sigma, mean_in, mean_out,
           points.size());
    return 0;
}

int cmd_sample(const std::string& model_path, const std::string& cond_path, int index, int n_samples,
               const SamplerConfig& scfg, const std::string& out_dir) {
    DenoiserModel model = load_model(model_path);
    SequenceDataset ds = load_dataset(cond_path);
    require(index >= 0 && index < ds.size(), strfmt("sample: index %d out of %d sequences", index, ds.size()));
    const int tau = model.arch().tau;
    const ImageSequence& seq = ds.seq(index);
    Tensor cond = conditioning_from_sequence(seq, tau - 1 >= 0 ? tau - 1 : 0, tau);

    std::filesystem::create_directories(out_dir);
    std::vector<ImageSequence> samples;
    std::vector<ImageSequence> trajectories;
    int flagged = 0;
    for (int s = 0; s < n_samples; ++s) {
        Rng chain(scfg.seed, static_cast<uint64_t>(s));
        Tensor y0;
        const Tensor* y0p = nullptr;
        if (tau == 0) {
            y0 = Tensor({1, 1, seq.h, seq.w});
            for (int64_t i = 0; i < y0.numel(); ++i) {
                y0[i] = 0.5f + chain.normal_f();
            }
            y0p = &y0;
        }
        SampleResult r = sample_next_frame(model, cond, scfg, chain, y0p);
        if (!r.converged) {
            flagged++;
        }
        samples.push_back(tensor_to_sequence(r.frame, strfmt("sample:%d%s", s, r.converged ? "" : ":unconverged")));
        if (scfg.snapshot_every > 0 && !r.snapshots.empty()) {
            ImageSequence traj;
            traj.t = 0;
            traj.h = seq.h;
            traj.w = seq.w;
            traj.source_tag = strfmt("trajectory:%d", s);
            for (const auto& snap : r.snapshots) {
                for (int64_t i = 0; i < snap.numel(); ++i) {
                    traj.pixels.push_back(std::clamp(snap[i], 0.0f, 1.0f));
                }
                traj.t++;
            }
            trajectories.push_back(std::move(traj));
        }
    }
    save_sequences(samples, out_dir + "/samples.vseq",
                   json{{"model", model_path}, {"cond", cond_path}, {"index", index}});
    if (!trajectories.empty()) {
        save_sequences(trajectories, out_dir + "/trajectories.vseq", json{{"snapshot_every", scfg.snapshot_every}});
    }

    json manifest = base_manifest("sample");
    manifest["model"] = model_path;
    manifest["cond"] = cond_path;
    manifest["index"] = index;
    manifest["n_samples"] = n_samples;
    manifest["beta"] = scfg.beta;
    manifest["sigma0"] = scfg.sigma0;
    manifest["alpha_init"] = scfg.alpha_init;
    manifest["alpha_ratio"] = scfg.alpha_ratio;
    manifest["max_iters"] = scfg.max_iters;
    manifest["seed"] = scfg.seed;
    write_manifest(out_dir, manifest);
    printf("wrote %d samples to %s (%d flagged unconverged)\n", n_samples, out_dir.c_str(), flagged);
    return 0;
}

int cmd_rollout(const std::string& model_path, const std::string& data, int index, int steps,
                const std::string& mode_str, const SamplerConfig& scfg, const std::string& out_dir) {
    DenoiserModel model = load_model(model_path);
    SequenceDataset ds = load_dataset(data);
    require(index >= 0 && index < ds.size(), "rollout: sequence index out of range");
    const int tau = model.arch().tau;

    // seed window: the first tau frames of the chosen sequence
    const ImageSequence& src = ds.seq(index);
    ImageSequence seed_frames;
    seed_frames.t = std::max(tau, 1);
    seed_frames.h = src.h;
    seed_frames.w = src.w;
    seed_frames.source_tag = "rollout-seed";
    seed_frames.pixels.assign(src.pixels.begin(),
                              src.pixels.begin() + static_cast<int64_t>(seed_frames.t) * src.h * src.w);

    const RolloutMode mode = mode_str == "one_step" ? RolloutMode::one_step : RolloutMode::sample;
    Rng rng(scfg.seed);
    ImageSequence out = rollout(model, seed_frames, steps, mode, scfg, rng);

    std::filesystem::create_directories(out_dir);
    save_sequences({out}, out_dir + "/rollout.vseq", json{{"mode", mode_str}, {"steps", steps}});
    json manifest = base_manifest("rollout");
    manifest["model"] = model_path;
    manifest["data"] = data;
    manifest["index"] = index;
    manifest["steps"] = steps;
    manifest["mode"] = mode_str;
    manifest["seed"] = scfg.seed;
    write_manifest(out_dir, manifest);
    printf("wrote %d-frame %s rollout to %s\n", out.t, mode_str.c_str(), out_dir.c_str());
    return 0;
}

int cmd_analyze_curve(const std::string& model_path, const std::string& data, const std::string& out_dir,
                      const std::string& db_grid, int examples) {
    DenoiserModel model = load_model(model_path);
    SequenceDataset ds = load_dataset(data);
    std::vector<double> sigmas;
    for (double db : parse_list(db_grid)) {
        sigmas.push_back(sigma_for_input_psnr(db));
    }
    auto points = performance_points(model, ds, sigmas, examples, 31);
    auto curve = aggregate_curve(points);

    std::filesystem::create_directories(out_dir);
    std::vector<std::vector<double>> rows;
    SvgSeries series{strfmt("tau=%d", model.arch().tau), "#1f77b4", {}};
    for (const auto& c : curve) {
        rows.push_back({c.sigma, c.mean_input_psnr, c.mean_output_psnr, static_cast<double>(c.n)});
        series.points.emplace_back(c.mean_input_psnr, c.mean_output_psnr);
    }
    write_csv(out_dir + "/curve.csv", {"sigma", "input_psnr_db", "output_psnr_db", "n"}, rows);
    write_svg_plot(out_dir + "/curve.svg", "Denoising performance", "input PSNR (dB)", "output PSNR (dB)",
                   {series}, true);

    json manifest = base_manifest("analyze-curve");
    manifest["model"] = model_path;
    manifest["data"] = data;
    manifest["db_grid"] = db_grid;
    manifest["examples_per_sigma"] = examples;
    write_manifest(out_dir, manifest);
    double slope = std::numeric_limits<double>::quiet_NaN();
    try {
        slope = fitted_slope(curve, 0.0, 30.0);
        printf("fitted slope over [0,30] dB: %.3f\n", slope);
    } catch (const Error&) {
        printf("fitted slope over [0,30] dB: not enough points\n");
    }
    return 0;
}

int cmd_analyze_filter(const std::string& model_path, const std::string& data, int index, int target_frame,
                       const std::string& pixel, double sigma, const std::string& out_dir) {
    DenoiserModel model = load_model(model_path);
    SequenceDataset ds = load_dataset(data);
    require(index >= 0 && index < ds.size(), "analyze filter: sequence index out of range");
    const int tau = model.arch().tau;
    const ImageSequence& seq = ds.seq(index);
    const int t = target_frame < 0 ? tau : target_frame;

    auto coords = parse_list(pixel);
    require(coords.size() == 2, "pixel must be \"i,j\"");
    const int pi = static_cast<int>(coords[0]), pj = static_cast<int>(coords[1]);

    Rng rng(17);
    TrainExample ex = make_example(seq, t, model.arch(), sigma, rng);
    Tensor weights = adaptive_filter(model, ex.input, pi, pj);

    std::filesystem::create_directories(out_dir);
    std::vector<std::vector<double>> rows;
    for (int ch = 0; ch < weights.dim(1); ++ch) {
        // per-map PGM normalized to [0,1] for quick viewing
        float lo = 0.0f, hi = 0.0f;
        for (int i = 0; i < seq.h * seq.w; ++i) {
            lo = std::min(lo, weights.ptr(0, ch, 0, 0)[i]);
            hi = std::max(hi, weights.ptr(0, ch, 0, 0)[i]);
        }
        const float span = std::max(hi - lo, 1e-12f);
        std::vector<float> norm(static_cast<size_t>(seq.h) * seq.w);
        for (size_t i = 0; i < norm.size(); ++i) {
            norm[i] = (weights.ptr(0, ch, 0, 0)[i] - lo) / span;
        }
        const std::string tag = ch == 0 ? "y" : strfmt("c%d", ch);
        save_pgm(out_dir + "/filter_" + tag + ".pgm", norm.data(), seq.h, seq.w);
        for (int y = 0; y < seq.h; ++y) {
            for (int x = 0; x < seq.w; ++x) {
                rows.push_back({static_cast<double>(ch), static_cast<double>(y), static_cast<double>(x),
                                static_cast<double>(weights.at(0, ch, y, x))});
            }
        }
    }
    write_csv(out_dir + "/filter.csv", {"input_frame", "row", "col", "weight"}, rows);

    json manifest = base_manifest("analyze-filter");
    manifest["model"] = model_path;
    manifest["data"] = data;
    manifest["index"] = index;
    manifest["target_frame"] = t;
    manifest["pixel"] = {pi, pj};
    manifest["sigma"] = sigma;
    write_manifest(out_dir, manifest);
    printf("wrote adaptive filter maps for pixel (%d,%d) to %s\n", pi, pj, out_dir.c_str());
    return 0;
}

int cmd_analyze_cues(const std::string& model_path, const std::string& out_dir, const std::string& db_grid,
                     int draws) {
    DenoiserModel model = load_model(model_path);
    require(model.arch().tau >= 1, "analyze cues: needs a conditional model");
    std::filesystem::create_directories(out_dir);

    json summary = base_manifest("analyze-cues");
    summary["model"] = model_path;
    summary["db_grid"] = db_grid;
    summary["draws"] = draws;

    for (CueProbeKind kind : {CueProbeKind::static_scene, CueProbeKind::moving_scene}) {
        const char* name = kind == CueProbeKind::static_scene ? "static" : "moving";
        ImageSequence probe = make_cue_scene(kind);
        const int tau = model.arch().tau;
        Tensor x = probe.frame_tensor(2);
        Tensor cond = conditioning_from_sequence(probe, 1, tau);

        std::vector<CuePoint> curve;
        std::vector<std::vector<double>> rows;
        for (double db : parse_list(db_grid)) {
            const double sigma = sigma_for_input_psnr(db);
            CuePoint p;
            p.input_psnr = db;
            for (int d = 0; d < draws; ++d) {
                Rng rng(41, static_cast<uint64_t>(d));
                Tensor y = x;
                for (int64_t i = 0; i < y.numel(); ++i) {
                    y[i] += static_cast<float>(sigma) * rng.normal_f();
                }
                CueDecomposition cd = cue_decomposition(model, x, y, cond);
                p.psnr_full += psnr(x, cd.xhat) / draws;
                p.psnr_y += psnr(x, cd.xhat_y) / draws;
                p.psnr_c += psnr(x, cd.xhat_c) / draws;
            }
            curve.push_back(p);
            rows.push_back({db, p.psnr_full, p.psnr_y, p.psnr_c});
        }
        write_csv(strfmt("%s/cues_%s.csv", out_dir.c_str(), name),
                  {"input_psnr_db", "psnr_full", "psnr_y_only", "psnr_c_only"}, rows);
        SvgSeries s_full{"full", "#2ca02c", {}}, s_y{"observation only", "#ff7f0e", {}},
            s_c{"conditioning only", "#1f77b4", {}};
        for (const auto& p : curve) {
            s_full.points.emplace_back(p.input_psnr, p.psnr_full);
            s_y.points.emplace_back(p.input_psnr, p.psnr_y);
            s_c.points.emplace_back(p.input_psnr, p.psnr_c);
        }
        write_svg_plot(strfmt("%s/cues_%s.svg", out_dir.c_str(), name),
                       strfmt("Cue combination (%s probe)", name), "input PSNR (dB)", "PSNR (dB)",
                       {s_full, s_y, s_c});
        auto crossing = cue_crossing_psnr(curve);
        summary[strfmt("crossing_%s_db", name)] = crossing ? json(*crossing) : json();
        printf("%s probe: crossing at %s dB\n", name, crossing ? strfmt("%.2f", *crossing).c_str() : "none");
    }
    write_manifest(out_dir, summary);
    return 0;
}

int cmd_analyze_psycho(const std::string& model_path, const std::string& out_dir, const std::string& dr_list,
                       int n_samples, const SamplerConfig& scfg) {
    DenoiserModel model = load_model(model_path);
    std::filesystem::create_directories(out_dir);

    ProbeConfig pcfg;
    auto data = run_psychometric(model, parse_list(dr_list), n_samples, pcfg, scfg, scfg.seed);
    PsychometricFit fit = fit_logistic(data);

    std::vector<std::vector<double>> rows;
    SvgSeries freq{"right-occlusion frequency", "#1f77b4", {}}, fitted{"logistic fit", "#ff7f0e", {}};
    for (size_t i = 0; i < data.dr.size(); ++i) {
        const double f = static_cast<double>(data.n_right[i]) / data.n_total[i];
        rows.push_back({data.dr[i], f, static_cast<double>(data.n_right[i]),
                        static_cast<double>(data.n_undecided[i]), static_cast<double>(data.n_total[i])});
        freq.points.emplace_back(data.dr[i], f);
    }
    for (double dr = data.dr.front(); dr <= data.dr.back() + 1e-9; dr += 0.25) {
        fitted.points.emplace_back(dr, logistic(dr, fit.mu, fit.scale));
    }
    write_csv(out_dir + "/psychometric.csv", {"dr_px", "freq_right", "n_right", "n_undecided", "n_total"}, rows);
    write_svg_plot(out_dir + "/psychometric.svg", "Occlusion decisions vs radius difference",
                   "radius difference (px)", "right-occlusion frequency", {freq, fitted});

    json manifest = base_manifest("analyze-psycho");
    manifest["model"] = model_path;
    manifest["dr_list"] = dr_list;
    manifest["n_samples"] = n_samples;
    manifest["seed"] = scfg.seed;
    manifest["beta"] = scfg.beta;
    manifest["fit"] = {{"mu", fit.mu}, {"scale", fit.scale}, {"loglik", fit.loglik},
                       {"flagged_undecided", fit.flagged_undecided}};
    write_manifest(out_dir, manifest);
    printf("logistic fit: mu=%.3f scale=%.3f loglik=%.2f%s\n", fit.mu, fit.scale, fit.loglik,
           fit.flagged_undecided ? " (flagged: >20% undecided)" : "");
    return 0;
}

int cmd_demo1d(const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    GaussianMixture1D gm = GaussianMixture1D::bimodal_halves();
    const auto sigma_grid = default_sigma_grid();

    // smoothed density, score and optimal denoising step across noise levels
    std::vector<std::vector<double>> density_rows;
    for (double sigma : {0.05, 0.1, 0.2, 0.4, 0.8, 1.6}) {
        for (int i = 0; i <= 600; ++i) {
            const double y = -3.0 + 6.0 * i / 600.0;
            const double lp = noisy_logpdf(gm, y, sigma);
            const double sc = noisy_score(gm, y, sigma);
            density_rows.push_back({y, sigma, std::exp(lp), sc, mmse_denoise(gm, y, sigma)});
        }
    }
    write_csv(out_dir + "/bimodal_density.csv", {"y", "sigma", "noisy_pdf", "score", "denoised"}, density_rows);

    // blind universal denoiser residual with the MAP sigma plug-in
    std::vector<std::vector<double>> resid_rows;
    for (int i = 0; i <= 600; ++i) {
        const double y = -3.0 + 6.0 * i / 600.0;
        BlindDenoiseResult b = blind_denoise_map(gm, y, sigma_grid);
        resid_rows.push_back({y, b.sigma_hat, b.x_hat, b.x_hat - y});
    }
    write_csv(out_dir + "/blind_residual.csv", {"y", "sigma_hat", "denoised", "residual"}, resid_rows);

    // the deterministic trajectory from y0 = -2 with alpha = 0.5
    Sampler1DConfig cfg;
    cfg.alpha = 0.5;
    cfg.beta = 1.0;
    cfg.max_iters = 200;
    Rng rng(1);
    Sample1DResult traj = sample_1d(gm, -2.0, cfg, rng);
    std::vector<std::vector<double>> traj_rows;
    for (size_t k = 0; k < traj.trajectory.size(); ++k) {
        traj_rows.push_back({static_cast<double>(k), traj.trajectory[k]});
    }
    write_csv(out_dir + "/trajectory.csv", {"k", "y_k"}, traj_rows);

    json manifest = base_manifest("demo1d");
    manifest["converged"] = traj.converged;
    manifest["final_y"] = traj.trajectory.back();
    write_manifest(out_dir, manifest);
    printf("wrote 1D demo CSVs to %s (trajectory -> %.4f in %d iters)\n", out_dir.c_str(),
           traj.trajectory.back(), traj.iterations);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conditional score-based next-frame prediction"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "worker threads (compute kernels in this build are single-threaded)");

    // gen-leaves
    auto* gen = app.add_subcommand("gen-leaves", "generate the moving-leaves dataset");
    int gen_n = 1000;
    uint64_t gen_seed = 0;
    std::string gen_out = "leaves.vseq", gen_config;
    gen->add_option("--n", gen_n, "number of sequences")->required();
    gen->add_option("--seed", gen_seed, "rng seed");
    gen->add_option("--out", gen_out, "output VSEQ path")->required();
    gen->add_option("--config", gen_config, "JSON config file");

    // ingest
    auto* ing = app.add_subcommand("ingest", "ingest PGM frame directory into a VSEQ dataset");
    std::string ing_dir, ing_out = "ingested.vseq", ing_scales = "1";
    IngestConfig ing_cfg;
    ing->add_option("--dir", ing_dir, "directory of P5 .pgm frames")->required();
    ing->add_option("--out", ing_out, "output VSEQ path")->required();
    ing->add_option("--frames-per-seq", ing_cfg.frames_per_seq, "frames per sequence");
    ing->add_option("--crop", ing_cfg.crop, "crop size");
    ing->add_option("--grid-rows", ing_cfg.grid_rows, "crop grid rows");
    ing->add_option("--grid-cols", ing_cfg.grid_cols, "crop grid cols");
    ing->add_option("--scales", ing_scales, "comma list of integer downscale factors");
    ing->add_option("--train-fraction", ing_cfg.train_fraction, "train split fraction");

    // train
    auto* tr = app.add_subcommand("train", "train the conditional denoiser");
    std::string tr_data, tr_out = "model.bfun", tr_log;
    int tr_tau = 2, tr_epochs = 150, tr_channels = 64, tr_batch = 4, tr_eval = 64;
    uint64_t tr_seed = 0;
    float tr_lr = 3e-4f;
    tr->add_option("--data", tr_data, "training VSEQ dataset")->required();
    tr->add_option("--tau", tr_tau, "conditioning frames (0-3)");
    tr->add_option("--epochs", tr_epochs, "training epochs");
    tr->add_option("--seed", tr_seed, "rng seed");
    tr->add_option("--out", tr_out, "output checkpoint path")->required();
    tr->add_option("--base-channels", tr_channels, "channels at the first scale");
    tr->add_option("--lr", tr_lr, "learning rate");
    tr->add_option("--batch-size", tr_batch, "batch size");
    tr->add_option("--eval-examples", tr_eval, "held-out examples per evaluation");
    tr->add_option("--log", tr_log, "CSV path for loss curves");
    bool tr_pred_only = false;
    tr->add_flag("--prediction-only", tr_pred_only, "drop the observation channel (baseline net)");
    std::string tr_init;
    tr->add_option("--init-from", tr_init, "warm-start from an existing checkpoint (arch must match)");

    // denoise
    auto* den = app.add_subcommand("denoise", "denoise held-out frames at a fixed noise level");
    std::string den_model, den_data, den_out = "denoise_out";
    double den_sigma = 0.5;
    int den_examples = 50;
    den->add_option("--model", den_model)->required();
    den->add_option("--data", den_data)->required();
    den->add_option("--sigma", den_sigma, "noise standard deviation");
    den->add_option("--examples", den_examples, "held-out examples");
    den->add_option("--out", den_out, "output directory");

    // sample
    auto* smp = app.add_subcommand("sample", "sample probable next frames");
    std::string smp_model, smp_cond, smp_out = "samples_out";
    int smp_index = 0, smp_n = 16;
    SamplerConfig smp_cfg;
    smp->add_option("--model", smp_model)->required();
    smp->add_option("--cond", smp_cond, "VSEQ with conditioning sequences")->required();
    smp->add_option("--index", smp_index, "sequence index");
    smp->add_option("--n-samples", smp_n, "number of samples");
    smp->add_option("--beta", smp_cfg.beta, "injected-noise fraction");
    smp->add_option("--sigma0", smp_cfg.sigma0, "stop threshold");
    smp->add_option("--alpha-init", smp_cfg.alpha_init, "initial step size");
    smp->add_option("--alpha-ratio", smp_cfg.alpha_ratio, "geometric step-size ratio");
    smp->add_option("--max-iters", smp_cfg.max_iters, "iteration cap");
    smp->add_option("--snapshot-every", smp_cfg.snapshot_every, "record every k-th iterate");
    smp->add_option("--seed", smp_cfg.seed, "rng seed");
    smp->add_option("--out", smp_out, "output directory");

    // rollout
    auto* rol = app.add_subcommand("rollout", "recursively generate a sequence");
    std::string rol_model, rol_data, rol_mode = "sample", rol_out = "rollout_out";
    int rol_index = 0, rol_steps = 5;
    SamplerConfig rol_cfg;
    rol->add_option("--model", rol_model)->required();
    rol->add_option("--data", rol_data, "VSEQ providing seed frames")->required();
    rol->add_option("--index", rol_index, "sequence index");
    rol->add_option("--steps", rol_steps, "frames to generate");
    rol->add_option("--mode", rol_mode, "sample | one_step")
        ->check(CLI::IsMember({"sample", "one_step"}));
    rol->add_option("--seed", rol_cfg.seed, "rng seed");
    rol->add_option("--beta", rol_cfg.beta, "injected-noise fraction");
    rol->add_option("--out", rol_out, "output directory");

    // analyze
    auto* ana = app.add_subcommand("analyze", "analysis suites");
    ana->require_subcommand(1);
    auto* ac = ana->add_subcommand("curve", "input-output PSNR curve");
    std::string ac_model, ac_data, ac_out = "curve_out", ac_grid = "0,5,10,15,20,25,30,35,40";
    int ac_examples = 30;
    ac->add_option("--model", ac_model)->required();
    ac->add_option("--data", ac_data)->required();
    ac->add_option("--out", ac_out);
    ac->add_option("--db-grid", ac_grid, "input PSNR grid in dB");
    ac->add_option("--examples", ac_examples, "examples per grid point");

    auto* af = ana->add_subcommand("filter", "adaptive linear filter (Jacobian row)");
    std::string af_model, af_data, af_pixel = "16,16", af_out = "filter_out";
    int af_index = 0, af_frame = -1;
    double af_sigma = 0.15;
    af->add_option("--model", af_model)->required();
    af->add_option("--data", af_data)->required();
    af->add_option("--index", af_index, "sequence index");
    af->add_option("--target-frame", af_frame, "target frame (default tau)");
    af->add_option("--pixel", af_pixel, "output pixel \"i,j\"");
    af->add_option("--sigma", af_sigma, "observation noise level");
    af->add_option("--out", af_out);

    auto* acue = ana->add_subcommand("cues", "cue-combination variance partition");
    std::string acue_model, acue_out = "cues_out", acue_grid = "-10,-5,0,5,10,15,20,25,30,35,40";
    int acue_draws = 3;
    acue->add_option("--model", acue_model)->required();
    acue->add_option("--out", acue_out);
    acue->add_option("--db-grid", acue_grid, "input PSNR grid in dB");
    acue->add_option("--draws", acue_draws, "noise draws per grid point");

    auto* ap = ana->add_subcommand("psycho", "occlusion psychometric curve");
    std::string ap_model, ap_out = "psycho_out", ap_dr = "-4,-3,-2,-1,0,1,2,3,4";
    int ap_n = 64;
    SamplerConfig ap_cfg;
    ap->add_option("--model", ap_model)->required();
    ap->add_option("--out", ap_out);
    ap->add_option("--dr-list", ap_dr, "radius differences in px");
    ap->add_option("--n-samples", ap_n, "samples per level");
    ap->add_option("--seed", ap_cfg.seed, "rng seed");
    ap->add_option("--beta", ap_cfg.beta, "injected-noise fraction");
    ap->add_option("--sigma0", ap_cfg.sigma0, "stop threshold");

    // demo1d / selftest
    auto* demo = app.add_subcommand("demo1d", "1D bimodal estimation and sampling demo");
    std::string demo_out = "demo1d_out";
    demo->add_option("--out", demo_out, "output directory");

    auto* st = app.add_subcommand("selftest", "run the oracle and invariant suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        require(threads >= 1, "--threads must be >= 1");
        if (gen->parsed()) {
            return cmd_gen_leaves(gen_n, gen_seed, gen_out, gen_config);
        }
        if (ing->parsed()) {
            ing_cfg.scales.clear();
            for (double s : parse_list(ing_scales)) {
                ing_cfg.scales.push_back(static_cast<int>(s));
            }
            SequenceDataset ds = ingest_frames(ing_dir, ing_cfg);
            save_dataset(ds, ing_out);
            json manifest = base_manifest("ingest");
            manifest["dir"] = ing_dir;
            manifest["out"] = ing_out;
            manifest["frames_per_seq"] = ing_cfg.frames_per_seq;
            manifest["crop"] = ing_cfg.crop;
            manifest["grid"] = {ing_cfg.grid_rows, ing_cfg.grid_cols};
            manifest["scales"] = ing_cfg.scales;
            write_manifest(".", manifest);
            printf("ingested %d sequences to %s\n", ds.size(), ing_out.c_str());
            return 0;
        }
        if (tr->parsed()) {
            return cmd_train(tr_data, tr_tau, tr_epochs, tr_seed, tr_out, tr_channels, tr_lr, tr_batch,
                             tr_eval, tr_log, tr_pred_only, tr_init);
        }
        if (den->parsed()) {
            return cmd_denoise(den_model, den_data, den_sigma, den_examples, den_out);
        }
        if (smp->parsed()) {
            return cmd_sample(smp_model, smp_cond, smp_index, smp_n, smp_cfg, smp_out);
        }
        if (rol->parsed()) {
            return cmd_rollout(rol_model, rol_data, rol_index, rol_steps, rol_mode, rol_cfg, rol_out);
        }
        if (ac->parsed()) {
            return cmd_analyze_curve(ac_model, ac_data, ac_out, ac_grid, ac_examples);
        }
        if (af->parsed()) {
            return cmd_analyze_filter(af_model, af_data, af_index, af_frame, af_pixel, af_sigma, af_out);
        }
        if (acue->parsed()) {
            return cmd_analyze_cues(acue_model, acue_out, acue_grid, acue_draws);
        }
        if (ap->parsed()) {
            return cmd_analyze_psycho(ap_model, ap_out, ap_dr, ap_n, ap_cfg);
        }
        if (demo->parsed()) {
            return cmd_demo1d(demo_out);
        }
        if (st->parsed()) {
            SelftestResult res = run_selftest();
            for (const auto& line : res.lines) {
                printf("%s\n", line.c_str());
            }
            printf("%d passed, %d failed\n", res.passed, res.failed);
            return res.ok() ? 0 : 1;
        }
    } catch (const std::exception& e) {
        fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
