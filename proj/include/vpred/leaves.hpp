#pragma once

#include <array>
#include <vector>

#include "vpred/rng.hpp"
#include "vpred/vseq.hpp"

namespace vpred {

struct LeavesConfig {
    int image_size = 32;
    int frames = 11;
    double depth_min = 1.2;
    double depth_max = 3.0;
    double radius_ref = 12.0;    // projected radius = radius_ref / depth (pinhole)
    double gp_length0 = 2.0;     // RBF length-scale = gp_length0 * depth, in frames
    double gp_amplitude = 7.0;   // RBF amplitude in pixels; speed then scales as 1/depth
    double min_contrast = 0.1;   // minimum |disk luminance - background|
    double occlusion_fraction = 0.5;
    int supersample = 4;
    double train_fraction = 0.9;

    void validate() const;

    // Strict JSON parsing: unknown keys are an error.
    static LeavesConfig from_json(const nlohmann::json& cfg);
    nlohmann::json to_json() const;
};

struct Disk {
    double depth = 1.0;
    double radius = 1.0;  // pixels, = radius_ref / depth
    double luminance = 0.5;
    std::vector<std::array<double, 2>> centers;  // per frame (x, y), subpixel
};

struct DiskScene {
    Disk a, b;
    double background = 0.0;
    int frames = 0;
    int image_size = 0;

    const Disk& smaller() const { return a.radius <= b.radius ? a : b; }
    const Disk& larger() const { return a.radius <= b.radius ? b : a; }
};

DiskScene sample_scene(Rng& rng, const LeavesConfig& cfg);

// One GP draw over `n` frames: RBF kernel with the given amplitude and
// length-scale plus a constant mean, sampled via Cholesky (jitter 1e-8).
std::vector<double> sample_gp_trajectory(Rng& rng, int n, double amplitude, double length, double mean);

ImageSequence render_sequence(const DiskScene& scene, const LeavesConfig& cfg);

// Fraction of the smaller disk's area covered by the larger disk in one
// frame, measured on boolean masks at 4x resolution.
double occlusion_fraction(const DiskScene& scene, int frame_index);
// True if any frame reaches cfg.occlusion_fraction.
bool has_occlusion_event(const DiskScene& scene, const LeavesConfig& cfg);

struct GeneratedDataset {
    SequenceDataset data;
    std::vector<DiskScene> scenes;  // aligned with data.sequences
};

// Rejection-samples scenes until each accepted sequence contains an occlusion
// event, renders them, and applies the 9:1 train/test split. Deterministic in
// (seed, n, cfg) regardless of thread count.
GeneratedDataset generate_dataset(uint64_t seed, int n_sequences, const LeavesConfig& cfg);

// Collision-course probe for the occlusion-decision experiments: two
// conditioning frames plus the rendered true next frame.
struct ProbeConfig {
    int image_size = 32;
    double base_radius = 7.0;
    double speed = 2.2;          // pixels per frame per disk, within the trajectory prior
    double overlap = 4.0;        // lens width in the true next frame (< 2*speed keeps
                                 // the conditioning frames disjoint)
    double lum_left = 0.25;
    double lum_right = 0.95;
    double background = 0.6;
    double max_abs_dr = 6.0;
};

struct ProbeSpec {
    double radius_left = 0.0, radius_right = 0.0;
    double lum_left = 0.0, lum_right = 0.0, background = 0.0;
    std::array<std::array<double, 2>, 3> center_left{};   // per frame
    std::array<std::array<double, 2>, 3> center_right{};
    double dr = 0.0;
    int true_label = 0;  // sign(dr): +1 right occludes, -1 left, 0 ambiguous
    int image_size = 0;
};

struct Probe {
    ImageSequence seq;  // 3 frames: [cond0, cond1, true next frame]
    ProbeSpec spec;
};

Probe make_probe(double dr, const ProbeConfig& cfg);

// Fixed 3-frame scenes (2 conditioning + target) of graded predictability for
// the cue-combination analysis: a static scene is fully predicted by its
// conditioning; a moving scene is harder.
enum class CueProbeKind { static_scene, moving_scene };
ImageSequence make_cue_scene(CueProbeKind kind, int image_size = 32);

}  // namespace vpred
