#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "vpred/tensor.hpp"

namespace vpred {

// T x H x W grayscale frames in [0,1]; the unit of all video data.
struct ImageSequence {
    int t = 0, h = 0, w = 0;
    std::vector<float> pixels;  // t*h*w row-major
    std::string source_tag;
    nlohmann::json meta;  // scene parameters when synthetic

    float* frame(int ti) { return pixels.data() + static_cast<int64_t>(ti) * h * w; }
    const float* frame(int ti) const { return pixels.data() + static_cast<int64_t>(ti) * h * w; }

    // [1,1,H,W] tensor view of one frame
    Tensor frame_tensor(int ti) const;
    // [1,count,H,W] stack of frames [first, first+count)
    Tensor frames_tensor(int first, int count) const;

    void validate() const;  // pixels in [0,1], t >= 1
};

struct SequenceDataset {
    std::vector<ImageSequence> sequences;
    std::vector<int> train_indices;
    std::vector<int> test_indices;
    nlohmann::json metadata;

    const ImageSequence& seq(int i) const { return sequences[static_cast<size_t>(i)]; }
    int size() const { return static_cast<int>(sequences.size()); }
    void validate_split() const;
};

// VSEQ container (little-endian): magic "VSEQ", u32 version=1,
// u32 n_sequences, u32 T, u32 H, u32 W, u8 dtype=1 (f32), 3 reserved bytes,
// n*T*H*W f32 payload sequence-major, then an optional JSON metadata block
// prefixed by its u64 byte length.
void save_dataset(const SequenceDataset& ds, const std::string& path);
SequenceDataset load_dataset(const std::string& path);

// Write a bare list of sequences (uniform shape) without split information.
void save_sequences(const std::vector<ImageSequence>& seqs, const std::string& path,
                    const nlohmann::json& metadata = {});

struct IngestConfig {
    int frames_per_seq = 11;
    int crop = 32;
    int grid_rows = 3;
    int grid_cols = 3;
    std::vector<int> scales = {1};  // box-filter downscale factors
    double train_fraction = 0.9;
};

// Reads binary (P5) PGM frames from a directory, sorted lexicographically,
// rescales to [0,1], and crops `crop`-sized windows on the location/scale
// grid. Non-P5 input or truncation is an error naming the file.
SequenceDataset ingest_frames(const std::string& dir, const IngestConfig& cfg);

// Single-image PGM helpers (used by ingest and by the CLI for previews).
struct PgmImage {
    int h = 0, w = 0;
    std::vector<float> pixels;  // [0,1]
};
PgmImage load_pgm(const std::string& path);
void save_pgm(const std::string& path, const float* pixels, int h, int w);

}  // namespace vpred
