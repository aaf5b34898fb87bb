#include "vpred/vseq.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace vpred {

namespace {

void write_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void write_u32le(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    write_bytes(os, b, 4);
}

void write_u64le(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) {
        b[i] = static_cast<unsigned char>(v >> (8 * i));
    }
    write_bytes(os, b, 8);
}

void write_f32le(std::ostream& os, const float* data, size_t count) {
    std::vector<unsigned char> buf(count * 4);
    for (size_t i = 0; i < count; ++i) {
        const uint32_t bits = std::bit_cast<uint32_t>(data[i]);
        buf[4 * i + 0] = static_cast<unsigned char>(bits);
        buf[4 * i + 1] = static_cast<unsigned char>(bits >> 8);
        buf[4 * i + 2] = static_cast<unsigned char>(bits >> 16);
        buf[4 * i + 3] = static_cast<unsigned char>(bits >> 24);
    }
    write_bytes(os, buf.data(), buf.size());
}

class ByteReader {
  public:
    ByteReader(std::istream& is, const std::string& path) : is_(is), path_(path) {}

    void read(void* p, size_t n) {
        is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(is_.gcount()) != n) {
            fail(strfmt("%s: truncated at byte offset %lld (wanted %zu more bytes)", path_.c_str(),
                        static_cast<long long>(offset_), n));
        }
        offset_ += static_cast<int64_t>(n);
    }

    uint32_t u32le() {
        unsigned char b[4];
        read(b, 4);
        return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
               (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    }

    uint64_t u64le() {
        unsigned char b[8];
        read(b, 8);
        uint64_t v = 0;
        for (int i = 7; i >= 0; --i) {
            v = (v << 8) | b[i];
        }
        return v;
    }

    void f32le(float* out, size_t count) {
        std::vector<unsigned char> buf(count * 4);
        read(buf.data(), buf.size());
        for (size_t i = 0; i < count; ++i) {
            const uint32_t bits = static_cast<uint32_t>(buf[4 * i]) | (static_cast<uint32_t>(buf[4 * i + 1]) << 8) |
                                  (static_cast<uint32_t>(buf[4 * i + 2]) << 16) |
                                  (static_cast<uint32_t>(buf[4 * i + 3]) << 24);
            out[i] = std::bit_cast<float>(bits);
        }
    }

    int64_t offset() const { return offset_; }
    bool at_eof() {
        is_.peek();
        return is_.eof();
    }

  private:
    std::istream& is_;
    std::string path_;
    int64_t offset_ = 0;
};

constexpr uint32_t kVseqVersion = 1;

}  // namespace

Tensor ImageSequence::frame_tensor(int ti) const { return frames_tensor(ti, 1); }

Tensor ImageSequence::frames_tensor(int first, int count) const {
    require(first >= 0 && count >= 1 && first + count <= t,
            strfmt("frames_tensor: range [%d,%d) out of %d frames", first, first + count, t));
    Tensor out({1, count, h, w});
    std::copy(frame(first), frame(first) + static_cast<int64_t>(count) * h * w, out.data());
    return out;
}

void ImageSequence::validate() const {
    require(t >= 1, "sequence must have at least one frame");
    require(static_cast<int64_t>(pixels.size()) == static_cast<int64_t>(t) * h * w,
            "sequence pixel count does not match t*h*w");
    for (float p : pixels) {
        require(std::isfinite(p) && p >= 0.0f && p <= 1.0f,
                strfmt("pixel value %g outside [0,1]", static_cast<double>(p)));
    }
}

void SequenceDataset::validate_split() const {
    std::vector<char> seen(sequences.size(), 0);
    for (int i : train_indices) {
        require(i >= 0 && i < size() && !seen[static_cast<size_t>(i)], "split index invalid or repeated");
        seen[static_cast<size_t>(i)] = 1;
    }
    for (int i : test_indices) {
        require(i >= 0 && i < size() && !seen[static_cast<size_t>(i)], "split not disjoint");
        seen[static_cast<size_t>(i)] = 1;
    }
    require(static_cast<int>(train_indices.size() + test_indices.size()) == size(),
            "split must be exhaustive");
}

namespace {

void save_vseq_impl(const std::vector<ImageSequence>& seqs, const std::string& path, const nlohmann::json& meta) {
    require(!seqs.empty(), "save: empty dataset");
    const int t = seqs[0].t, h = seqs[0].h, w = seqs[0].w;
    for (const auto& s : seqs) {
        require(s.t == t && s.h == h && s.w == w,
                strfmt("save: non-uniform sequence shapes (%dx%dx%d vs %dx%dx%d)", s.t, s.h, s.w, t, h, w));
    }
    std::ofstream os(path, std::ios::binary);
    require(os.good(), "save: cannot open " + path);
    write_bytes(os, "VSEQ", 4);
    write_u32le(os, kVseqVersion);
    write_u32le(os, static_cast<uint32_t>(seqs.size()));
    write_u32le(os, static_cast<uint32_t>(t));
    write_u32le(os, static_cast<uint32_t>(h));
    write_u32le(os, static_cast<uint32_t>(w));
    const unsigned char dtype_and_reserved[4] = {1, 0, 0, 0};
    write_bytes(os, dtype_and_reserved, 4);
    for (const auto& s : seqs) {
        write_f32le(os, s.pixels.data(), s.pixels.size());
    }
    if (!meta.is_null()) {
        const std::string js = meta.dump();
        write_u64le(os, js.size());
        write_bytes(os, js.data(), js.size());
    }
    require(os.good(), "save: write failed for " + path);
}

}  // namespace

void save_sequences(const std::vector<ImageSequence>& seqs, const std::string& path, const nlohmann::json& metadata) {
    save_vseq_impl(seqs, path, metadata);
}

void save_dataset(const SequenceDataset& ds, const std::string& path) {
    nlohmann::json meta = ds.metadata.is_null() ? nlohmann::json::object() : ds.metadata;
    meta["train_indices"] = ds.train_indices;
    meta["test_indices"] = ds.test_indices;
    save_vseq_impl(ds.sequences, path, meta);
}

SequenceDataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), "load: cannot open " + path);
    ByteReader r(is, path);

    char magic[4];
    r.read(magic, 4);
    require(std::memcmp(magic, "VSEQ", 4) == 0,
            strfmt("%s: bad magic at byte offset 0 (not a VSEQ file)", path.c_str()));
    const uint32_t version = r.u32le();
    require(version == kVseqVersion, strfmt("%s: unsupported VSEQ version %u", path.c_str(), version));
    const uint32_t n = r.u32le();
    const uint32_t t = r.u32le();
    const uint32_t h = r.u32le();
    const uint32_t w = r.u32le();
    unsigned char dtype_and_reserved[4];
    r.read(dtype_and_reserved, 4);
    require(dtype_and_reserved[0] == 1, strfmt("%s: unsupported dtype %u", path.c_str(), dtype_and_reserved[0]));

    SequenceDataset ds;
    ds.sequences.resize(n);
    for (uint32_t i = 0; i < n; ++i) {
        ImageSequence& s = ds.sequences[i];
        s.t = static_cast<int>(t);
        s.h = static_cast<int>(h);
        s.w = static_cast<int>(w);
        s.pixels.resize(static_cast<size_t>(t) * h * w);
        r.f32le(s.pixels.data(), s.pixels.size());
    }
    if (!r.at_eof()) {
        const uint64_t len = r.u64le();
        std::string js(len, '\0');
        r.read(js.data(), len);
        ds.metadata = nlohmann::json::parse(js);
        if (ds.metadata.contains("train_indices")) {
            ds.train_indices = ds.metadata["train_indices"].get<std::vector<int>>();
            ds.test_indices = ds.metadata["test_indices"].get<std::vector<int>>();
        }
    }
    if (ds.train_indices.empty() && ds.test_indices.empty()) {
        for (uint32_t i = 0; i < n; ++i) {
            ds.train_indices.push_back(static_cast<int>(i));
        }
    }
    return ds;
}

PgmImage load_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), "pgm: cannot open " + path);

    auto next_token = [&]() -> std::string {
        std::string tok;
        int c;
        while ((c = is.get()) != EOF) {
            if (c == '#') {
                while ((c = is.get()) != EOF && c != '\n') {
                }
                continue;
            }
            if (std::isspace(c)) {
                if (!tok.empty()) {
                    is.unget();
                    break;
                }
                continue;
            }
            tok.push_back(static_cast<char>(c));
        }
        return tok;
    };

    const std::string magic = next_token();
    require(magic == "P5", path + ": not a binary (P5) PGM file");
    const int w = std::stoi(next_token());
    const int h = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    require(w > 0 && h > 0, path + ": bad dimensions");
    require(maxval > 0 && maxval <= 255, path + ": only 8-bit PGM supported");
    is.get();  // single whitespace after maxval

    std::vector<unsigned char> raw(static_cast<size_t>(w) * h);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(is.gcount()) != raw.size()) {
        fail(strfmt("%s: truncated pixel data (%lld of %zu bytes)", path.c_str(),
                    static_cast<long long>(is.gcount()), raw.size()));
    }

    PgmImage img;
    img.h = h;
    img.w = w;
    img.pixels.resize(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) {
        img.pixels[i] = static_cast<float>(raw[i]) / static_cast<float>(maxval);
    }
    return img;
}

void save_pgm(const std::string& path, const float* pixels, int h, int w) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), "pgm: cannot open " + path + " for writing");
    os << "P5\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> raw(static_cast<size_t>(h) * w);
    for (size_t i = 0; i < raw.size(); ++i) {
        const float v = std::clamp(pixels[i], 0.0f, 1.0f);
        raw[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

namespace {

// Box-filter by an integer factor, then crop a window.
std::vector<float> scale_and_crop(const PgmImage& img, int factor, int top, int left, int crop) {
    std::vector<float> out(static_cast<size_t>(crop) * crop);
    for (int y = 0; y < crop; ++y) {
        for (int x = 0; x < crop; ++x) {
            double acc = 0.0;
            for (int sy = 0; sy < factor; ++sy) {
                for (int sx = 0; sx < factor; ++sx) {
                    const int iy = (top + y) * factor + sy;
                    const int ix = (left + x) * factor + sx;
                    acc += img.pixels[static_cast<size_t>(iy) * img.w + ix];
                }
            }
            out[static_cast<size_t>(y) * crop + x] = static_cast<float>(acc / (factor * factor));
        }
    }
    return out;
}

}  // namespace

SequenceDataset ingest_frames(const std::string& dir, const IngestConfig& cfg) {
    namespace fs = std::filesystem;
    require(cfg.frames_per_seq >= 1 && cfg.crop >= 1, "ingest: bad config");
    require(fs::is_directory(dir), "ingest: not a directory: " + dir);

    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
            files.push_back(entry.path().string());
        }
    }
    require(!files.empty(), "ingest: no .pgm files in " + dir);
    std::sort(files.begin(), files.end());

    std::vector<PgmImage> frames;
    frames.reserve(files.size());
    for (const auto& f : files) {
        frames.push_back(load_pgm(f));
        require(frames.back().h == frames[0].h && frames.back().w == frames[0].w,
                "ingest: frame size mismatch at " + f);
    }

    const int n_segments = static_cast<int>(frames.size()) / cfg.frames_per_seq;
    require(n_segments >= 1, strfmt("ingest: need at least %d frames, found %zu", cfg.frames_per_seq, frames.size()));

    SequenceDataset ds;
    for (int seg = 0; seg < n_segments; ++seg) {
        for (int scale : cfg.scales) {
            require(scale >= 1, "ingest: scales must be >= 1");
            const int sh = frames[0].h / scale;
            const int sw = frames[0].w / scale;
            if (sh < cfg.crop || sw < cfg.crop) {
                continue;  // scale too coarse for this source
            }
            for (int gy = 0; gy < cfg.grid_rows; ++gy) {
                for (int gx = 0; gx < cfg.grid_cols; ++gx) {
                    const int top = cfg.grid_rows == 1 ? (sh - cfg.crop) / 2
                                                       : gy * (sh - cfg.crop) / (cfg.grid_rows - 1);
                    const int left = cfg.grid_cols == 1 ? (sw - cfg.crop) / 2
                                                        : gx * (sw - cfg.crop) / (cfg.grid_cols - 1);
                    ImageSequence seq;
                    seq.t = cfg.frames_per_seq;
                    seq.h = cfg.crop;
                    seq.w = cfg.crop;
                    seq.source_tag = "ingest:" + dir;
                    seq.pixels.reserve(static_cast<size_t>(seq.t) * seq.h * seq.w);
                    for (int f = 0; f < cfg.frames_per_seq; ++f) {
                        auto px = scale_and_crop(frames[static_cast<size_t>(seg * cfg.frames_per_seq + f)],
                                                 scale, top, left, cfg.crop);
                        seq.pixels.insert(seq.pixels.end(), px.begin(), px.end());
                    }
                    ds.sequences.push_back(std::move(seq));
                }
            }
        }
    }
    require(!ds.sequences.empty(), "ingest: no crops produced; check crop size vs frame size");

    const int n = ds.size();
    const int n_train = static_cast<int>(std::lround(cfg.train_fraction * n));
    for (int i = 0; i < n; ++i) {
        (i < n_train ? ds.train_indices : ds.test_indices).push_back(i);
    }
    ds.metadata["source"] = dir;
    ds.metadata["frames_per_seq"] = cfg.frames_per_seq;
    ds.metadata["crop"] = cfg.crop;
    ds.metadata["grid"] = {cfg.grid_rows, cfg.grid_cols};
    ds.metadata["scales"] = cfg.scales;
    return ds;
}

}  // namespace vpred
