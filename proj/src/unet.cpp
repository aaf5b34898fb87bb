#include "vpred/unet.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "vpred/vseq.hpp"

namespace vpred {

namespace {

constexpr double kRunningStdMomentum = 0.1;
constexpr uint32_t kBfunVersion = 1;

// Dispatch layer letting one wiring serve both the autograd path and the
// graph-free inference path.
struct GraphOps {
    using V = Var;
    static V conv(const V& x, const Var& w) { return conv2d(x, w); }
    static V bfn(const V& x, const Var& gain, const Tensor& running, bool training,
                 std::vector<double>* batch_std, int* clamps) {
        return bf_norm(x, gain, running, training, batch_std, clamps);
    }
    static V act(const V& x) { return relu(x); }
    static V down(const V& x) { return downsample2x(x); }
    static V up(const V& x) { return upsample2x(x); }
    static V cat(const V& a, const V& b) { return concat_channels(a, b); }
};

struct RawOps {
    using V = Tensor;
    static V conv(const V& x, const Var& w) { return conv2d_forward(x, w->value); }
    static V bfn(const V& x, const Var& gain, const Tensor& running, bool training,
                 std::vector<double>* batch_std, int* clamps) {
        BfNormResult r = bf_norm_forward(x, gain->value, running, training);
        if (batch_std != nullptr) {
            *batch_std = r.std_raw;
        }
        if (clamps != nullptr) {
            *clamps += r.clamped_channels;
        }
        return std::move(r.output);
    }
    static V act(const V& x) { return relu_forward(x); }
    static V down(const V& x) { return downsample2x_forward(x); }
    static V up(const V& x) { return upsample2x_forward(x); }
    static V cat(const V& a, const V& b) { return concat_channels_forward(a, b); }
};

void write_u16le(std::ostream& os, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

void write_u32le(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_record(std::ostream& os, const std::string& name, const Tensor& t) {
    require(name.size() < 65536, "parameter name too long");
    write_u16le(os, static_cast<uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.put(static_cast<char>(t.ndim()));
    for (int d = 0; d < t.ndim(); ++d) {
        write_u32le(os, static_cast<uint32_t>(t.dim(d)));
    }
    std::vector<unsigned char> buf(static_cast<size_t>(t.numel()) * 4);
    for (int64_t i = 0; i < t.numel(); ++i) {
        const uint32_t bits = std::bit_cast<uint32_t>(t[i]);
        buf[static_cast<size_t>(4 * i) + 0] = static_cast<unsigned char>(bits);
        buf[static_cast<size_t>(4 * i) + 1] = static_cast<unsigned char>(bits >> 8);
        buf[static_cast<size_t>(4 * i) + 2] = static_cast<unsigned char>(bits >> 16);
        buf[static_cast<size_t>(4 * i) + 3] = static_cast<unsigned char>(bits >> 24);
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

}  // namespace

void ModelArch::validate() const {
    require(tau >= 0 && tau <= 3, strfmt("arch: tau must be in [0,3], got %d", tau));
    require(scales == 3, strfmt("arch: this network is defined for 3 scales, got %d", scales));
    require(base_channels >= 4 && base_channels <= 512, strfmt("arch: bad base_channels %d", base_channels));
    require(!prediction_only || tau >= 1, "arch: prediction-only needs at least one conditioning frame");
}

DenoiserModel::DenoiserModel(ModelArch arch, uint64_t seed) : arch_(arch) {
    arch_.validate();
    Rng rng(seed, 0x6e657477);  // weight-init stream

    const int c = arch_.base_channels;
    const int in_ch = arch_.in_channels();
    // conv shapes per block: {group, out, in}
    const std::vector<std::tuple<std::string, int, int>> specs = {
        {"enc0.block0", c, in_ch},    {"enc0.block1", c, c},
        {"enc1.block0", 2 * c, c},    {"enc1.block1", 2 * c, 2 * c},
        {"mid.block0", 4 * c, 2 * c}, {"mid.block1", 4 * c, 4 * c},
        {"dec1.block0", 2 * c, 6 * c}, {"dec1.block1", 2 * c, 2 * c},
        {"dec0.block0", c, 3 * c},    {"dec0.block1", c, c},
    };

    for (const auto& [name, out_ch, in_c] : specs) {
        BlockRef ref;
        const float stddev = std::sqrt(2.0f / (static_cast<float>(in_c) * 9.0f));
        ref.conv = static_cast<int>(params_.size());
        params_.emplace_back(name + ".conv.weight", leaf(Tensor::randn({out_ch, in_c, 3, 3}, rng, stddev), true));
        ref.gain = static_cast<int>(params_.size());
        params_.emplace_back(name + ".norm.gain", leaf(Tensor::full({out_ch}, 1.0f), true));
        ref.running = static_cast<int>(buffers_.size());
        buffers_.emplace_back(name + ".norm.running_std", Tensor::full({out_ch}, 1.0f));
        blocks_.push_back(ref);
    }
    const float stddev = std::sqrt(2.0f / (static_cast<float>(c) * 9.0f));
    final_conv_ = static_cast<int>(params_.size());
    params_.emplace_back("final.conv.weight", leaf(Tensor::randn({1, c, 3, 3}, rng, stddev), true));
}

template <class Ops>
typename Ops::V DenoiserModel::run(Ops, typename Ops::V input) {
    const bool training = mode_ == Mode::training;

    auto block = [&](typename Ops::V x, int bi) {
        const BlockRef& b = blocks_[static_cast<size_t>(bi)];
        auto conv_out = Ops::conv(x, params_[static_cast<size_t>(b.conv)].second);
        std::vector<double> batch_std;
        auto normed = Ops::bfn(conv_out, params_[static_cast<size_t>(b.gain)].second,
                               buffers_[static_cast<size_t>(b.running)].second, training,
                               training ? &batch_std : nullptr, &clamp_warnings_);
        if (training) {
            Tensor& running = buffers_[static_cast<size_t>(b.running)].second;
            for (int64_t i = 0; i < running.numel(); ++i) {
                running[i] = static_cast<float>((1.0 - kRunningStdMomentum) * running[i] +
                                                kRunningStdMomentum * batch_std[static_cast<size_t>(i)]);
            }
        }
        return Ops::act(normed);
    };

    auto e0 = block(block(std::move(input), 0), 1);
    auto e1 = block(block(Ops::down(e0), 2), 3);
    auto m = block(block(Ops::down(e1), 4), 5);
    auto t1 = block(block(Ops::cat(Ops::up(m), e1), 6), 7);
    auto t0 = block(block(Ops::cat(Ops::up(t1), e0), 8), 9);
    return Ops::conv(t0, params_[static_cast<size_t>(final_conv_)].second);
}

namespace {

void check_input_shape(const ModelArch& arch, const std::vector<int>& shape) {
    require(shape.size() == 4, "forward: expected [N, tau+1, H, W] input");
    require(shape[1] == arch.in_channels(),
            strfmt("forward: expected %d input channels (tau=%d), got %d", arch.in_channels(), arch.tau, shape[1]));
    require(shape[2] % 4 == 0 && shape[3] % 4 == 0,
            strfmt("forward: H and W must be divisible by 4 for three scales, got %dx%d", shape[2], shape[3]));
}

}  // namespace

Tensor DenoiserModel::forward(const Tensor& input) {
    check_input_shape(arch_, input.shape());
    return run(RawOps{}, input);
}

Var DenoiserModel::forward_var(const Var& input) {
    check_input_shape(arch_, input->value.shape());
    return run(GraphOps{}, input);
}

Tensor DenoiserModel::residual(const Tensor& y, const Tensor& cond) {
    Tensor xhat = denoise(y, cond);
    Tensor f = xhat;
    for (int64_t i = 0; i < f.numel(); ++i) {
        f[i] -= y[i];
    }
    return f;
}

Tensor DenoiserModel::denoise(const Tensor& y, const Tensor& cond) {
    require(mode_ == Mode::inference, "denoise/residual: model must be in inference mode");
    require(!arch_.prediction_only, "denoise/residual: prediction-only models take no observation; use predict()");
    return forward(stack_input(y, cond, arch_.tau));
}

Tensor DenoiserModel::predict(const Tensor& cond) {
    require(mode_ == Mode::inference, "predict: model must be in inference mode");
    require(arch_.prediction_only, "predict: only available on prediction-only models");
    return forward(cond);
}

Tensor DenoiserModel::stack_input(const Tensor& y, const Tensor& cond, int tau) {
    require(y.ndim() == 4 && y.dim(1) == 1, "stack_input: y must be [N,1,H,W]");
    if (tau == 0) {
        return y;
    }
    require(cond.ndim() == 4 && cond.dim(1) == tau, strfmt("stack_input: cond must have %d channels", tau));
    return concat_channels_forward(y, cond);
}

void DenoiserModel::zero_grads() {
    for (auto& [name, p] : params_) {
        p->zero_grad();
    }
}

void save_model(const DenoiserModel& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), "save_model: cannot open " + path);

    nlohmann::json header = {{"tau", model.arch().tau},
                             {"scales", model.arch().scales},
                             {"base_channels", model.arch().base_channels},
                             {"prediction_only", model.arch().prediction_only},
                             {"n_records", model.params().size() + model.buffers().size()}};
    const std::string js = header.dump();

    os.write("BFUN", 4);
    write_u32le(os, kBfunVersion);
    write_u32le(os, static_cast<uint32_t>(js.size()));
    os.write(js.data(), static_cast<std::streamsize>(js.size()));
    for (const auto& [name, p] : model.params()) {
        write_record(os, name, p->value);
    }
    for (const auto& [name, t] : model.buffers()) {
        write_record(os, name, t);
    }
    require(os.good(), "save_model: write failed for " + path);
}

DenoiserModel load_model(const std::string& path, const ModelArch* expected) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), "load_model: cannot open " + path);

    auto read_exact = [&](void* p, size_t n, const char* what) {
        is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        require(static_cast<size_t>(is.gcount()) == n, strfmt("%s: truncated reading %s", path.c_str(), what));
    };
    auto read_u32 = [&](const char* what) {
        unsigned char b[4];
        read_exact(b, 4, what);
        return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
               (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    };

    char magic[4];
    read_exact(magic, 4, "magic");
    require(std::memcmp(magic, "BFUN", 4) == 0, path + ": not a BFUN checkpoint");
    const uint32_t version = read_u32("version");
    require(version == kBfunVersion,
            strfmt("%s: checkpoint version mismatch: expected %u, found %u", path.c_str(), kBfunVersion, version));
    const uint32_t json_len = read_u32("header length");
    std::string js(json_len, '\0');
    read_exact(js.data(), json_len, "header");
    const nlohmann::json header = nlohmann::json::parse(js);

    ModelArch arch;
    arch.tau = header.at("tau").get<int>();
    arch.scales = header.at("scales").get<int>();
    arch.base_channels = header.at("base_channels").get<int>();
    arch.prediction_only = header.value("prediction_only", false);
    if (expected != nullptr) {
        require(arch == *expected,
                strfmt("%s: arch mismatch: expected tau=%d scales=%d base_channels=%d prediction_only=%d, "
                       "found tau=%d scales=%d base_channels=%d prediction_only=%d",
                       path.c_str(), expected->tau, expected->scales, expected->base_channels,
                       expected->prediction_only ? 1 : 0, arch.tau, arch.scales, arch.base_channels,
                       arch.prediction_only ? 1 : 0));
    }

    DenoiserModel model(arch, 0);
    const size_t n_records = header.at("n_records").get<size_t>();
    require(n_records == model.params().size() + model.buffers().size(),
            strfmt("%s: record count %zu does not match architecture", path.c_str(), n_records));

    for (size_t rec = 0; rec < n_records; ++rec) {
        unsigned char lb[2];
        read_exact(lb, 2, "record name length");
        const size_t name_len = static_cast<size_t>(lb[0]) | (static_cast<size_t>(lb[1]) << 8);
        std::string name(name_len, '\0');
        read_exact(name.data(), name_len, "record name");
        unsigned char ndim = 0;
        read_exact(&ndim, 1, "record ndim");
        std::vector<int> dims(ndim);
        for (auto& d : dims) {
            d = static_cast<int>(read_u32("record dim"));
        }
        Tensor t(dims);
        std::vector<unsigned char> buf(static_cast<size_t>(t.numel()) * 4);
        read_exact(buf.data(), buf.size(), ("data of " + name).c_str());
        for (int64_t i = 0; i < t.numel(); ++i) {
            const uint32_t bits = static_cast<uint32_t>(buf[static_cast<size_t>(4 * i)]) |
                                  (static_cast<uint32_t>(buf[static_cast<size_t>(4 * i) + 1]) << 8) |
                                  (static_cast<uint32_t>(buf[static_cast<size_t>(4 * i) + 2]) << 16) |
                                  (static_cast<uint32_t>(buf[static_cast<size_t>(4 * i) + 3]) << 24);
            t[i] = std::bit_cast<float>(bits);
        }

        bool placed = false;
        for (auto& [pname, p] : model.params()) {
            if (pname == name) {
                require(p->value.same_shape(t), path + ": shape mismatch for " + name);
                p->value = std::move(t);
                placed = true;
                break;
            }
        }
        if (!placed) {
            for (auto& [bname, b] : model.buffers()) {
                if (bname == name) {
                    require(b.same_shape(t), path + ": shape mismatch for " + name);
                    b = std::move(t);
                    placed = true;
                    break;
                }
            }
        }
        require(placed, path + ": unknown record \"" + name + "\"");
    }
    model.set_mode(Mode::inference);
    return model;
}

}  // namespace vpred
