#include "vpred/tensor_ops.hpp"

#include <algorithm>
#include <cmath>

namespace vpred {

namespace {

void require_nchw(const Tensor& t, const char* what) {
    require(t.ndim() == 4, strfmt("%s: expected 4D NCHW tensor, got %s", what, t.shape_str().c_str()));
}

void maybe_check(const Tensor& t, const char* where) {
    if (finite_checks_enabled()) {
        t.check_finite(where);
    }
}

}  // namespace

namespace {

// Input planes padded by one zero pixel on each side; the inner loops then
// run branch-free over full rows.
struct PaddedPlanes {
    std::vector<float> data;
    int channels = 0, h = 0, w = 0;

    void build(const Tensor& src, int n) {
        channels = src.dim(1);
        h = src.dim(2);
        w = src.dim(3);
        const int ph = h + 2, pw = w + 2;
        data.assign(static_cast<size_t>(channels) * ph * pw, 0.0f);
        for (int c = 0; c < channels; ++c) {
            for (int y = 0; y < h; ++y) {
                const float* row = src.ptr(n, c, y, 0);
                float* dst = &data[(static_cast<size_t>(c) * ph + y + 1) * pw + 1];
                std::copy(row, row + w, dst);
            }
        }
    }
    const float* row(int c, int py) const {
        return &data[(static_cast<size_t>(c) * (h + 2) + py) * (w + 2)];
    }
};

// One output row with compile-time width: accumulators stay in registers
// across the channel loop.
template <int W>
inline void conv_row_fixed(float* __restrict out, const PaddedPlanes& pad, const float* __restrict kernel,
                           int c_in, int y) {
    float acc[W] = {};
    for (int ci = 0; ci < c_in; ++ci) {
        const float* __restrict k = kernel + ci * 9;
        for (int ky = 0; ky < 3; ++ky) {
            const float* __restrict row = pad.row(ci, y + ky);
            const float k0 = k[ky * 3 + 0], k1 = k[ky * 3 + 1], k2 = k[ky * 3 + 2];
            for (int x = 0; x < W; ++x) {
                acc[x] += k0 * row[x] + k1 * row[x + 1] + k2 * row[x + 2];
            }
        }
    }
    std::copy(acc, acc + W, out);
}

void conv_row_generic(float* __restrict out, const PaddedPlanes& pad, const float* __restrict kernel,
                      int c_in, int y, int w) {
    std::vector<float> acc(static_cast<size_t>(w), 0.0f);
    for (int ci = 0; ci < c_in; ++ci) {
        const float* __restrict k = kernel + ci * 9;
        for (int ky = 0; ky < 3; ++ky) {
            const float* __restrict row = pad.row(ci, y + ky);
            const float k0 = k[ky * 3 + 0], k1 = k[ky * 3 + 1], k2 = k[ky * 3 + 2];
            for (int x = 0; x < w; ++x) {
                acc[static_cast<size_t>(x)] += k0 * row[x] + k1 * row[x + 1] + k2 * row[x + 2];
            }
        }
    }
    std::copy(acc.begin(), acc.end(), out);
}

// Correlation of padded planes with a [Cout,Cin,3,3] kernel; shared by the
// forward pass and (with a flipped, transposed kernel) the input gradient.
void conv_planes(Tensor& out, int n, const PaddedPlanes& pad, const float* kernel, int c_out, int c_in,
                 int h, int w) {
    for (int co = 0; co < c_out; ++co) {
        const float* kbase = kernel + static_cast<int64_t>(co) * c_in * 9;
        for (int y = 0; y < h; ++y) {
            float* orow = out.ptr(n, co, y, 0);
            switch (w) {
                case 8:
                    conv_row_fixed<8>(orow, pad, kbase, c_in, y);
                    break;
                case 16:
                    conv_row_fixed<16>(orow, pad, kbase, c_in, y);
                    break;
                case 32:
                    conv_row_fixed<32>(orow, pad, kbase, c_in, y);
                    break;
                default:
                    conv_row_generic(orow, pad, kbase, c_in, y, w);
                    break;
            }
        }
    }
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel) {
    require_nchw(input, "conv2d");
    require(kernel.ndim() == 4 && kernel.dim(2) == 3 && kernel.dim(3) == 3,
            "conv2d: kernel must be [Cout,Cin,3,3], got " + kernel.shape_str());
    const int n_batch = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int c_out = kernel.dim(0);
    require(kernel.dim(1) == c_in,
            strfmt("conv2d: kernel expects %d input channels, input has %d", kernel.dim(1), c_in));

    Tensor out({n_batch, c_out, h, w});
    PaddedPlanes pad;
    for (int n = 0; n < n_batch; ++n) {
        pad.build(input, n);
        conv_planes(out, n, pad, kernel.data(), c_out, c_in, h, w);
    }
    maybe_check(out, "conv2d");
    return out;
}

Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& kernel, const std::vector<int>& input_shape) {
    const int n_batch = input_shape[0], c_in = input_shape[1], h = input_shape[2], w = input_shape[3];
    const int c_out = kernel.dim(0);
    Tensor grad_in(input_shape);

    // grad wrt input is a correlation of grad_out with the kernel flipped in
    // both spatial directions and transposed in the channel axes
    std::vector<float> flipped(static_cast<size_t>(c_in) * c_out * 9);
    for (int co = 0; co < c_out; ++co) {
        for (int ci = 0; ci < c_in; ++ci) {
            const float* src = kernel.data() + (static_cast<int64_t>(co) * c_in + ci) * 9;
            float* dst = &flipped[(static_cast<size_t>(ci) * c_out + co) * 9];
            for (int i = 0; i < 9; ++i) {
                dst[i] = src[8 - i];
            }
        }
    }

    PaddedPlanes pad;
    for (int n = 0; n < n_batch; ++n) {
        pad.build(grad_out, n);
        conv_planes(grad_in, n, pad, flipped.data(), c_in, c_out, h, w);
    }
    return grad_in;
}

Tensor conv2d_backward_kernel(const Tensor& grad_out, const Tensor& input, const std::vector<int>& kernel_shape) {
    const int n_batch = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int c_out = kernel_shape[0];
    Tensor grad_k(kernel_shape);
    std::vector<double> acc(static_cast<size_t>(c_out) * c_in * 9, 0.0);

    PaddedPlanes pad;
    for (int n = 0; n < n_batch; ++n) {
        pad.build(input, n);
        for (int co = 0; co < c_out; ++co) {
            for (int ci = 0; ci < c_in; ++ci) {
                double* a = &acc[(static_cast<size_t>(co) * c_in + ci) * 9];
                for (int y = 0; y < h; ++y) {
                    const float* __restrict grow = grad_out.ptr(n, co, y, 0);
                    for (int ky = 0; ky < 3; ++ky) {
                        const float* __restrict irow = pad.row(ci, y + ky);
                        float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f;
                        for (int x = 0; x < w; ++x) {
                            s0 += grow[x] * irow[x];
                            s1 += grow[x] * irow[x + 1];
                            s2 += grow[x] * irow[x + 2];
                        }
                        a[ky * 3 + 0] += s0;
                        a[ky * 3 + 1] += s1;
                        a[ky * 3 + 2] += s2;
                    }
                }
            }
        }
    }
    for (int64_t i = 0; i < grad_k.numel(); ++i) {
        grad_k[i] = static_cast<float>(acc[static_cast<size_t>(i)]);
    }
    return grad_k;
}

Tensor downsample2x_forward(const Tensor& input) {
    require_nchw(input, "downsample2x");
    const int n_batch = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    require(h % 2 == 0 && w % 2 == 0, strfmt("downsample2x: spatial dims must be even, got %dx%d", h, w));
    Tensor out({n_batch, c, h / 2, w / 2});
    for (int n = 0; n < n_batch; ++n) {
        for (int ch = 0; ch < c; ++ch) {
            for (int y = 0; y < h / 2; ++y) {
                const float* r0 = input.ptr(n, ch, 2 * y, 0);
                const float* r1 = input.ptr(n, ch, 2 * y + 1, 0);
                float* o = out.ptr(n, ch, y, 0);
                for (int x = 0; x < w / 2; ++x) {
                    o[x] = 0.25f * (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]);
                }
            }
        }
    }
    maybe_check(out, "downsample2x");
    return out;
}

Tensor downsample2x_backward(const Tensor& grad_out, const std::vector<int>& input_shape) {
    Tensor grad_in(input_shape);
    const int n_batch = input_shape[0], c = input_shape[1], h = input_shape[2], w = input_shape[3];
    for (int n = 0; n < n_batch; ++n) {
        for (int ch = 0; ch < c; ++ch) {
            for (int y = 0; y < h / 2; ++y) {
                const float* g = grad_out.ptr(n, ch, y, 0);
                float* r0 = grad_in.ptr(n, ch, 2 * y, 0);
                float* r1 = grad_in.ptr(n, ch, 2 * y + 1, 0);
                for (int x = 0; x < w / 2; ++x) {
                    const float v = 0.25f * g[x];
                    r0[2 * x] = v;
                    r0[2 * x + 1] = v;
                    r1[2 * x] = v;
                    r1[2 * x + 1] = v;
                }
            }
        }
    }
    return grad_in;
}

Tensor upsample2x_forward(const Tensor& input) {
    require_nchw(input, "upsample2x");
    const int n_batch = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    Tensor out({n_batch, c, h * 2, w * 2});
    for (int n = 0; n < n_batch; ++n) {
        for (int ch = 0; ch < c; ++ch) {
            for (int y = 0; y < h; ++y) {
                const float* row = input.ptr(n, ch, y, 0);
                float* o0 = out.ptr(n, ch, 2 * y, 0);
                float* o1 = out.ptr(n, ch, 2 * y + 1, 0);
                for (int x = 0; x < w; ++x) {
                    o0[2 * x] = row[x];
                    o0[2 * x + 1] = row[x];
                    o1[2 * x] = row[x];
                    o1[2 * x + 1] = row[x];
                }
            }
        }
    }
    maybe_check(out, "upsample2x");
    return out;
}

Tensor upsample2x_backward(const Tensor& grad_out, const std::vector<int>& input_shape) {
    Tensor grad_in(input_shape);
    const int n_batch = input_shape[0], c = input_shape[1], h = input_shape[2], w = input_shape[3];
    for (int n = 0; n < n_batch; ++n) {
        for (int ch = 0; ch < c; ++ch) {
            for (int y = 0; y < h; ++y) {
                const float* g0 = grad_out.ptr(n, ch, 2 * y, 0);
                const float* g1 = grad_out.ptr(n, ch, 2 * y + 1, 0);
                float* row = grad_in.ptr(n, ch, y, 0);
                for (int x = 0; x < w; ++x) {
                    row[x] = g0[2 * x] + g0[2 * x + 1] + g1[2 * x] + g1[2 * x + 1];
                }
            }
        }
    }
    return grad_in;
}

Tensor relu_forward(const Tensor& input) {
    Tensor out(input.shape());
    const float* in = input.data();
    float* o = out.data();
    const int64_t n = input.numel();
    for (int64_t i = 0; i < n; ++i) {
        o[i] = in[i] > 0.0f ? in[i] : 0.0f;
    }
    return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& input) {
    Tensor grad_in(input.shape());
    const float* g = grad_out.data();
    const float* in = input.data();
    float* o = grad_in.data();
    const int64_t n = input.numel();
    for (int64_t i = 0; i < n; ++i) {
        o[i] = in[i] > 0.0f ? g[i] : 0.0f;
    }
    return grad_in;
}

void channel_std(const Tensor& input, std::vector<double>& mean_out, std::vector<double>& std_out) {
    const int n_batch = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int64_t count = static_cast<int64_t>(n_batch) * h * w;
    mean_out.assign(static_cast<size_t>(c), 0.0);
    std_out.assign(static_cast<size_t>(c), 0.0);
    for (int ch = 0; ch < c; ++ch) {
        double s = 0.0, s2 = 0.0;
        for (int n = 0; n < n_batch; ++n) {
            const float* p = input.ptr(n, ch, 0, 0);
            for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) {
                s += p[i];
                s2 += static_cast<double>(p[i]) * p[i];
            }
        }
        const double mean = s / static_cast<double>(count);
        const double var = std::max(0.0, s2 / static_cast<double>(count) - mean * mean);
        mean_out[static_cast<size_t>(ch)] = mean;
        std_out[static_cast<size_t>(ch)] = std::sqrt(var);
    }
}

BfNormResult bf_norm_forward(const Tensor& input, const Tensor& gain, const Tensor& running_std, bool training) {
    require_nchw(input, "bf_norm");
    const int c = input.dim(1);
    require(gain.ndim() == 1 && gain.dim(0) == c,
            strfmt("bf_norm: gain must have %d entries, got %s", c, gain.shape_str().c_str()));
    require(running_std.ndim() == 1 && running_std.dim(0) == c, "bf_norm: running_std shape mismatch");

    BfNormResult res;
    res.divisor.assign(static_cast<size_t>(c), 1.0);
    if (training) {
        channel_std(input, res.mean, res.std_raw);
        for (int ch = 0; ch < c; ++ch) {
            double d = res.std_raw[static_cast<size_t>(ch)];
            if (d < kBfNormEps) {
                d = kBfNormEps;
                res.clamped_channels++;
            }
            res.divisor[static_cast<size_t>(ch)] = d;
        }
    } else {
        for (int ch = 0; ch < c; ++ch) {
            double d = running_std[ch];
            if (d < kBfNormEps) {
                d = kBfNormEps;
                res.clamped_channels++;
            }
            res.divisor[static_cast<size_t>(ch)] = d;
        }
    }

    const int n_batch = input.dim(0), h = input.dim(2), w = input.dim(3);
    res.output = Tensor(input.shape());
    for (int n = 0; n < n_batch; ++n) {
        for (int ch = 0; ch < c; ++ch) {
            const float scale = static_cast<float>(static_cast<double>(gain[ch]) / res.divisor[static_cast<size_t>(ch)]);
            const float* p = input.ptr(n, ch, 0, 0);
            float* o = res.output.ptr(n, ch, 0, 0);
            for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) {
                o[i] = scale * p[i];
            }
        }
    }
    maybe_check(res.output, "bf_norm");
    return res;
}

Tensor concat_channels_forward(const Tensor& a, const Tensor& b) {
    require_nchw(a, "concat_channels");
    require_nchw(b, "concat_channels");
    require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
            "concat_channels: N/H/W mismatch " + a.shape_str() + " vs " + b.shape_str());
    const int n_batch = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
    Tensor out({n_batch, ca + cb, h, w});
    const int64_t plane = static_cast<int64_t>(h) * w;
    for (int n = 0; n < n_batch; ++n) {
        std::copy(a.ptr(n, 0, 0, 0), a.ptr(n, 0, 0, 0) + ca * plane, out.ptr(n, 0, 0, 0));
        std::copy(b.ptr(n, 0, 0, 0), b.ptr(n, 0, 0, 0) + cb * plane, out.ptr(n, ca, 0, 0));
    }
    return out;
}

}  // namespace vpred
