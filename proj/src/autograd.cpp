#include "vpred/autograd.hpp"

#include <algorithm>
#include <unordered_set>

namespace vpred {

namespace {

Var make_node(Tensor value, const char* op, std::vector<Var> inputs, std::function<void(Node&)> backfn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = op;
    n->inputs = std::move(inputs);
    for (const auto& in : n->inputs) {
        if (in->requires_grad) {
            n->requires_grad = true;
        }
    }
    if (n->requires_grad) {
        n->backfn = std::move(backfn);
    }
    return n;
}

}  // namespace

Var leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

Var conv2d(const Var& input, const Var& kernel) {
    Tensor out = conv2d_forward(input->value, kernel->value);
    return make_node(std::move(out), "conv2d", {input, kernel}, [](Node& n) {
        const Var& in = n.inputs[0];
        const Var& k = n.inputs[1];
        if (in->requires_grad) {
            in->ensure_grad().add_scaled(conv2d_backward_input(n.grad, k->value, in->value.shape()), 1.0f);
        }
        if (k->requires_grad) {
            k->ensure_grad().add_scaled(conv2d_backward_kernel(n.grad, in->value, k->value.shape()), 1.0f);
        }
    });
}

Var relu(const Var& input) {
    return make_node(relu_forward(input->value), "relu", {input}, [](Node& n) {
        const Var& in = n.inputs[0];
        if (in->requires_grad) {
            in->ensure_grad().add_scaled(relu_backward(n.grad, in->value), 1.0f);
        }
    });
}

Var downsample2x(const Var& input) {
    return make_node(downsample2x_forward(input->value), "downsample2x", {input}, [](Node& n) {
        const Var& in = n.inputs[0];
        if (in->requires_grad) {
            in->ensure_grad().add_scaled(downsample2x_backward(n.grad, in->value.shape()), 1.0f);
        }
    });
}

Var upsample2x(const Var& input) {
    return make_node(upsample2x_forward(input->value), "upsample2x", {input}, [](Node& n) {
        const Var& in = n.inputs[0];
        if (in->requires_grad) {
            in->ensure_grad().add_scaled(upsample2x_backward(n.grad, in->value.shape()), 1.0f);
        }
    });
}

Var concat_channels(const Var& a, const Var& b) {
    return make_node(concat_channels_forward(a->value, b->value), "concat_channels", {a, b}, [](Node& n) {
        const Var& a_in = n.inputs[0];
        const Var& b_in = n.inputs[1];
        const int n_batch = n.grad.dim(0), h = n.grad.dim(2), w = n.grad.dim(3);
        const int ca = a_in->value.dim(1), cb = b_in->value.dim(1);
        const int64_t plane = static_cast<int64_t>(h) * w;
        if (a_in->requires_grad) {
            Tensor& ga = a_in->ensure_grad();
            for (int nb = 0; nb < n_batch; ++nb) {
                const float* src = n.grad.ptr(nb, 0, 0, 0);
                float* dst = ga.ptr(nb, 0, 0, 0);
                for (int64_t i = 0; i < ca * plane; ++i) {
                    dst[i] += src[i];
                }
            }
        }
        if (b_in->requires_grad) {
            Tensor& gb = b_in->ensure_grad();
            for (int nb = 0; nb < n_batch; ++nb) {
                const float* src = n.grad.ptr(nb, ca, 0, 0);
                float* dst = gb.ptr(nb, 0, 0, 0);
                for (int64_t i = 0; i < cb * plane; ++i) {
                    dst[i] += src[i];
                }
            }
        }
    });
}

Var bf_norm(const Var& input, const Var& gain, const Tensor& running_std, bool training,
            std::vector<double>* batch_std_out, int* clamp_count) {
    BfNormResult res = bf_norm_forward(input->value, gain->value, running_std, training);
    if (batch_std_out != nullptr) {
        *batch_std_out = res.std_raw;
    }
    if (clamp_count != nullptr) {
        *clamp_count += res.clamped_channels;
    }

    // Saved statistics for the backward closure.
    auto divisor = std::make_shared<std::vector<double>>(std::move(res.divisor));
    auto mean = std::make_shared<std::vector<double>>(std::move(res.mean));
    auto std_raw = std::make_shared<std::vector<double>>(std::move(res.std_raw));

    return make_node(std::move(res.output), "bf_norm", {input, gain},
                     [divisor, mean, std_raw, training](Node& n) {
                         const Var& in = n.inputs[0];
                         const Var& g = n.inputs[1];
                         const Tensor& x = in->value;
                         const int n_batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
                         const int64_t plane = static_cast<int64_t>(h) * w;
                         const int64_t count = static_cast<int64_t>(n_batch) * plane;

                         for (int ch = 0; ch < c; ++ch) {
                             const double div = (*divisor)[static_cast<size_t>(ch)];
                             const double gv = g->value[ch];
                             // dot = sum_i dL/dy_i * x_i, needed for both grads
                             double dot = 0.0;
                             for (int nb = 0; nb < n_batch; ++nb) {
                                 const float* gp = n.grad.ptr(nb, ch, 0, 0);
                                 const float* xp = x.ptr(nb, ch, 0, 0);
                                 for (int64_t i = 0; i < plane; ++i) {
                                     dot += static_cast<double>(gp[i]) * xp[i];
                                 }
                             }
                             if (g->requires_grad) {
                                 g->ensure_grad()[ch] += static_cast<float>(dot / div);
                             }
                             if (in->requires_grad) {
                                 Tensor& gx = in->ensure_grad();
                                 const double s = training ? (*std_raw)[static_cast<size_t>(ch)] : 0.0;
                                 const bool clamped = !training || s < kBfNormEps;
                                 const double k0 = gv / div;
                                 if (clamped) {
                                     // Divisor is a constant: plain diagonal scaling.
                                     for (int nb = 0; nb < n_batch; ++nb) {
                                         const float* gp = n.grad.ptr(nb, ch, 0, 0);
                                         float* out = gx.ptr(nb, ch, 0, 0);
                                         for (int64_t i = 0; i < plane; ++i) {
                                             out[i] += static_cast<float>(k0 * gp[i]);
                                         }
                                     }
                                 } else {
                                     const double m = (*mean)[static_cast<size_t>(ch)];
                                     const double k1 = gv * dot / (s * s * s * static_cast<double>(count));
                                     for (int nb = 0; nb < n_batch; ++nb) {
                                         const float* gp = n.grad.ptr(nb, ch, 0, 0);
                                         const float* xp = x.ptr(nb, ch, 0, 0);
                                         float* out = gx.ptr(nb, ch, 0, 0);
                                         for (int64_t i = 0; i < plane; ++i) {
                                             out[i] += static_cast<float>(k0 * gp[i] - k1 * (xp[i] - m));
                                         }
                                     }
                                 }
                             }
                         }
                     });
}

Var add(const Var& a, const Var& b) {
    require(a->value.same_shape(b->value), "add: shape mismatch");
    Tensor out = a->value;
    out.add_scaled(b->value, 1.0f);
    return make_node(std::move(out), "add", {a, b}, [](Node& n) {
        for (const auto& in : n.inputs) {
            if (in->requires_grad) {
                in->ensure_grad().add_scaled(n.grad, 1.0f);
            }
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require(a->value.same_shape(b->value), "mul: shape mismatch");
    Tensor out(a->value.shape());
    for (int64_t i = 0; i < out.numel(); ++i) {
        out[i] = a->value[i] * b->value[i];
    }
    return make_node(std::move(out), "mul", {a, b}, [](Node& n) {
        const Var& a_in = n.inputs[0];
        const Var& b_in = n.inputs[1];
        if (a_in->requires_grad) {
            Tensor& g = a_in->ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) {
                g[i] += n.grad[i] * b_in->value[i];
            }
        }
        if (b_in->requires_grad) {
            Tensor& g = b_in->ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) {
                g[i] += n.grad[i] * a_in->value[i];
            }
        }
    });
}

Var scale(const Var& a, float factor) {
    Tensor out = a->value;
    out.scale_inplace(factor);
    return make_node(std::move(out), "scale", {a}, [factor](Node& n) {
        if (n.inputs[0]->requires_grad) {
            n.inputs[0]->ensure_grad().add_scaled(n.grad, factor);
        }
    });
}

Var sum(const Var& a) {
    Tensor out({1});
    out[0] = static_cast<float>(a->value.sum());
    return make_node(std::move(out), "sum", {a}, [](Node& n) {
        if (n.inputs[0]->requires_grad) {
            Tensor& g = n.inputs[0]->ensure_grad();
            const float up = n.grad[0];
            for (int64_t i = 0; i < g.numel(); ++i) {
                g[i] += up;
            }
        }
    });
}

Var mse_loss(const Var& pred, const Tensor& target) {
    require(pred->value.same_shape(target), "mse_loss: shape mismatch " + pred->value.shape_str() +
                                                " vs " + target.shape_str());
    const int64_t count = pred->value.numel();
    double acc = 0.0;
    for (int64_t i = 0; i < count; ++i) {
        const double d = static_cast<double>(pred->value[i]) - target[i];
        acc += d * d;
    }
    Tensor out({1});
    out[0] = static_cast<float>(acc / static_cast<double>(count));
    auto target_copy = std::make_shared<Tensor>(target);
    return make_node(std::move(out), "mse_loss", {pred}, [target_copy, count](Node& n) {
        if (n.inputs[0]->requires_grad) {
            Tensor& g = n.inputs[0]->ensure_grad();
            const Tensor& p = n.inputs[0]->value;
            const float up = n.grad[0];
            const float k = 2.0f * up / static_cast<float>(count);
            for (int64_t i = 0; i < count; ++i) {
                g[i] += k * (p[i] - (*target_copy)[i]);
            }
        }
    });
}

Var select_pixel(const Var& input, int n, int c, int i, int j) {
    require(input->value.ndim() == 4, "select_pixel: expected NCHW tensor");
    require(n >= 0 && n < input->value.dim(0) && c >= 0 && c < input->value.dim(1) && i >= 0 &&
                i < input->value.dim(2) && j >= 0 && j < input->value.dim(3),
            strfmt("select_pixel: index (%d,%d,%d,%d) out of range for %s", n, c, i, j,
                   input->value.shape_str().c_str()));
    Tensor out({1});
    out[0] = input->value.at(n, c, i, j);
    return make_node(std::move(out), "select_pixel", {input}, [n, c, i, j](Node& nd) {
        if (nd.inputs[0]->requires_grad) {
            nd.inputs[0]->ensure_grad().at(n, c, i, j) += nd.grad[0];
        }
    });
}

void backward(const Var& root) {
    require(root->value.numel() == 1,
            "backward: root must be scalar, got shape " + root->value.shape_str());

    // Iterative postorder DFS; recursion depth would scale with graph depth.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->inputs.size()) {
            Node* child = node->inputs[idx].get();
            ++idx;
            if (child->requires_grad && visited.insert(child).second) {
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad()[0] = 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backfn && node->grad.numel() != 0) {
            node->backfn(*node);
        }
    }
}

}  // namespace vpred
