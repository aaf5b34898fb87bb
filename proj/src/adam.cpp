#include "vpred/adam.hpp"

#include <cmath>

namespace vpred {

AdamState AdamState::init(const std::vector<Tensor*>& params, float lr) {
    AdamState st;
    st.lr = lr;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const Tensor* p : params) {
        st.m.emplace_back(p->shape());
        st.v.emplace_back(p->shape());
    }
    return st;
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads, AdamState& state) {
    require(params.size() == grads.size(), "adam_step: params/grads count mismatch");
    require(params.size() == state.m.size(), "adam_step: state initialized for a different parameter list");

    state.step += 1;
    const double b1 = state.beta1, b2 = state.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = *params[pi];
        const Tensor& g = *grads[pi];
        require(p.same_shape(g), strfmt("adam_step: param %zu shape %s vs grad %s", pi,
                                        p.shape_str().c_str(), g.shape_str().c_str()));
        require(p.same_shape(state.m[pi]), "adam_step: moment shape mismatch");

        Tensor& m = state.m[pi];
        Tensor& v = state.v[pi];
        const int64_t n = p.numel();
        for (int64_t i = 0; i < n; ++i) {
            const double gi = g[i];
            const double mi = b1 * m[i] + (1.0 - b1) * gi;
            const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double m_hat = mi / bc1;
            const double v_hat = vi / bc2;
            p[i] = static_cast<float>(p[i] - state.lr * m_hat / (std::sqrt(v_hat) + state.eps));
        }
    }
}

}  // namespace vpred
