#include "segen/nn.hpp"

#include <cmath>

namespace seg {

Linear::Linear(ParamStore& ps, const std::string& name, int din, int dout, RandomStream& rng, bool bias) {
    Tensor wt({din, dout});
    rng.fill_normal(wt, 0.0f, std::sqrt(1.0f / static_cast<float>(din)));
    w = ps.make(name + ".w", std::move(wt));
    if (bias) b = ps.make(name + ".b", Tensor({dout}));
}

Conv2d::Conv2d(ParamStore& ps, const std::string& name, int ci, int co, int k, int stride_, int pad_, RandomStream& rng)
    : stride(stride_), pad(pad_) {
    Tensor wt({co, ci, k, k});
    rng.fill_normal(wt, 0.0f, std::sqrt(2.0f / static_cast<float>(ci * k * k)));
    w = ps.make(name + ".w", std::move(wt));
    b = ps.make(name + ".b", Tensor({co}));
}

void AdamOptimizer::step(ParamStore& ps) {
    ++t;
    float bc1 = 1.0f - std::pow(beta1, static_cast<float>(t));
    float bc2 = 1.0f - std::pow(beta2, static_cast<float>(t));
    for (auto& [name, p] : ps.items) {
        if (!p->has_grad()) continue;
        auto& [m, v] = slots[p.get()];
        if (m.data.empty()) {
            m = Tensor(p->value.shape);
            v = Tensor(p->value.shape);
        }
        for (int64_t i = 0; i < p->value.numel(); ++i) {
            float g = p->grad[i];
            m[i] = beta1 * m[i] + (1.0f - beta1) * g;
            v[i] = beta2 * v[i] + (1.0f - beta2) * g * g;
            float mh = m[i] / bc1;
            float vh = v[i] / bc2;
            p->value[i] -= lr * mh / (std::sqrt(vh) + eps);
        }
        zero_grad(p);
    }
}

}  // namespace seg
