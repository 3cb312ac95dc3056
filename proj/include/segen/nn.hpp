#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "segen/autodiff.hpp"
#include "segen/tensor.hpp"

namespace seg {

// Named trainable leaves. Checkpoint order equals registration order, so a
// model built the same way always serializes identically.
struct ParamStore {
    std::vector<std::pair<std::string, Var>> items;

    Var make(const std::string& name, Tensor init) {
        for (auto& [n, v] : items)
            if (n == name) throw std::logic_error("duplicate parameter name: " + name);
        Var v = leaf(std::move(init), true);
        items.emplace_back(name, v);
        return v;
    }
    int64_t count() const {
        int64_t n = 0;
        for (auto& [name, v] : items) n += v->value.numel();
        return n;
    }
    void set_requires_grad(bool b) {
        for (auto& [name, v] : items) v->requires_grad = b;
    }
    void zero_grads() {
        for (auto& [name, v] : items) zero_grad(v);
    }
};

struct Linear {
    Var w, b;  // w[din,dout], b[dout] (may be null)
    Linear() = default;
    Linear(ParamStore& ps, const std::string& name, int din, int dout, RandomStream& rng, bool bias = true);
    Var forward(const Var& x) const { return b ? add_bias_cols(matmul(x, w), b) : matmul(x, w); }
};

struct Conv2d {
    Var w, b;  // w[co,ci,k,k]
    int stride = 1, pad = 1;
    Conv2d() = default;
    Conv2d(ParamStore& ps, const std::string& name, int ci, int co, int k, int stride, int pad, RandomStream& rng);
    Var forward(const Var& x) const { return conv2d(x, w, b, stride, pad); }
};

struct ChannelNorm {
    Var gain;
    ChannelNorm() = default;
    ChannelNorm(ParamStore& ps, const std::string& name, int c) { gain = ps.make(name + ".g", Tensor({c}, 1.0f)); }
    Var forward(const Var& x) const { return rmsnorm_channels(x, gain); }
};

struct RowNorm {
    Var gain;
    RowNorm() = default;
    RowNorm(ParamStore& ps, const std::string& name, int d) { gain = ps.make(name + ".g", Tensor({d}, 1.0f)); }
    Var forward(const Var& x) const { return rmsnorm_rows(x, gain); }
};

struct AdamOptimizer {
    float lr;
    float beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f;
    int64_t t = 0;
    std::unordered_map<Node*, std::pair<Tensor, Tensor>> slots;

    explicit AdamOptimizer(float lr_) : lr(lr_) {}
    void step(ParamStore& ps);
};

}  // namespace seg
