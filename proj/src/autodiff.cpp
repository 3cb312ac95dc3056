#include "segen/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_set>

namespace seg {

using EMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

namespace {

thread_local bool g_grad_enabled = true;

ECMap as_mat(const Tensor& t, int r, int c) { return ECMap(t.data.data(), r, c); }
EMap as_mat(Tensor& t, int r, int c) { return EMap(t.data.data(), r, c); }

void check2d(const Var& a, const char* who) {
    if (a->value.ndim() != 2) throw std::invalid_argument(std::string(who) + ": expected 2D tensor, got " + a->value.shape_str());
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn, const char* op) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = op;
    bool need = g_grad_enabled;
    if (need) {
        need = false;
        for (const auto& p : parents) {
            if (p->requires_grad) {
                need = true;
                break;
            }
        }
    }
    if (need) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backprop = std::move(fn);
    }
    return n;
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }

void Node::accumulate(const Tensor& g) {
    if (!has_grad()) grad = Tensor(value.shape);
    if (g.data.size() != grad.data.size()) throw std::logic_error("grad shape mismatch in accumulate");
    for (size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += g.data[i];
}

Var leaf(Tensor v, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    return n;
}

Var constant(Tensor v) { return leaf(std::move(v), false); }

void zero_grad(const Var& v) { v->grad.data.clear(); v->grad.shape.clear(); }

void backward(const Var& root) {
    if (root->value.numel() != 1) throw std::invalid_argument("backward: root must be a scalar");
    if (!root->requires_grad) return;

    // iterative postorder topological sort
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx].get();
            ++idx;
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->accumulate(Tensor({1}, 1.0f));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->has_grad()) n->backprop(*n);
    }
}

// ---------------------------------------------------------------------------
// elementwise

Var add(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("add: shape mismatch " + a->value.shape_str() + " vs " + b->value.shape_str());
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] + b->value[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->accumulate(n.grad);
        if (b->requires_grad) b->accumulate(n.grad);
    }, "add");
}

Var sub(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("sub: shape mismatch");
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] - b->value[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->accumulate(n.grad);
        if (b->requires_grad) {
            Tensor g(n.grad.shape);
            for (int64_t i = 0; i < g.numel(); ++i) g[i] = -n.grad[i];
            b->accumulate(g);
        }
    }, "sub");
}

Var mul(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("mul: shape mismatch");
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * b->value[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor g(n.grad.shape);
            for (int64_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i] * b->value[i];
            a->accumulate(g);
        }
        if (b->requires_grad) {
            Tensor g(n.grad.shape);
            for (int64_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i] * a->value[i];
            b->accumulate(g);
        }
    }, "mul");
}

Var scale(const Var& a, float s) {
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * s;
    return make_node(std::move(out), {a}, [a, s](Node& n) {
        Tensor g(n.grad.shape);
        for (int64_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i] * s;
        a->accumulate(g);
    }, "scale");
}

Var add_scalar(const Var& a, float s) {
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] + s;
    return make_node(std::move(out), {a}, [a](Node& n) { a->accumulate(n.grad); }, "add_scalar");
}

Var rsub_scalar(float s, const Var& a) {
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = s - a->value[i];
    return make_node(std::move(out), {a}, [a](Node& n) {
        Tensor g(n.grad.shape);
        for (int64_t i = 0; i < g.numel(); ++i) g[i] = -n.grad[i];
        a->accumulate(g);
    }, "rsub_scalar");
}

Var silu(const Var& a) {
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) {
        float x = a->value[i];
        out[i] = x / (1.0f + std::exp(-x));
    }
    return make_node(std::move(out), {a}, [a](Node& n) {
        Tensor g(n.grad.shape);
        for (int64_t i = 0; i < g.numel(); ++i) {
            float x = a->value[i];
            float s = 1.0f / (1.0f + std::exp(-x));
            g[i] = n.grad[i] * s * (1.0f + x * (1.0f - s));
        }
        a->accumulate(g);
    }, "silu");
}

// ---------------------------------------------------------------------------
// linear algebra

Var matmul(const Var& a, const Var& b) {
    check2d(a, "matmul");
    check2d(b, "matmul");
    int m = a->value.rows(), k = a->value.cols(), k2 = b->value.rows(), n = b->value.cols();
    if (k != k2) throw std::invalid_argument("matmul: inner dims " + a->value.shape_str() + " x " + b->value.shape_str());
    Tensor out({m, n});
    as_mat(out, m, n).noalias() = as_mat(a->value, m, k) * as_mat(b->value, k, n);
    return make_node(std::move(out), {a, b}, [a, b, m, k, n](Node& node) {
        ECMap g(node.grad.data.data(), m, n);
        if (a->requires_grad) {
            Tensor ga({m, k});
            as_mat(ga, m, k).noalias() = g * as_mat(b->value, k, n).transpose();
            a->accumulate(ga);
        }
        if (b->requires_grad) {
            Tensor gb({k, n});
            as_mat(gb, k, n).noalias() = as_mat(a->value, m, k).transpose() * g;
            b->accumulate(gb);
        }
    }, "matmul");
}

Var transpose(const Var& a) {
    check2d(a, "transpose");
    int m = a->value.rows(), n = a->value.cols();
    Tensor out({n, m});
    as_mat(out, n, m) = as_mat(a->value, m, n).transpose();
    return make_node(std::move(out), {a}, [a, m, n](Node& node) {
        Tensor g({m, n});
        as_mat(g, m, n) = ECMap(node.grad.data.data(), n, m).transpose();
        a->accumulate(g);
    }, "transpose");
}

Var softmax_rows(const Var& a) {
    check2d(a, "softmax_rows");
    int m = a->value.rows(), n = a->value.cols();
    Tensor out({m, n});
    for (int r = 0; r < m; ++r) {
        const float* in = &a->value.data[static_cast<size_t>(r) * n];
        float* o = &out.data[static_cast<size_t>(r) * n];
        float mx = in[0];
        for (int c = 1; c < n; ++c) mx = std::max(mx, in[c]);
        double denom = 0.0;
        for (int c = 0; c < n; ++c) {
            o[c] = std::exp(in[c] - mx);
            denom += o[c];
        }
        float inv = static_cast<float>(1.0 / denom);
        for (int c = 0; c < n; ++c) o[c] *= inv;
    }
    return make_node(std::move(out), {a}, [a, m, n](Node& node) {
        Tensor g({m, n});
        for (int r = 0; r < m; ++r) {
            const float* p = &node.value.data[static_cast<size_t>(r) * n];
            const float* dp = &node.grad.data[static_cast<size_t>(r) * n];
            double dot = 0.0;
            for (int c = 0; c < n; ++c) dot += static_cast<double>(dp[c]) * p[c];
            float* o = &g.data[static_cast<size_t>(r) * n];
            for (int c = 0; c < n; ++c) o[c] = p[c] * (dp[c] - static_cast<float>(dot));
        }
        a->accumulate(g);
    }, "softmax_rows");
}

Var add_bias_cols(const Var& x, const Var& b) {
    check2d(x, "add_bias_cols");
    int m = x->value.rows(), n = x->value.cols();
    if (b->value.numel() != n) throw std::invalid_argument("add_bias_cols: bias size");
    Tensor out({m, n});
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c) out.at(r, c) = x->value.at(r, c) + b->value[c];
    return make_node(std::move(out), {x, b}, [x, b, m, n](Node& node) {
        if (x->requires_grad) x->accumulate(node.grad);
        if (b->requires_grad) {
            Tensor g(b->value.shape);
            for (int c = 0; c < n; ++c) {
                double s = 0.0;
                for (int r = 0; r < m; ++r) s += node.grad.at(r, c);
                g[c] = static_cast<float>(s);
            }
            b->accumulate(g);
        }
    }, "add_bias_cols");
}

Var row_scale(const Var& a, const Tensor& s) {
    check2d(a, "row_scale");
    int m = a->value.rows(), n = a->value.cols();
    if (s.numel() != m) throw std::invalid_argument("row_scale: scale vector size");
    Tensor out({m, n});
    for (int r = 0; r < m; ++r) {
        float f = s[r];
        for (int c = 0; c < n; ++c) out.at(r, c) = a->value.at(r, c) * f;
    }
    return make_node(std::move(out), {a}, [a, s, m, n](Node& node) {
        Tensor g({m, n});
        for (int r = 0; r < m; ++r) {
            float f = s[r];
            for (int c = 0; c < n; ++c) g.at(r, c) = node.grad.at(r, c) * f;
        }
        a->accumulate(g);
    }, "row_scale");
}

Var slice_cols(const Var& a, int c0, int c1) {
    check2d(a, "slice_cols");
    int m = a->value.rows(), n = a->value.cols();
    if (c0 < 0 || c1 > n || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
    int w = c1 - c0;
    Tensor out({m, w});
    for (int r = 0; r < m; ++r)
        std::memcpy(&out.data[static_cast<size_t>(r) * w], &a->value.data[static_cast<size_t>(r) * n + c0], sizeof(float) * w);
    return make_node(std::move(out), {a}, [a, c0, w, m, n](Node& node) {
        Tensor g({m, n});
        for (int r = 0; r < m; ++r)
            std::memcpy(&g.data[static_cast<size_t>(r) * n + c0], &node.grad.data[static_cast<size_t>(r) * w], sizeof(float) * w);
        a->accumulate(g);
    }, "slice_cols");
}

Var concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_cols: empty");
    int m = xs[0]->value.rows();
    int total = 0;
    for (const auto& x : xs) {
        check2d(x, "concat_cols");
        if (x->value.rows() != m) throw std::invalid_argument("concat_cols: row mismatch");
        total += x->value.cols();
    }
    Tensor out({m, total});
    int off = 0;
    for (const auto& x : xs) {
        int w = x->value.cols();
        for (int r = 0; r < m; ++r)
            std::memcpy(&out.data[static_cast<size_t>(r) * total + off], &x->value.data[static_cast<size_t>(r) * w], sizeof(float) * w);
        off += w;
    }
    return make_node(std::move(out), xs, [xs, m, total](Node& node) {
        int off = 0;
        for (const auto& x : xs) {
            int w = x->value.cols();
            if (x->requires_grad) {
                Tensor g({m, w});
                for (int r = 0; r < m; ++r)
                    std::memcpy(&g.data[static_cast<size_t>(r) * w], &node.grad.data[static_cast<size_t>(r) * total + off], sizeof(float) * w);
                x->accumulate(g);
            }
            off += w;
        }
    }, "concat_cols");
}

Var concat_rows(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_rows: empty");
    int n = xs[0]->value.cols();
    int total = 0;
    for (const auto& x : xs) {
        check2d(x, "concat_rows");
        if (x->value.cols() != n) throw std::invalid_argument("concat_rows: col mismatch");
        total += x->value.rows();
    }
    Tensor out({total, n});
    size_t off = 0;
    for (const auto& x : xs) {
        std::memcpy(&out.data[off], x->value.data.data(), sizeof(float) * x->value.data.size());
        off += x->value.data.size();
    }
    return make_node(std::move(out), xs, [xs](Node& node) {
        size_t off = 0;
        for (const auto& x : xs) {
            if (x->requires_grad) {
                Tensor g(x->value.shape);
                std::memcpy(g.data.data(), &node.grad.data[off], sizeof(float) * g.data.size());
                x->accumulate(g);
            }
            off += x->value.data.size();
        }
    }, "concat_rows");
}

Var embedding_rows(const Var& table, const std::vector<int>& ids) {
    check2d(table, "embedding_rows");
    int v = table->value.rows(), d = table->value.cols();
    Tensor out({static_cast<int>(ids.size()), d});
    for (size_t i = 0; i < ids.size(); ++i) {
        int id = ids[i];
        if (id < 0 || id >= v) throw std::out_of_range("embedding_rows: id out of range");
        std::memcpy(&out.data[i * d], &table->value.data[static_cast<size_t>(id) * d], sizeof(float) * d);
    }
    return make_node(std::move(out), {table}, [table, ids, d](Node& node) {
        Tensor g(table->value.shape);
        for (size_t i = 0; i < ids.size(); ++i) {
            float* dst = &g.data[static_cast<size_t>(ids[i]) * d];
            const float* src = &node.grad.data[i * d];
            for (int c = 0; c < d; ++c) dst[c] += src[c];
        }
        table->accumulate(g);
    }, "embedding_rows");
}

Var l2norm_rows(const Var& x, float eps) {
    check2d(x, "l2norm_rows");
    int m = x->value.rows(), n = x->value.cols();
    Tensor out({m, n});
    std::vector<float> norms(m);
    for (int r = 0; r < m; ++r) {
        const float* in = &x->value.data[static_cast<size_t>(r) * n];
        double s = 0.0;
        for (int c = 0; c < n; ++c) s += static_cast<double>(in[c]) * in[c];
        float nr = static_cast<float>(std::sqrt(s + eps));
        norms[r] = nr;
        for (int c = 0; c < n; ++c) out.at(r, c) = in[c] / nr;
    }
    return make_node(std::move(out), {x}, [x, norms, m, n](Node& node) {
        Tensor g({m, n});
        for (int r = 0; r < m; ++r) {
            const float* y = &node.value.data[static_cast<size_t>(r) * n];
            const float* dy = &node.grad.data[static_cast<size_t>(r) * n];
            double dot = 0.0;
            for (int c = 0; c < n; ++c) dot += static_cast<double>(y[c]) * dy[c];
            for (int c = 0; c < n; ++c) g.at(r, c) = (dy[c] - y[c] * static_cast<float>(dot)) / norms[r];
        }
        x->accumulate(g);
    }, "l2norm_rows");
}

Var rmsnorm_rows(const Var& x, const Var& gain, float eps) {
    check2d(x, "rmsnorm_rows");
    int m = x->value.rows(), n = x->value.cols();
    if (gain->value.numel() != n) throw std::invalid_argument("rmsnorm_rows: gain size");
    Tensor out({m, n});
    std::vector<float> rms(m);
    for (int r = 0; r < m; ++r) {
        const float* in = &x->value.data[static_cast<size_t>(r) * n];
        double s = 0.0;
        for (int c = 0; c < n; ++c) s += static_cast<double>(in[c]) * in[c];
        float rr = static_cast<float>(std::sqrt(s / n + eps));
        rms[r] = rr;
        for (int c = 0; c < n; ++c) out.at(r, c) = gain->value[c] * in[c] / rr;
    }
    return make_node(std::move(out), {x, gain}, [x, gain, rms, m, n](Node& node) {
        if (x->requires_grad) {
            Tensor g({m, n});
            for (int r = 0; r < m; ++r) {
                const float* in = &x->value.data[static_cast<size_t>(r) * n];
                const float* dy = &node.grad.data[static_cast<size_t>(r) * n];
                float rr = rms[r];
                double dot = 0.0;  // sum_j g_j dy_j x_j
                for (int c = 0; c < n; ++c) dot += static_cast<double>(gain->value[c]) * dy[c] * in[c];
                float k = static_cast<float>(dot) / (n * rr * rr * rr);
                for (int c = 0; c < n; ++c) g.at(r, c) = gain->value[c] * dy[c] / rr - in[c] * k;
            }
            x->accumulate(g);
        }
        if (gain->requires_grad) {
            Tensor g(gain->value.shape);
            for (int c = 0; c < n; ++c) {
                double s = 0.0;
                for (int r = 0; r < m; ++r) s += static_cast<double>(node.grad.at(r, c)) * x->value.at(r, c) / rms[r];
                g[c] = static_cast<float>(s);
            }
            gain->accumulate(g);
        }
    }, "rmsnorm_rows");
}

// ---------------------------------------------------------------------------
// conv / spatial

namespace {

void im2col(const Tensor& x, int kh, int kw, int stride, int pad, int ho, int wo, Tensor& cols) {
    int ci = x.shape[0], h = x.shape[1], w = x.shape[2];
    // cols: [ci*kh*kw, ho*wo]
    int patch = ho * wo;
    for (int c = 0; c < ci; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                float* dst = &cols.data[static_cast<size_t>((c * kh + ky) * kw + kx) * patch];
                for (int oy = 0; oy < ho; ++oy) {
                    int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst + static_cast<size_t>(oy) * wo, dst + static_cast<size_t>(oy + 1) * wo, 0.0f);
                        continue;
                    }
                    const float* src = &x.data[(static_cast<size_t>(c) * h + iy) * w];
                    for (int ox = 0; ox < wo; ++ox) {
                        int ix = ox * stride + kx - pad;
                        dst[static_cast<size_t>(oy) * wo + ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im_add(const Tensor& cols, int ci, int h, int w, int kh, int kw, int stride, int pad, int ho, int wo, Tensor& x) {
    int patch = ho * wo;
    for (int c = 0; c < ci; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                const float* src = &cols.data[static_cast<size_t>((c * kh + ky) * kw + kx) * patch];
                for (int oy = 0; oy < ho; ++oy) {
                    int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    float* dst = &x.data[(static_cast<size_t>(c) * h + iy) * w];
                    for (int ox = 0; ox < wo; ++ox) {
                        int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < w) dst[ix] += src[static_cast<size_t>(oy) * wo + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    if (x->value.ndim() != 3) throw std::invalid_argument("conv2d: x must be [C,H,W]");
    if (w->value.ndim() != 4) throw std::invalid_argument("conv2d: w must be [Co,Ci,kh,kw]");
    int ci = x->value.shape[0], h = x->value.shape[1], wi = x->value.shape[2];
    int co = w->value.shape[0], wci = w->value.shape[1], kh = w->value.shape[2], kw = w->value.shape[3];
    if (ci != wci) throw std::invalid_argument("conv2d: channel mismatch");
    if (b && b->value.numel() != 0 && b->value.numel() != co) throw std::invalid_argument("conv2d: bias size");
    int ho = (h + 2 * pad - kh) / stride + 1;
    int wo = (wi + 2 * pad - kw) / stride + 1;
    if (ho <= 0 || wo <= 0) throw std::invalid_argument("conv2d: empty output");

    int k = ci * kh * kw, patch = ho * wo;
    Tensor cols({k, patch});
    im2col(x->value, kh, kw, stride, pad, ho, wo, cols);
    Tensor out({co, ho, wo});
    as_mat(out, co, patch).noalias() = as_mat(w->value, co, k) * as_mat(cols, k, patch);
    if (b && b->value.numel() == co) {
        for (int c = 0; c < co; ++c) {
            float bv = b->value[c];
            float* o = &out.data[static_cast<size_t>(c) * patch];
            for (int i = 0; i < patch; ++i) o[i] += bv;
        }
    }
    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make_node(std::move(out), std::move(parents),
                     [x, w, b, stride, pad, ci, h, wi, co, kh, kw, ho, wo, k, patch](Node& node) {
        ECMap gy(node.grad.data.data(), co, patch);
        if (w->requires_grad || x->requires_grad) {
            Tensor cols({k, patch});
            im2col(x->value, kh, kw, stride, pad, ho, wo, cols);
            if (w->requires_grad) {
                Tensor gw(w->value.shape);
                as_mat(gw, co, k).noalias() = gy * as_mat(cols, k, patch).transpose();
                w->accumulate(gw);
            }
            if (x->requires_grad) {
                Tensor gcols({k, patch});
                as_mat(gcols, k, patch).noalias() = as_mat(w->value, co, k).transpose() * gy;
                Tensor gx({ci, h, wi});
                col2im_add(gcols, ci, h, wi, kh, kw, stride, pad, ho, wo, gx);
                x->accumulate(gx);
            }
        }
        if (b && b->requires_grad) {
            Tensor gb(b->value.shape);
            for (int c = 0; c < co; ++c) {
                double s = 0.0;
                for (int i = 0; i < patch; ++i) s += node.grad.data[static_cast<size_t>(c) * patch + i];
                gb[c] = static_cast<float>(s);
            }
            b->accumulate(gb);
        }
    }, "conv2d");
}

Var pad_reflect(const Var& x, int p) {
    if (x->value.ndim() != 3) throw std::invalid_argument("pad_reflect: x must be [C,H,W]");
    int c = x->value.shape[0], h = x->value.shape[1], w = x->value.shape[2];
    if (p >= h || p >= w) throw std::invalid_argument("pad_reflect: pad too large");
    int ho = h + 2 * p, wo = w + 2 * p;
    auto refl = [](int i, int n) {
        if (i < 0) return -i - 1;      // symmetric: -1 -> 0, -2 -> 1
        if (i >= n) return 2 * n - i - 1;
        return i;
    };
    Tensor out({c, ho, wo});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < ho; ++y)
            for (int xx = 0; xx < wo; ++xx)
                out.data[(static_cast<size_t>(ch) * ho + y) * wo + xx] =
                    x->value.data[(static_cast<size_t>(ch) * h + refl(y - p, h)) * w + refl(xx - p, w)];
    return make_node(std::move(out), {x}, [x, p, c, h, w, ho, wo, refl](Node& node) {
        Tensor g({c, h, w});
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < ho; ++y)
                for (int xx = 0; xx < wo; ++xx)
                    g.data[(static_cast<size_t>(ch) * h + refl(y - p, h)) * w + refl(xx - p, w)] +=
                        node.grad.data[(static_cast<size_t>(ch) * ho + y) * wo + xx];
        x->accumulate(g);
    }, "pad_reflect");
}

Var upsample_nearest2(const Var& x) {
    if (x->value.ndim() != 3) throw std::invalid_argument("upsample_nearest2: x must be [C,H,W]");
    int c = x->value.shape[0], h = x->value.shape[1], w = x->value.shape[2];
    Tensor out({c, h * 2, w * 2});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h * 2; ++y)
            for (int xx = 0; xx < w * 2; ++xx)
                out.data[(static_cast<size_t>(ch) * h * 2 + y) * w * 2 + xx] =
                    x->value.data[(static_cast<size_t>(ch) * h + y / 2) * w + xx / 2];
    return make_node(std::move(out), {x}, [x, c, h, w](Node& node) {
        Tensor g({c, h, w});
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h * 2; ++y)
                for (int xx = 0; xx < w * 2; ++xx)
                    g.data[(static_cast<size_t>(ch) * h + y / 2) * w + xx / 2] +=
                        node.grad.data[(static_cast<size_t>(ch) * h * 2 + y) * w * 2 + xx];
        x->accumulate(g);
    }, "upsample_nearest2");
}

Var avgpool2(const Var& x) {
    if (x->value.ndim() != 3) throw std::invalid_argument("avgpool2: x must be [C,H,W]");
    int c = x->value.shape[0], h = x->value.shape[1], w = x->value.shape[2];
    if (h % 2 || w % 2) throw std::invalid_argument("avgpool2: odd spatial size");
    int ho = h / 2, wo = w / 2;
    Tensor out({c, ho, wo});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < ho; ++y)
            for (int xx = 0; xx < wo; ++xx) {
                const float* base = &x->value.data[(static_cast<size_t>(ch) * h + 2 * y) * w + 2 * xx];
                out.data[(static_cast<size_t>(ch) * ho + y) * wo + xx] = 0.25f * (base[0] + base[1] + base[w] + base[w + 1]);
            }
    return make_node(std::move(out), {x}, [x, c, h, w, ho, wo](Node& node) {
        Tensor g({c, h, w});
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < ho; ++y)
                for (int xx = 0; xx < wo; ++xx) {
                    float v = 0.25f * node.grad.data[(static_cast<size_t>(ch) * ho + y) * wo + xx];
                    float* base = &g.data[(static_cast<size_t>(ch) * h + 2 * y) * w + 2 * xx];
                    base[0] += v;
                    base[1] += v;
                    base[w] += v;
                    base[w + 1] += v;
                }
        x->accumulate(g);
    }, "avgpool2");
}

Var concat_channels(const Var& a, const Var& b) {
    if (a->value.ndim() != 3 || b->value.ndim() != 3) throw std::invalid_argument("concat_channels: [C,H,W] expected");
    if (a->value.shape[1] != b->value.shape[1] || a->value.shape[2] != b->value.shape[2])
        throw std::invalid_argument("concat_channels: spatial mismatch");
    int ca = a->value.shape[0], cb = b->value.shape[0], h = a->value.shape[1], w = a->value.shape[2];
    Tensor out({ca + cb, h, w});
    std::memcpy(out.data.data(), a->value.data.data(), sizeof(float) * a->value.data.size());
    std::memcpy(out.data.data() + a->value.data.size(), b->value.data.data(), sizeof(float) * b->value.data.size());
    return make_node(std::move(out), {a, b}, [a, b](Node& node) {
        if (a->requires_grad) {
            Tensor g(a->value.shape);
            std::memcpy(g.data.data(), node.grad.data.data(), sizeof(float) * g.data.size());
            a->accumulate(g);
        }
        if (b->requires_grad) {
            Tensor g(b->value.shape);
            std::memcpy(g.data.data(), node.grad.data.data() + a->value.data.size(), sizeof(float) * g.data.size());
            b->accumulate(g);
        }
    }, "concat_channels");
}

Var add_channel_bias(const Var& x, const Var& b) {
    if (x->value.ndim() != 3) throw std::invalid_argument("add_channel_bias: x must be [C,H,W]");
    int c = x->value.shape[0], hw = x->value.shape[1] * x->value.shape[2];
    if (b->value.numel() != c) throw std::invalid_argument("add_channel_bias: bias size");
    Tensor out(x->value.shape);
    for (int ch = 0; ch < c; ++ch) {
        float bv = b->value[ch];
        for (int i = 0; i < hw; ++i) out.data[static_cast<size_t>(ch) * hw + i] = x->value.data[static_cast<size_t>(ch) * hw + i] + bv;
    }
    return make_node(std::move(out), {x, b}, [x, b, c, hw](Node& node) {
        if (x->requires_grad) x->accumulate(node.grad);
        if (b->requires_grad) {
            Tensor g(b->value.shape);
            for (int ch = 0; ch < c; ++ch) {
                double s = 0.0;
                for (int i = 0; i < hw; ++i) s += node.grad.data[static_cast<size_t>(ch) * hw + i];
                g[ch] = static_cast<float>(s);
            }
            b->accumulate(g);
        }
    }, "add_channel_bias");
}

Var rmsnorm_channels(const Var& x, const Var& gain, float eps) {
    if (x->value.ndim() != 3) throw std::invalid_argument("rmsnorm_channels: x must be [C,H,W]");
    int c = x->value.shape[0], h = x->value.shape[1], w = x->value.shape[2];
    if (gain->value.numel() != c) throw std::invalid_argument("rmsnorm_channels: gain size");
    int hw = h * w;
    Tensor out(x->value.shape);
    Tensor rms({hw});
    for (int i = 0; i < hw; ++i) {
        double s = 0.0;
        for (int ch = 0; ch < c; ++ch) {
            float v = x->value.data[static_cast<size_t>(ch) * hw + i];
            s += static_cast<double>(v) * v;
        }
        float rr = static_cast<float>(std::sqrt(s / c + eps));
        rms[i] = rr;
        for (int ch = 0; ch < c; ++ch)
            out.data[static_cast<size_t>(ch) * hw + i] = gain->value[ch] * x->value.data[static_cast<size_t>(ch) * hw + i] / rr;
    }
    return make_node(std::move(out), {x, gain}, [x, gain, rms, c, hw](Node& node) {
        if (x->requires_grad) {
            Tensor g(x->value.shape);
            for (int i = 0; i < hw; ++i) {
                float rr = rms[i];
                double dot = 0.0;
                for (int ch = 0; ch < c; ++ch)
                    dot += static_cast<double>(gain->value[ch]) * node.grad.data[static_cast<size_t>(ch) * hw + i] *
                           x->value.data[static_cast<size_t>(ch) * hw + i];
                float k = static_cast<float>(dot) / (c * rr * rr * rr);
                for (int ch = 0; ch < c; ++ch)
                    g.data[static_cast<size_t>(ch) * hw + i] =
                        gain->value[ch] * node.grad.data[static_cast<size_t>(ch) * hw + i] / rr -
                        x->value.data[static_cast<size_t>(ch) * hw + i] * k;
            }
            x->accumulate(g);
        }
        if (gain->requires_grad) {
            Tensor g(gain->value.shape);
            for (int ch = 0; ch < c; ++ch) {
                double s = 0.0;
                for (int i = 0; i < hw; ++i)
                    s += static_cast<double>(node.grad.data[static_cast<size_t>(ch) * hw + i]) *
                         x->value.data[static_cast<size_t>(ch) * hw + i] / rms[i];
                g[ch] = static_cast<float>(s);
            }
            gain->accumulate(g);
        }
    }, "rmsnorm_channels");
}

Var chw_to_tokens(const Var& x) {
    if (x->value.ndim() != 3) throw std::invalid_argument("chw_to_tokens: x must be [C,H,W]");
    int c = x->value.shape[0], hw = x->value.shape[1] * x->value.shape[2];
    Tensor out({hw, c});
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < hw; ++i) out.at(i, ch) = x->value.data[static_cast<size_t>(ch) * hw + i];
    return make_node(std::move(out), {x}, [x, c, hw](Node& node) {
        Tensor g(x->value.shape);
        for (int ch = 0; ch < c; ++ch)
            for (int i = 0; i < hw; ++i) g.data[static_cast<size_t>(ch) * hw + i] = node.grad.at(i, ch);
        x->accumulate(g);
    }, "chw_to_tokens");
}

Var tokens_to_chw(const Var& x, int c, int h, int w) {
    check2d(x, "tokens_to_chw");
    if (x->value.rows() != h * w || x->value.cols() != c) throw std::invalid_argument("tokens_to_chw: shape mismatch");
    int hw = h * w;
    Tensor out({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < hw; ++i) out.data[static_cast<size_t>(ch) * hw + i] = x->value.at(i, ch);
    return make_node(std::move(out), {x}, [x, c, hw](Node& node) {
        Tensor g(x->value.shape);
        for (int ch = 0; ch < c; ++ch)
            for (int i = 0; i < hw; ++i) g.at(i, ch) = node.grad.data[static_cast<size_t>(ch) * hw + i];
        x->accumulate(g);
    }, "tokens_to_chw");
}

// ---------------------------------------------------------------------------
// reductions

Var mean_all(const Var& a) {
    double s = 0.0;
    for (float v : a->value.data) s += v;
    int64_t n = a->value.numel();
    Tensor out({1}, static_cast<float>(s / n));
    return make_node(std::move(out), {a}, [a, n](Node& node) {
        Tensor g(a->value.shape, node.grad[0] / static_cast<float>(n));
        a->accumulate(g);
    }, "mean_all");
}

Var sum_all(const Var& a) {
    double s = 0.0;
    for (float v : a->value.data) s += v;
    Tensor out({1}, static_cast<float>(s));
    return make_node(std::move(out), {a}, [a](Node& node) {
        Tensor g(a->value.shape, node.grad[0]);
        a->accumulate(g);
    }, "sum_all");
}

Var reduce_max_all(const Var& a) {
    if (a->value.numel() == 0) throw std::invalid_argument("reduce_max_all: empty tensor");
    int64_t arg = 0;
    float best = a->value[0];
    for (int64_t i = 1; i < a->value.numel(); ++i)
        if (a->value[i] > best) { best = a->value[i]; arg = i; }
    Tensor out({1}, best);
    return make_node(std::move(out), {a}, [a, arg](Node& node) {
        Tensor g(a->value.shape);
        g[arg] = node.grad[0];
        a->accumulate(g);
    }, "reduce_max_all");
}

Var reduce_min_all(const Var& a) {
    if (a->value.numel() == 0) throw std::invalid_argument("reduce_min_all: empty tensor");
    int64_t arg = 0;
    float best = a->value[0];
    for (int64_t i = 1; i < a->value.numel(); ++i)
        if (a->value[i] < best) { best = a->value[i]; arg = i; }
    Tensor out({1}, best);
    return make_node(std::move(out), {a}, [a, arg](Node& node) {
        Tensor g(a->value.shape);
        g[arg] = node.grad[0];
        a->accumulate(g);
    }, "reduce_min_all");
}

Var concat_scalars(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_scalars: empty");
    Tensor out({static_cast<int>(xs.size())});
    for (size_t i = 0; i < xs.size(); ++i) {
        if (xs[i]->value.numel() != 1) throw std::invalid_argument("concat_scalars: non-scalar input");
        out[static_cast<int64_t>(i)] = xs[i]->value[0];
    }
    return make_node(std::move(out), xs, [xs](Node& node) {
        for (size_t i = 0; i < xs.size(); ++i)
            if (xs[i]->requires_grad) xs[i]->accumulate(Tensor({1}, node.grad[static_cast<int64_t>(i)]));
    }, "concat_scalars");
}

Var mean_axis0(const Var& a) {
    if (a->value.ndim() != 3) throw std::invalid_argument("mean_axis0: expected [k,m,n]");
    int k = a->value.shape[0], m = a->value.shape[1], n = a->value.shape[2];
    int64_t mn = static_cast<int64_t>(m) * n;
    Tensor out({m, n});
    for (int64_t i = 0; i < mn; ++i) {
        double s = 0.0;
        for (int j = 0; j < k; ++j) s += a->value.data[static_cast<size_t>(j) * mn + i];
        out[i] = static_cast<float>(s / k);
    }
    return make_node(std::move(out), {a}, [a, k, mn](Node& node) {
        Tensor g(a->value.shape);
        for (int64_t i = 0; i < mn; ++i) {
            float v = node.grad[i] / static_cast<float>(k);
            for (int j = 0; j < k; ++j) g.data[static_cast<size_t>(j) * mn + i] = v;
        }
        a->accumulate(g);
    }, "mean_axis0");
}

Var select_cols_mean(const Var& a, const std::vector<int>& cols) {
    check2d(a, "select_cols_mean");
    if (cols.empty()) throw std::invalid_argument("select_cols_mean: empty column set");
    int m = a->value.rows(), n = a->value.cols();
    for (int c : cols)
        if (c < 0 || c >= n) throw std::out_of_range("select_cols_mean: column out of range");
    Tensor out({m});
    for (int r = 0; r < m; ++r) {
        double s = 0.0;
        for (int c : cols) s += a->value.at(r, c);
        out[r] = static_cast<float>(s / cols.size());
    }
    return make_node(std::move(out), {a}, [a, cols, m, n](Node& node) {
        Tensor g({m, n});
        float inv = 1.0f / static_cast<float>(cols.size());
        for (int r = 0; r < m; ++r) {
            float v = node.grad[r] * inv;
            for (int c : cols) g.at(r, c) += v;
        }
        a->accumulate(g);
    }, "select_cols_mean");
}

Var exclude_col_renorm_rows(const Var& a, int col) {
    check2d(a, "exclude_col_renorm_rows");
    int m = a->value.rows(), n = a->value.cols();
    if (col < 0 || col >= n) throw std::out_of_range("exclude_col_renorm_rows: column out of range");
    if (n < 2) throw std::invalid_argument("exclude_col_renorm_rows: need at least 2 columns");
    Tensor out({m, n});
    std::vector<float> sums(m);
    for (int r = 0; r < m; ++r) {
        double s = 0.0;
        for (int c = 0; c < n; ++c)
            if (c != col) s += a->value.at(r, c);
        if (s <= 0.0) throw std::runtime_error("exclude_col_renorm_rows: row mass is zero outside excluded column");
        sums[r] = static_cast<float>(s);
        for (int c = 0; c < n; ++c) out.at(r, c) = (c == col) ? 0.0f : a->value.at(r, c) / sums[r];
    }
    return make_node(std::move(out), {a}, [a, col, sums, m, n](Node& node) {
        Tensor g({m, n});
        for (int r = 0; r < m; ++r) {
            double dot = 0.0;  // sum_j dy_j * y_j
            for (int c = 0; c < n; ++c) dot += static_cast<double>(node.grad.at(r, c)) * node.value.at(r, c);
            for (int c = 0; c < n; ++c)
                g.at(r, c) = (c == col) ? 0.0f : (node.grad.at(r, c) - static_cast<float>(dot)) / sums[r];
        }
        a->accumulate(g);
    }, "exclude_col_renorm_rows");
}

Var reshape(const Var& a, std::vector<int> shape) {
    if (Tensor::numel_of(shape) != a->value.numel()) throw std::invalid_argument("reshape: numel mismatch");
    Tensor out(shape, a->value.data);
    return make_node(std::move(out), {a}, [a](Node& node) {
        Tensor g(a->value.shape, node.grad.data);
        a->accumulate(g);
    }, "reshape");
}

Var softmax_xent_diag(const Var& logits) {
    check2d(logits, "softmax_xent_diag");
    int m = logits->value.rows(), n = logits->value.cols();
    if (m > n) throw std::invalid_argument("softmax_xent_diag: diagonal targets need rows<=cols");
    Tensor probs({m, n});
    double loss = 0.0;
    for (int r = 0; r < m; ++r) {
        const float* in = &logits->value.data[static_cast<size_t>(r) * n];
        float mx = in[0];
        for (int c = 1; c < n; ++c) mx = std::max(mx, in[c]);
        double denom = 0.0;
        for (int c = 0; c < n; ++c) denom += std::exp(static_cast<double>(in[c]) - mx);
        for (int c = 0; c < n; ++c) probs.at(r, c) = static_cast<float>(std::exp(static_cast<double>(in[c]) - mx) / denom);
        loss += -(static_cast<double>(in[r]) - mx - std::log(denom));
    }
    Tensor out({1}, static_cast<float>(loss / m));
    return make_node(std::move(out), {logits}, [logits, probs, m, n](Node& node) {
        Tensor g({m, n});
        float k = node.grad[0] / static_cast<float>(m);
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < n; ++c) g.at(r, c) = k * (probs.at(r, c) - (r == c ? 1.0f : 0.0f));
        logits->accumulate(g);
    }, "softmax_xent_diag");
}

Var mse(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("mse: shape mismatch");
    int64_t n = a->value.numel();
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double d = static_cast<double>(a->value[i]) - b->value[i];
        s += d * d;
    }
    Tensor out({1}, static_cast<float>(s / n));
    return make_node(std::move(out), {a, b}, [a, b, n](Node& node) {
        float k = 2.0f * node.grad[0] / static_cast<float>(n);
        if (a->requires_grad) {
            Tensor g(a->value.shape);
            for (int64_t i = 0; i < n; ++i) g[i] = k * (a->value[i] - b->value[i]);
            a->accumulate(g);
        }
        if (b->requires_grad) {
            Tensor g(b->value.shape);
            for (int64_t i = 0; i < n; ++i) g[i] = k * (b->value[i] - a->value[i]);
            b->accumulate(g);
        }
    }, "mse");
}

}  // namespace seg
