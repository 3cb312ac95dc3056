#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "segen/autodiff.hpp"
#include "segen/nn.hpp"

using namespace seg;

namespace {

// Central finite differences against the analytic gradient of a scalar graph.
// builder must rebuild the graph from the leaf each call.
void check_grad(Tensor x0, const std::function<Var(const Var&)>& builder, float tol = 2e-2f, float h = 1e-3f) {
    Var x = leaf(x0, true);
    Var y = builder(x);
    REQUIRE(y->value.numel() == 1);
    backward(y);
    REQUIRE(x->has_grad());
    Tensor analytic = x->grad;

    int checked = 0;
    for (int64_t i = 0; i < x0.numel(); ++i) {
        Tensor xp = x0, xm = x0;
        xp[i] += h;
        xm[i] -= h;
        float fp = builder(leaf(xp, false))->value[0];
        float fm = builder(leaf(xm, false))->value[0];
        float fd = (fp - fm) / (2 * h);
        float denom = std::max({std::fabs(fd), std::fabs(analytic[i]), 1e-3f});
        CHECK(std::fabs(fd - analytic[i]) / denom < tol);
        ++checked;
    }
    CHECK(checked > 0);
}

Tensor randn(std::vector<int> shape, uint64_t seed, float scale = 1.0f) {
    RandomStream rng(seed);
    Tensor t(std::move(shape));
    rng.fill_normal(t, 0.0f, scale);
    return t;
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
    Tensor a = randn({3, 4}, 1);
    Tensor b = randn({3, 4}, 2);
    check_grad(a, [&](const Var& x) { return mean_all(mul(x, constant(b))); });
    check_grad(a, [&](const Var& x) { return mean_all(add(x, constant(b))); });
    check_grad(a, [&](const Var& x) { return mean_all(sub(constant(b), x)); });
    check_grad(a, [&](const Var& x) { return mean_all(silu(x)); });
    check_grad(a, [&](const Var& x) { return mean_all(scale(x, -2.5f)); });
    check_grad(a, [&](const Var& x) { return sum_all(rsub_scalar(1.0f, x)); });
    check_grad(a, [&](const Var& x) { return mse(x, constant(b)); });
}

TEST_CASE("matmul / transpose / softmax gradients") {
    Tensor a = randn({4, 3}, 3);
    Tensor b = randn({3, 5}, 4);
    Tensor w = randn({4, 5}, 5);
    check_grad(a, [&](const Var& x) { return mean_all(mul(matmul(x, constant(b)), constant(w))); });
    check_grad(b, [&](const Var& x) { return mean_all(mul(matmul(constant(a), x), constant(w))); });
    check_grad(a, [&](const Var& x) { return mean_all(transpose(x)); });

    Tensor logits = randn({5, 7}, 6, 2.0f);
    Tensor pick = randn({5, 7}, 7);
    check_grad(logits, [&](const Var& x) { return mean_all(mul(softmax_rows(x), constant(pick))); });
}

TEST_CASE("softmax rows sum to one") {
    Tensor logits = randn({32, 9}, 8, 4.0f);
    Var p = softmax_rows(constant(logits));
    for (int r = 0; r < 32; ++r) {
        double s = 0;
        for (int c = 0; c < 9; ++c) s += p->value.at(r, c);
        CHECK(std::fabs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("conv2d matches finite differences (x, w, b)") {
    Tensor x = randn({2, 6, 6}, 10);
    Tensor w = randn({3, 2, 3, 3}, 11, 0.5f);
    Tensor b = randn({3}, 12);
    Tensor pick = randn({3, 6, 6}, 13);
    auto via_x = [&](const Var& v) { return mean_all(mul(conv2d(v, constant(w), constant(b), 1, 1), constant(pick))); };
    check_grad(x, via_x);
    auto via_w = [&](const Var& v) { return mean_all(mul(conv2d(constant(x), v, constant(b), 1, 1), constant(pick))); };
    check_grad(w, via_w);
    auto via_b = [&](const Var& v) { return mean_all(mul(conv2d(constant(x), constant(w), v, 1, 1), constant(pick))); };
    check_grad(b, via_b);

    // strided
    Tensor pick2 = randn({3, 3, 3}, 14);
    check_grad(x, [&](const Var& v) { return mean_all(mul(conv2d(v, constant(w), constant(b), 2, 1), constant(pick2))); });
}

TEST_CASE("spatial ops gradients") {
    Tensor x = randn({2, 4, 4}, 20);
    Tensor pick_up = randn({2, 8, 8}, 21);
    check_grad(x, [&](const Var& v) { return mean_all(mul(upsample_nearest2(v), constant(pick_up))); });
    Tensor pick_dn = randn({2, 2, 2}, 22);
    check_grad(x, [&](const Var& v) { return mean_all(mul(avgpool2(v), constant(pick_dn))); });
    Tensor pick_pad = randn({2, 6, 6}, 23);
    check_grad(x, [&](const Var& v) { return mean_all(mul(pad_reflect(v, 1), constant(pick_pad))); });
    Tensor other = randn({3, 4, 4}, 24);
    Tensor pick_cat = randn({5, 4, 4}, 25);
    check_grad(x, [&](const Var& v) { return mean_all(mul(concat_channels(v, constant(other)), constant(pick_cat))); });
    Tensor cb = randn({2}, 26);
    check_grad(x, [&](const Var& v) { return mean_all(silu(add_channel_bias(v, constant(cb)))); });
    check_grad(cb, [&](const Var& v) { return mean_all(silu(add_channel_bias(constant(x), v))); });
    Tensor pick_tok = randn({16, 2}, 27);
    check_grad(x, [&](const Var& v) { return mean_all(mul(chw_to_tokens(v), constant(pick_tok))); });
    Tensor tok = randn({16, 2}, 28);
    Tensor pick_chw = randn({2, 4, 4}, 29);
    check_grad(tok, [&](const Var& v) { return mean_all(mul(tokens_to_chw(v, 2, 4, 4), constant(pick_chw))); });
}

TEST_CASE("norm ops gradients") {
    Tensor x = randn({3, 4, 4}, 30);
    Tensor g = randn({3}, 31, 0.3f);
    for (auto& v : g.data) v += 1.0f;
    Tensor pick = randn({3, 4, 4}, 32);
    check_grad(x, [&](const Var& v) { return mean_all(mul(rmsnorm_channels(v, constant(g)), constant(pick))); });
    check_grad(g, [&](const Var& v) { return mean_all(mul(rmsnorm_channels(constant(x), v), constant(pick))); });

    Tensor xr = randn({5, 6}, 33);
    Tensor gr = randn({6}, 34, 0.3f);
    for (auto& v : gr.data) v += 1.0f;
    Tensor pickr = randn({5, 6}, 35);
    check_grad(xr, [&](const Var& v) { return mean_all(mul(rmsnorm_rows(v, constant(gr)), constant(pickr))); });
    check_grad(gr, [&](const Var& v) { return mean_all(mul(rmsnorm_rows(constant(xr), v), constant(pickr))); });
    check_grad(xr, [&](const Var& v) { return mean_all(mul(l2norm_rows(v), constant(pickr))); });
}

TEST_CASE("assembly / reduction ops gradients") {
    Tensor a = randn({4, 6}, 40);
    Tensor bias = randn({6}, 41);
    Tensor pick = randn({4, 6}, 42);
    check_grad(a, [&](const Var& v) { return mean_all(mul(add_bias_cols(v, constant(bias)), constant(pick))); });
    check_grad(bias, [&](const Var& v) { return mean_all(mul(add_bias_cols(constant(a), v), constant(pick))); });

    Tensor rs({4});
    rs.data = {0.2f, 1.0f, 0.5f, 2.0f};
    check_grad(a, [&](const Var& v) { return mean_all(mul(row_scale(v, rs), constant(pick))); });

    Tensor pick_slice = randn({4, 3}, 43);
    check_grad(a, [&](const Var& v) { return mean_all(mul(slice_cols(v, 2, 5), constant(pick_slice))); });

    Tensor other = randn({4, 2}, 44);
    Tensor pick_cc = randn({4, 8}, 45);
    check_grad(a, [&](const Var& v) { return mean_all(mul(concat_cols({v, constant(other)}), constant(pick_cc))); });
    Tensor other_r = randn({3, 6}, 46);
    Tensor pick_cr = randn({7, 6}, 47);
    check_grad(a, [&](const Var& v) { return mean_all(mul(concat_rows({v, constant(other_r)}), constant(pick_cr))); });

    check_grad(a, [&](const Var& v) { return reduce_max_all(v); });
    check_grad(a, [&](const Var& v) { return reduce_min_all(v); });
    check_grad(a, [&](const Var& v) {
        return reduce_min_all(concat_scalars({reduce_max_all(v), mean_all(v), add_scalar(mean_all(v), 5.0f)}));
    });

    Tensor h3 = randn({3, 4, 5}, 48);
    Tensor pick_m = randn({4, 5}, 49);
    check_grad(h3, [&](const Var& v) { return mean_all(mul(mean_axis0(v), constant(pick_m))); });

    std::vector<int> cols = {1, 3, 4};
    check_grad(a, [&](const Var& v) { return mean_all(select_cols_mean(v, cols)); });

    Tensor probs = randn({4, 6}, 50);
    for (auto& v : probs.data) v = 0.3f + std::fabs(v);  // positive, well away from zero mass
    check_grad(probs, [&](const Var& v) { return mean_all(mul(exclude_col_renorm_rows(v, 0), constant(pick))); }, 2e-2f, 3e-3f);

    Tensor table = randn({9, 5}, 51);
    std::vector<int> ids = {2, 7, 2, 0};
    Tensor pick_e = randn({4, 5}, 52);
    check_grad(table, [&](const Var& v) { return mean_all(mul(embedding_rows(v, ids), constant(pick_e))); });

    Tensor logits = randn({4, 4}, 53, 2.0f);
    check_grad(logits, [&](const Var& v) { return softmax_xent_diag(v); }, 2e-2f, 1e-2f);

    check_grad(a, [&](const Var& v) { return mean_all(mul(reshape(v, {2, 12}), constant(Tensor({2, 12}, pick.data)))); });
}

TEST_CASE("embedding ids out of range throw") {
    Var table = leaf(randn({4, 3}, 60), false);
    CHECK_THROWS(embedding_rows(table, {4}));
    CHECK_THROWS(embedding_rows(table, {-1}));
}

TEST_CASE("no-grad mode produces identical values and records nothing") {
    Tensor a = randn({8, 8}, 61);
    Var x = leaf(a, true);
    Var y1 = softmax_rows(matmul(x, transpose(x)));
    Tensor v1 = y1->value;
    {
        NoGradGuard ng;
        Var y2 = softmax_rows(matmul(x, transpose(x)));
        CHECK(y2->parents.empty());
        CHECK(!y2->requires_grad);
        for (int64_t i = 0; i < v1.numel(); ++i) CHECK(y2->value[i] == v1[i]);
    }
}

TEST_CASE("gradient accumulates across shared subexpressions") {
    // f(x) = sum(x*x) computed via two paths sharing x
    Tensor a = randn({3}, 62);
    Var x = leaf(a, true);
    Var y = add(sum_all(mul(x, x)), sum_all(mul(x, x)));
    backward(y);
    for (int i = 0; i < 3; ++i) CHECK(std::fabs(x->grad[i] - 4.0f * a[i]) < 1e-4f);
}

TEST_CASE("adam reduces a quadratic") {
    ParamStore ps;
    RandomStream rng(7);
    Tensor init({4});
    rng.fill_normal(init, 2.0f, 0.5f);
    Var p = ps.make("p", init);
    AdamOptimizer opt(0.05f);
    float first = 0.0f, last = 0.0f;
    for (int it = 0; it < 200; ++it) {
        Var loss = sum_all(mul(p, p));
        if (it == 0) first = loss->value[0];
        last = loss->value[0];
        backward(loss);
        opt.step(ps);
    }
    CHECK(last < 0.01f * first);
}
