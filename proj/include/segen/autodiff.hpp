#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "segen/tensor.hpp"

namespace seg {

// Reverse-mode autodiff over Tensor. Graphs are built define-by-run; a Var is
// a shared handle to a node. Ops only record a backward closure when grad
// mode is on and some input requires grad, so inference runs at plain tensor
// cost and produces bit-identical values either way.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily on first accumulation
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents
    const char* op = "leaf";

    bool has_grad() const { return !grad.data.empty(); }
    void accumulate(const Tensor& g);
    const Tensor& v() const { return value; }
};

// Grad mode is thread-local; NoGradGuard disables graph recording in scope.
bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    bool prev;
};

Var leaf(Tensor v, bool requires_grad = false);
Var constant(Tensor v);

// Runs backprop from a scalar root (numel()==1). Gradients accumulate into
// every reachable node with requires_grad; call zero_grads / optimizer to
// clear between steps.
void backward(const Var& root);
void zero_grad(const Var& v);

// --- elementwise / scalar ---
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, float s);
Var add_scalar(const Var& a, float s);
Var rsub_scalar(float s, const Var& a);  // s - a
Var silu(const Var& a);

// --- linear algebra ---
Var matmul(const Var& a, const Var& b);              // [m,k]x[k,n]
Var transpose(const Var& a);                         // [m,n]->[n,m]
Var softmax_rows(const Var& a);                      // rowwise, double-accumulated
Var add_bias_cols(const Var& x, const Var& b);       // x[m,n] + b[n]
Var row_scale(const Var& a, const Tensor& s);        // row i scaled by s[i] (s constant)
Var slice_cols(const Var& a, int c0, int c1);        // [m, c1-c0]
Var concat_cols(const std::vector<Var>& xs);
Var concat_rows(const std::vector<Var>& xs);
Var embedding_rows(const Var& table, const std::vector<int>& ids);
Var l2norm_rows(const Var& x, float eps = 1e-8f);
Var rmsnorm_rows(const Var& x, const Var& gain, float eps = 1e-6f);

// --- conv / spatial (tensors are [C,H,W]) ---
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var pad_reflect(const Var& x, int p);                // symmetric reflect
Var upsample_nearest2(const Var& x);
Var avgpool2(const Var& x);                          // 2x2 mean, [C,H,W] -> [C,H/2,W/2]
Var concat_channels(const Var& a, const Var& b);
Var add_channel_bias(const Var& x, const Var& b);    // b[C] broadcast over H,W
Var rmsnorm_channels(const Var& x, const Var& gain, float eps = 1e-6f);
Var chw_to_tokens(const Var& x);                     // [C,H,W] -> [H*W, C]
Var tokens_to_chw(const Var& x, int c, int h, int w);

// --- reductions / assembly ---
Var mean_all(const Var& a);
Var sum_all(const Var& a);
Var reduce_max_all(const Var& a);                    // scalar; grad routed to argmax
Var concat_scalars(const std::vector<Var>& xs);      // k scalars -> [k]
Var reduce_min_all(const Var& a);                    // scalar; grad routed to argmin
Var mean_axis0(const Var& a);                        // [k,m,n] -> [m,n]
Var select_cols_mean(const Var& a, const std::vector<int>& cols);  // [m,n] -> [m]
Var exclude_col_renorm_rows(const Var& a, int col);  // zero one column, renorm rows
Var reshape(const Var& a, std::vector<int> shape);
Var softmax_xent_diag(const Var& logits);            // mean_i (-log softmax(row_i)[i])

Var mse(const Var& a, const Var& b);

}  // namespace seg
