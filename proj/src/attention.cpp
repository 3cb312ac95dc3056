#include "segen/attention.hpp"

#include <cmath>
#include <stdexcept>

#include "segen/guidance_ops.hpp"

namespace seg {

namespace {

// Single attention pass given a precomputed Q. Splits heads over both the
// key dim and the value dim.
Var attn_from_q(const Var& q, const Var& c, const Linear& wk, const Linear& wv, int heads, Var* probs_out) {
    Var k = wk.forward(c);  // [N, dk]
    Var v = wv.forward(c);  // [N, C]
    int dk = k->value.cols();
    int cdim = v->value.cols();
    int hw = q->value.rows();
    int n = k->value.rows();
    if (heads < 1 || dk % heads || cdim % heads)
        throw std::invalid_argument("cross_attention: head count must divide key and value dims");

    if (heads == 1) {
        Var probs = softmax_rows(scale(matmul(q, transpose(k)), 1.0f / std::sqrt(static_cast<float>(dk))));
        if (probs_out) *probs_out = reshape(probs, {1, hw, n});
        return matmul(probs, v);
    }

    int dkh = dk / heads, dvh = cdim / heads;
    float sc = 1.0f / std::sqrt(static_cast<float>(dkh));
    std::vector<Var> prob_list, out_list;
    for (int h = 0; h < heads; ++h) {
        Var qh = slice_cols(q, h * dkh, (h + 1) * dkh);
        Var kh = slice_cols(k, h * dkh, (h + 1) * dkh);
        Var vh = slice_cols(v, h * dvh, (h + 1) * dvh);
        Var probs = softmax_rows(scale(matmul(qh, transpose(kh)), sc));
        prob_list.push_back(probs);
        out_list.push_back(matmul(probs, vh));
    }
    if (probs_out) *probs_out = reshape(concat_rows(prob_list), {heads, hw, n});
    return concat_cols(out_list);
}

}  // namespace

Var cross_attention(const Var& f, const Var& c, const CrossAttnWeights& w, Var* probs_out) {
    return attn_from_q(w.wq.forward(f), c, w.wk, w.wv, w.heads, probs_out);
}

Var decoupled_attention(const Var& f, const Var& text_features, const std::vector<SubjectTokens>& imgs,
                        float lambda, const CrossAttnWeights& w, int block_resolution,
                        Var* text_probs_out, const InjectionSpec* inject) {
    if (lambda < 0.0f) throw std::invalid_argument("decoupled_attention: lambda must be >= 0");
    Var q = w.wq.forward(f);
    Var z_text = attn_from_q(q, text_features, w.wk, w.wv, w.heads, text_probs_out);
    if (lambda == 0.0f || imgs.empty()) return z_text;

    Var acc;
    for (const auto& subj : imgs) {
        Var z_img = attn_from_q(q, subj.tokens, w.wk_img, w.wv_img, w.heads, nullptr);
        if (inject && inject->masks && inject->mu > 0.0f) {
            auto it = inject->masks->find(subj.id);
            if (it != inject->masks->end()) {
                Tensor factors = injection_row_factors(it->second, inject->mu, block_resolution);
                z_img = row_scale(z_img, factors);
            }
        }
        acc = acc ? add(acc, z_img) : z_img;
    }
    return add(z_text, scale(acc, lambda));
}

}  // namespace seg
