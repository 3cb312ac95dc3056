#pragma once

#include <map>
#include <string>
#include <vector>

#include "segen/nn.hpp"

namespace seg {

// Projections of one cross-attention block. Key/query project to an inner
// dimension, values project straight to the block channel count. The image
// branch carries its own key/value weights.
struct CrossAttnWeights {
    Linear wq;               // [C, dk], no bias
    Linear wk, wv;           // text: [d, dk], [d, C]
    Linear wk_img, wv_img;   // image branch
    int heads = 1;
};

// Per-subject projected image tokens, [m_i, d]. Multi-view inputs arrive
// already concatenated along the token axis.
struct SubjectTokens {
    std::string id;
    Var tokens;
};

// Forward-guidance state: binary masks from the previous step's attention,
// keyed by subject id, at mask resolution (resampled per block).
struct InjectionSpec {
    const std::map<std::string, Tensor>* masks = nullptr;
    float mu = 0.0f;
};

// Softmax(Q K^T / sqrt(dk_head)) V. If probs_out is non-null the attention
// probabilities [heads, HW, N] are published there before the value product.
Var cross_attention(const Var& f, const Var& c, const CrossAttnWeights& w, Var* probs_out = nullptr);

// z^T + lambda * sum_i z^I_{s_i}, each subject's image attention computed
// independently from its own tokens. lambda == 0 or no subjects returns the
// text path bit-exactly. Optional injection row-scales each z^I_{s_i} by its
// subject mask before the sum.
Var decoupled_attention(const Var& f, const Var& text_features, const std::vector<SubjectTokens>& imgs,
                        float lambda, const CrossAttnWeights& w, int block_resolution,
                        Var* text_probs_out = nullptr, const InjectionSpec* inject = nullptr);

}  // namespace seg
