#pragma once

#include "segen/nn.hpp"

namespace seg {

// Strided conv tower over [3,64,64] reference images emitting m=4 projected
// tokens in the text feature dimension.
struct ImageEncoder {
    Conv2d c1, c2, c3, c4;
    ChannelNorm n1, n2, n3, n4;
    Linear proj;
    int out_dim = 64;

    ImageEncoder() = default;
    ImageEncoder(ParamStore& ps, const std::string& prefix, int d, RandomStream& rng);

    Var forward(const Tensor& image) const;  // [4, d]; validates shape and [0,1] range
    Var forward_var(const Var& image) const;
};

}  // namespace seg
