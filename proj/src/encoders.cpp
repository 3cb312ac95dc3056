#include "segen/encoders.hpp"

#include <stdexcept>

namespace seg {

ImageEncoder::ImageEncoder(ParamStore& ps, const std::string& prefix, int d, RandomStream& rng) : out_dim(d) {
    c1 = Conv2d(ps, prefix + ".c1", 3, 16, 3, 2, 1, rng);
    c2 = Conv2d(ps, prefix + ".c2", 16, 32, 3, 2, 1, rng);
    c3 = Conv2d(ps, prefix + ".c3", 32, 48, 3, 2, 1, rng);
    c4 = Conv2d(ps, prefix + ".c4", 48, 64, 3, 2, 1, rng);
    n1 = ChannelNorm(ps, prefix + ".n1", 16);
    n2 = ChannelNorm(ps, prefix + ".n2", 32);
    n3 = ChannelNorm(ps, prefix + ".n3", 48);
    n4 = ChannelNorm(ps, prefix + ".n4", 64);
    proj = Linear(ps, prefix + ".proj", 64, d, rng);
}

Var ImageEncoder::forward(const Tensor& image) const {
    if (image.shape != std::vector<int>{3, 64, 64}) throw std::invalid_argument("encode_image: expected [3,64,64] image");
    for (float v : image.data)
        if (!(v >= 0.0f && v <= 1.0f)) throw std::invalid_argument("encode_image: pixel values must lie in [0,1]");
    return forward_var(constant(image));
}

Var ImageEncoder::forward_var(const Var& image) const {
    Var x = silu(n1.forward(c1.forward(image)));   // [16,32,32]
    x = silu(n2.forward(c2.forward(x)));           // [32,16,16]
    x = silu(n3.forward(c3.forward(x)));           // [48,8,8]
    x = silu(n4.forward(c4.forward(x)));           // [64,4,4]
    x = avgpool2(x);                               // [64,2,2]
    return proj.forward(chw_to_tokens(x));         // [4, d]
}

}  // namespace seg
