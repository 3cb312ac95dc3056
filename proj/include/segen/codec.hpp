#pragma once

#include "segen/nn.hpp"

namespace seg {

// Fixed 2x average-pool from 64x64 RGB to 32x32 plus a learned 1x1 lift to 4
// latent channels. Per-channel mean/std normalization is fit after the lift
// is trained and folded into encode/decode.
struct LatentCodec {
    Conv2d lift;    // 3 -> 4, 1x1
    Conv2d unlift;  // 4 -> 3, 1x1
    Tensor latent_mean{std::vector<int>{4}, 0.0f};
    Tensor latent_std{std::vector<int>{4}, 1.0f};

    LatentCodec() = default;
    LatentCodec(ParamStore& ps, const std::string& prefix, RandomStream& rng);

    // training path: pooled image [3,32,32] -> lift -> unlift, for recon loss
    Var reconstruct_train(const Var& pooled) const;

    Tensor encode(const Tensor& image) const;  // [3,64,64] -> normalized [4,32,32]
    Tensor decode(const Tensor& z) const;      // -> [3,64,64], clamped to [0,1]
};

Tensor avgpool2_tensor(const Tensor& img);            // plain 2x2 mean
Tensor bilinear_upsample2(const Tensor& img);         // [C,H,W] -> [C,2H,2W]

}  // namespace seg
