#include "segen/codec.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace seg {

LatentCodec::LatentCodec(ParamStore& ps, const std::string& prefix, RandomStream& rng) {
    lift = Conv2d(ps, prefix + ".lift", 3, 4, 1, 1, 0, rng);
    unlift = Conv2d(ps, prefix + ".unlift", 4, 3, 1, 1, 0, rng);
}

Var LatentCodec::reconstruct_train(const Var& pooled) const { return unlift.forward(lift.forward(pooled)); }

Tensor avgpool2_tensor(const Tensor& img) {
    if (img.ndim() != 3 || img.shape[1] % 2 || img.shape[2] % 2) throw std::invalid_argument("avgpool2_tensor: bad shape");
    int c = img.shape[0], h = img.shape[1] / 2, w = img.shape[2] / 2;
    Tensor out({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const float* base = &img.data[(static_cast<size_t>(ch) * 2 * h + 2 * y) * 2 * w + 2 * x];
                out.data[(static_cast<size_t>(ch) * h + y) * w + x] = 0.25f * (base[0] + base[1] + base[2 * w] + base[2 * w + 1]);
            }
    return out;
}

Tensor bilinear_upsample2(const Tensor& img) {
    if (img.ndim() != 3) throw std::invalid_argument("bilinear_upsample2: bad shape");
    int c = img.shape[0], h = img.shape[1], w = img.shape[2];
    int ho = 2 * h, wo = 2 * w;
    Tensor out({c, ho, wo});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < ho; ++y) {
            float fy = (y + 0.5f) / 2.0f - 0.5f;
            int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, h - 1);
            int y1 = std::min(y0 + 1, h - 1);
            float wy = std::clamp(fy - y0, 0.0f, 1.0f);
            for (int x = 0; x < wo; ++x) {
                float fx = (x + 0.5f) / 2.0f - 0.5f;
                int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, w - 1);
                int x1 = std::min(x0 + 1, w - 1);
                float wx = std::clamp(fx - x0, 0.0f, 1.0f);
                auto px = [&](int yy, int xx) { return img.data[(static_cast<size_t>(ch) * h + yy) * w + xx]; };
                out.data[(static_cast<size_t>(ch) * ho + y) * wo + x] =
                    (1 - wy) * ((1 - wx) * px(y0, x0) + wx * px(y0, x1)) + wy * ((1 - wx) * px(y1, x0) + wx * px(y1, x1));
            }
        }
    return out;
}

Tensor LatentCodec::encode(const Tensor& image) const {
    if (image.shape != std::vector<int>{3, 64, 64}) throw std::invalid_argument("codec encode: expected [3,64,64]");
    NoGradGuard ng;
    Var z = lift.forward(constant(avgpool2_tensor(image)));
    Tensor out = z->value;  // [4,32,32]
    int hw = 32 * 32;
    for (int c = 0; c < 4; ++c)
        for (int i = 0; i < hw; ++i) {
            float& v = out.data[static_cast<size_t>(c) * hw + i];
            v = (v - latent_mean[c]) / latent_std[c];
        }
    return out;
}

Tensor LatentCodec::decode(const Tensor& z) const {
    if (z.ndim() != 3 || z.shape[0] != 4) throw std::invalid_argument("codec decode: expected [4,H,W]");
    NoGradGuard ng;
    Tensor dn = z;
    int hw = z.shape[1] * z.shape[2];
    for (int c = 0; c < 4; ++c)
        for (int i = 0; i < hw; ++i) {
            float& v = dn.data[static_cast<size_t>(c) * hw + i];
            v = v * latent_std[c] + latent_mean[c];
        }
    Var rgb = unlift.forward(constant(dn));
    Tensor img = bilinear_upsample2(rgb->value);
    for (auto& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
    return img;
}

}  // namespace seg
