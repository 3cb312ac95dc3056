#pragma once

#include <cstdint>

#include "segen/tensor.hpp"

namespace seg {

// The evolving latent plus its current train-timestep index. t == -1 means
// fully denoised.
struct LatentState {
    Tensor z;  // [C,H,W]
    int t = 0;
    uint64_t rng_seed = 0;
};

}  // namespace seg
