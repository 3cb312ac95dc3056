#pragma once

#include <set>
#include <string>
#include <vector>

#include "segen/attention.hpp"
#include "segen/attention_store.hpp"
#include "segen/nn.hpp"

namespace seg {

struct DenoiserConfig {
    int latent_channels = 4;
    int latent_size = 32;
    int ch0 = 24, ch1 = 32, ch2 = 48;  // channels at P, P/2, P/4
    int text_dim = 64;
    int key_dim = 64;
    int heads = 1;
    int time_dim = 64;
    int text_max_len = 16;

    std::string arch_string() const;
};

// Conditioning plus optional guidance hooks for one denoiser pass.
struct DenoiseContext {
    Var text;  // [N, d]
    const std::vector<SubjectTokens>* subjects = nullptr;
    float lambda = 0.0f;
    AttentionStore* store = nullptr;  // records text attention when set
    InjectionSpec injection;
    const std::set<LayerGroup>* forward_layers = nullptr;
};

struct ResBlock {
    ChannelNorm n1, n2;
    Conv2d conv1, conv2;
    Linear time_proj;
    Conv2d skip;
    bool has_skip = false;

    ResBlock() = default;
    ResBlock(ParamStore& ps, const std::string& prefix, int cin, int cout, int time_dim, RandomStream& rng);
    Var forward(const Var& x, const Var& temb) const;
};

struct AttnBlock {
    LayerId id;
    int resolution = 0;
    int channels = 0;
    ChannelNorm norm;
    CrossAttnWeights w;
    Linear wo;

    AttnBlock() = default;
    AttnBlock(ParamStore& ps, const std::string& prefix, LayerId id_, int resolution_, int channels_,
              const DenoiserConfig& cfg, RandomStream& rng);
    Var forward(const Var& x, const DenoiseContext& ctx) const;
};

// Small UNet-style denoiser: three resolutions, one cross-attention block per
// resolution on each of the down and up paths plus one mid block.
struct Denoiser {
    DenoiserConfig cfg;
    Conv2d stem;
    ResBlock rdown0, rdown1, rdown2, rmid1, rmid2, rup_lo, rup_mid, rup_hi;
    AttnBlock adown0, adown1, adown2, amid, aup_lo, aup_mid, aup_hi;
    Conv2d down01, down12, upc_lo, upc_mid;
    ChannelNorm head_norm;
    Conv2d head;
    Linear time_fc1, time_fc2;

    Denoiser() = default;
    Denoiser(ParamStore& ps, const std::string& prefix, const DenoiserConfig& cfg_, RandomStream& rng);

    std::vector<LayerInfo> layer_infos() const;
    Tensor time_embedding(int t) const;  // sinusoidal [time_dim]
    Var forward(const Var& z, int t, const DenoiseContext& ctx) const;  // eps prediction
};

}  // namespace seg
