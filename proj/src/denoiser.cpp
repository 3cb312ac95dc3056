#include "segen/denoiser.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace seg {

std::string DenoiserConfig::arch_string() const {
    std::ostringstream os;
    os << "unet3res:c" << latent_channels << ":p" << latent_size << ":ch" << ch0 << "," << ch1 << "," << ch2
       << ":d" << text_dim << ":dk" << key_dim << ":h" << heads << ":td" << time_dim << ":tl" << text_max_len;
    return os.str();
}

ResBlock::ResBlock(ParamStore& ps, const std::string& prefix, int cin, int cout, int time_dim, RandomStream& rng) {
    n1 = ChannelNorm(ps, prefix + ".n1", cin);
    n2 = ChannelNorm(ps, prefix + ".n2", cout);
    conv1 = Conv2d(ps, prefix + ".conv1", cin, cout, 3, 1, 1, rng);
    conv2 = Conv2d(ps, prefix + ".conv2", cout, cout, 3, 1, 1, rng);
    time_proj = Linear(ps, prefix + ".time", time_dim, cout, rng);
    has_skip = cin != cout;
    if (has_skip) skip = Conv2d(ps, prefix + ".skip", cin, cout, 1, 1, 0, rng);
}

Var ResBlock::forward(const Var& x, const Var& temb) const {
    Var h = conv1.forward(silu(n1.forward(x)));
    Var tb = reshape(time_proj.forward(silu(temb)), {h->value.shape[0]});
    h = add_channel_bias(h, tb);
    h = conv2.forward(silu(n2.forward(h)));
    return add(h, has_skip ? skip.forward(x) : x);
}

AttnBlock::AttnBlock(ParamStore& ps, const std::string& prefix, LayerId id_, int resolution_, int channels_,
                     const DenoiserConfig& cfg, RandomStream& rng)
    : id(id_), resolution(resolution_), channels(channels_) {
    norm = ChannelNorm(ps, prefix + ".norm", channels);
    w.heads = cfg.heads;
    w.wq = Linear(ps, prefix + ".wq", channels, cfg.key_dim, rng, false);
    w.wk = Linear(ps, prefix + ".wk", cfg.text_dim, cfg.key_dim, rng, false);
    w.wv = Linear(ps, prefix + ".wv", cfg.text_dim, channels, rng, false);
    w.wk_img = Linear(ps, prefix + ".wk_img", cfg.text_dim, cfg.key_dim, rng, false);
    w.wv_img = Linear(ps, prefix + ".wv_img", cfg.text_dim, channels, rng, false);
    wo = Linear(ps, prefix + ".wo", channels, channels, rng);
}

Var AttnBlock::forward(const Var& x, const DenoiseContext& ctx) const {
    Var f = chw_to_tokens(norm.forward(x));  // [P*P, C]
    static const std::vector<SubjectTokens> kNoSubjects;
    const auto& subjects = ctx.subjects ? *ctx.subjects : kNoSubjects;

    bool inject_here = ctx.injection.masks && ctx.injection.mu > 0.0f && ctx.forward_layers &&
                       ctx.forward_layers->count(id.group) > 0;
    const InjectionSpec* inj = inject_here ? &ctx.injection : nullptr;

    Var probs;
    Var z = decoupled_attention(f, ctx.text, subjects, ctx.lambda, w, resolution,
                                ctx.store ? &probs : nullptr, inj);
    if (ctx.store) ctx.store->record({id, resolution, probs});
    return add(x, tokens_to_chw(wo.forward(z), channels, resolution, resolution));
}

Denoiser::Denoiser(ParamStore& ps, const std::string& prefix, const DenoiserConfig& cfg_, RandomStream& rng) : cfg(cfg_) {
    int p = cfg.latent_size;
    stem = Conv2d(ps, prefix + ".stem", cfg.latent_channels, cfg.ch0, 3, 1, 1, rng);
    time_fc1 = Linear(ps, prefix + ".time_fc1", cfg.time_dim, cfg.time_dim, rng);
    time_fc2 = Linear(ps, prefix + ".time_fc2", cfg.time_dim, cfg.time_dim, rng);

    rdown0 = ResBlock(ps, prefix + ".rdown0", cfg.ch0, cfg.ch0, cfg.time_dim, rng);
    adown0 = AttnBlock(ps, prefix + ".adown0", {LayerGroup::Down, 0}, p, cfg.ch0, cfg, rng);
    down01 = Conv2d(ps, prefix + ".down01", cfg.ch0, cfg.ch1, 3, 2, 1, rng);
    rdown1 = ResBlock(ps, prefix + ".rdown1", cfg.ch1, cfg.ch1, cfg.time_dim, rng);
    adown1 = AttnBlock(ps, prefix + ".adown1", {LayerGroup::Down, 1}, p / 2, cfg.ch1, cfg, rng);
    down12 = Conv2d(ps, prefix + ".down12", cfg.ch1, cfg.ch2, 3, 2, 1, rng);
    rdown2 = ResBlock(ps, prefix + ".rdown2", cfg.ch2, cfg.ch2, cfg.time_dim, rng);
    adown2 = AttnBlock(ps, prefix + ".adown2", {LayerGroup::Down, 2}, p / 4, cfg.ch2, cfg, rng);

    rmid1 = ResBlock(ps, prefix + ".rmid1", cfg.ch2, cfg.ch2, cfg.time_dim, rng);
    amid = AttnBlock(ps, prefix + ".amid", {LayerGroup::Mid, 0}, p / 4, cfg.ch2, cfg, rng);
    rmid2 = ResBlock(ps, prefix + ".rmid2", cfg.ch2, cfg.ch2, cfg.time_dim, rng);

    rup_lo = ResBlock(ps, prefix + ".rup_lo", 2 * cfg.ch2, cfg.ch2, cfg.time_dim, rng);
    aup_lo = AttnBlock(ps, prefix + ".aup_lo", {LayerGroup::Up, 0}, p / 4, cfg.ch2, cfg, rng);
    upc_lo = Conv2d(ps, prefix + ".upc_lo", cfg.ch2, cfg.ch1, 3, 1, 1, rng);
    rup_mid = ResBlock(ps, prefix + ".rup_mid", 2 * cfg.ch1, cfg.ch1, cfg.time_dim, rng);
    aup_mid = AttnBlock(ps, prefix + ".aup_mid", {LayerGroup::Up, 1}, p / 2, cfg.ch1, cfg, rng);
    upc_mid = Conv2d(ps, prefix + ".upc_mid", cfg.ch1, cfg.ch0, 3, 1, 1, rng);
    rup_hi = ResBlock(ps, prefix + ".rup_hi", 2 * cfg.ch0, cfg.ch0, cfg.time_dim, rng);
    aup_hi = AttnBlock(ps, prefix + ".aup_hi", {LayerGroup::Up, 2}, p, cfg.ch0, cfg, rng);

    head_norm = ChannelNorm(ps, prefix + ".head_norm", cfg.ch0);
    head = Conv2d(ps, prefix + ".head", cfg.ch0, cfg.latent_channels, 3, 1, 1, rng);
}

std::vector<LayerInfo> Denoiser::layer_infos() const {
    std::vector<LayerInfo> out;
    for (const AttnBlock* b : {&adown0, &adown1, &adown2, &amid, &aup_lo, &aup_mid, &aup_hi})
        out.push_back({b->id, b->resolution, b->w.heads});
    return out;
}

Tensor Denoiser::time_embedding(int t) const {
    int half = cfg.time_dim / 2;
    Tensor emb({1, cfg.time_dim});
    float log_base = std::log(10000.0f) / static_cast<float>(half);
    for (int i = 0; i < half; ++i) {
        float freq = std::exp(-static_cast<float>(i) * log_base);
        float a = static_cast<float>(t) * freq;
        emb[i] = std::cos(a);
        emb[half + i] = std::sin(a);
    }
    return emb;
}

Var Denoiser::forward(const Var& z, int t, const DenoiseContext& ctx) const {
    if (z->value.shape != std::vector<int>{cfg.latent_channels, cfg.latent_size, cfg.latent_size})
        throw std::invalid_argument("denoiser: latent shape " + z->value.shape_str() + " does not match config");
    Var temb = time_fc2.forward(silu(time_fc1.forward(constant(time_embedding(t)))));

    Var x = stem.forward(z);
    x = rdown0.forward(x, temb);
    x = adown0.forward(x, ctx);
    Var skip0 = x;
    x = down01.forward(x);
    x = rdown1.forward(x, temb);
    x = adown1.forward(x, ctx);
    Var skip1 = x;
    x = down12.forward(x);
    x = rdown2.forward(x, temb);
    x = adown2.forward(x, ctx);
    Var skip2 = x;

    x = rmid1.forward(x, temb);
    x = amid.forward(x, ctx);
    x = rmid2.forward(x, temb);

    x = rup_lo.forward(concat_channels(x, skip2), temb);
    x = aup_lo.forward(x, ctx);
    x = upc_lo.forward(upsample_nearest2(x));
    x = rup_mid.forward(concat_channels(x, skip1), temb);
    x = aup_mid.forward(x, ctx);
    x = upc_mid.forward(upsample_nearest2(x));
    x = rup_hi.forward(concat_channels(x, skip0), temb);
    x = aup_hi.forward(x, ctx);

    return head.forward(silu(head_norm.forward(x)));
}

}  // namespace seg
