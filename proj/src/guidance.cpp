#include "segen/guidance.hpp"

#include <chrono>
#include <filesystem>

#include "segen/png_io.hpp"

namespace seg {

namespace {

// One grad-enabled denoiser pass from a fresh latent leaf; returns the
// smoothed subject maps and the leaf for gradient extraction. Runs without
// injection: the backward path never reads forward-guidance state.
struct AttnProbe {
    Var z_leaf;
    SubjectMaps maps;
};

AttnProbe probe_attention(const Tensor& z, int t, const GenerationModel& model, const GuidedConditioning& cond,
                          const GuidanceConfig& cfg) {
    AttnProbe probe;
    probe.z_leaf = leaf(z, true);
    AttentionStore store(model.layer_infos());
    DenoiseContext ctx;
    ctx.text = cond.text.features;
    ctx.subjects = &cond.subjects;
    ctx.lambda = cfg.lambda;
    ctx.store = &store;
    model.unet.forward(probe.z_leaf, t, ctx);
    auto agg = store.aggregate(t);
    auto reweighted = reweight_excluding_sot(agg, cond.text.sot_index);
    probe.maps = subject_maps(reweighted, cond.text.subject_spans, cfg.mask_resolution, cfg.smoothing);
    return probe;
}

}  // namespace

GuidedConditioning prepare_conditioning(const GenerationModel& model, const std::string& prompt,
                                        const Vocabulary& vocab, const SubjectSet& subjects) {
    NoGradGuard ng;
    GuidedConditioning cond;
    cond.text = encode_text(prompt, vocab, model.text_encoder, &subjects);
    std::vector<std::pair<std::string, std::vector<Tensor>>> images;
    for (const auto& s : subjects.subjects)
        if (!s.reference_images.empty()) images.emplace_back(s.id, s.reference_images);
    cond.subjects = encode_subject_tokens(model, images);
    cond.uncond_text = constant(model.null_text->value);
    return cond;
}

RefineEvent refine_until_threshold(LatentState& state, int step_index, float required,
                                   const GenerationModel& model, const GuidedConditioning& cond,
                                   const GuidanceConfig& cfg, const NoiseSchedule& sched,
                                   const SamplerOptions& opts) {
    RefineEvent ev;
    ev.step_index = step_index;
    ev.required = required;
    float eta = eta_schedule(step_index, opts.num_inference_steps, cfg, sched, state.t);

    for (int updates = 0;; ++updates) {
        AttnProbe probe = probe_attention(state.z, state.t, model, cond, cfg);
        float attn = min_subject_attention(probe.maps);
        if (updates == 0) ev.pre_attention = attn;
        ev.post_attention = attn;
        ev.iterations = updates;
        if (attn >= required) {
            ev.final_loss = 1.0f - attn;
            break;
        }
        if (updates >= cfg.max_refine_iters) {
            ev.final_loss = 1.0f - attn;
            ev.hit_max_iters = true;  // not an error; reported to the caller's trace
            break;
        }
        Var loss = backward_loss(probe.maps);
        backward(loss);
        if (!probe.z_leaf->has_grad()) throw std::runtime_error("refine: loss is disconnected from the latent");
        state = latent_update(state, probe.z_leaf->grad, eta);
        if (!state.z.all_finite()) throw std::runtime_error("refine: non-finite latent mid-refinement");
    }
    return ev;
}

GenerationResult guided_generate(const GenerationModel& model, const std::string& prompt,
                                 const SubjectSet& subjects, const GuidanceConfig& cfg,
                                 const Vocabulary& vocab, const NoiseSchedule& sched,
                                 const SamplerOptions& opts, uint64_t seed,
                                 const std::string& dump_attn_dir) {
    cfg.validate();
    subjects.validate();
    auto t_start = std::chrono::steady_clock::now();

    GuidedConditioning cond = prepare_conditioning(model, prompt, vocab, subjects);
    bool have_subjects = !cond.subjects.empty();
    bool dump = !dump_attn_dir.empty();
    if (dump) std::filesystem::create_directories(dump_attn_dir);

    CondBranches branches;
    branches.cond_text = cond.text.features;
    branches.subjects = cond.subjects;
    branches.lambda = have_subjects ? cfg.lambda : 0.0f;
    branches.uncond_text = cond.uncond_text;

    auto ts = ddim_timesteps(sched, opts.num_inference_steps);
    LatentState state{initial_latent(model.cfg, seed), ts[0], seed};

    GenerationResult result;
    result.trace.num_steps = opts.num_inference_steps;

    AttentionStore store(model.layer_infos());
    std::map<std::string, Tensor> masks;  // from the previous step's attention

    for (int k = 0; k < opts.num_inference_steps; ++k) {
        bool in_window = k < cfg.guided_step_window;

        if (cfg.backward_enabled && in_window && have_subjects) {
            auto it = cfg.refine_steps.find(k);
            if (it != cfg.refine_steps.end()) {
                result.trace.refine_events.push_back(
                    refine_until_threshold(state, k, it->second, model, cond, cfg, sched, opts));
            } else {
                AttnProbe probe = probe_attention(state.z, state.t, model, cond, cfg);
                result.trace.backward_updates.push_back({k, min_subject_attention(probe.maps)});
                Var loss = backward_loss(probe.maps);
                backward(loss);
                float eta = eta_schedule(k, opts.num_inference_steps, cfg, sched, state.t);
                state = latent_update(state, probe.z_leaf->grad, eta);
            }
        }

        bool want_forward_masks = cfg.forward_enabled && have_subjects && cfg.lambda > 0.0f;
        bool record = (want_forward_masks && k + 1 < cfg.guided_step_window) || dump;

        StepHooks hooks;
        if (record) {
            store.reset();
            hooks.store = &store;
        }
        if (want_forward_masks && in_window && !masks.empty()) {
            hooks.injection.masks = &masks;
            hooks.injection.mu = cfg.mu;
            hooks.forward_layers = &cfg.forward_layers;
        }
        state = ddim_step(state, model, branches, sched, k, opts.num_inference_steps, opts.guidance_scale,
                          record || hooks.injection.masks ? &hooks : nullptr);

        if (record && !cond.text.subject_spans.empty()) {
            NoGradGuard ng;
            auto agg = store.aggregate(ts[k]);
            auto reweighted = reweight_excluding_sot(agg, cond.text.sot_index);
            auto maps = subject_maps(reweighted, cond.text.subject_spans, cfg.mask_resolution, cfg.smoothing);
            if (want_forward_masks) {
                masks.clear();
                for (const auto& [sid, m] : maps.maps) masks[sid] = compute_mask(m->value);
            }
            if (dump) {
                for (const auto& [sid, m] : maps.maps) {
                    char name[64];
                    std::snprintf(name, sizeof(name), "step%03d_%s.png", k, sid.c_str());
                    write_png_gray((std::filesystem::path(dump_attn_dir) / name).string(), m->value, true);
                }
            }
        }
    }

    result.final_latent = state.z;
    result.image = model.codec.decode(state.z);
    result.trace.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

}  // namespace seg
