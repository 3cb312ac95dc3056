#include "segen/sampler.hpp"

#include <cmath>
#include <stdexcept>

namespace seg {

LatentState ddim_step(const LatentState& state, const GenerationModel& model, const CondBranches& cond,
                      const NoiseSchedule& sched, int step_index, int num_inference_steps,
                      float guidance_scale, const StepHooks* hooks) {
    if (num_inference_steps > sched.num_train_steps)
        throw std::invalid_argument("ddim_step: num_inference_steps exceeds num_train_steps");
    auto ts = ddim_timesteps(sched, num_inference_steps);
    if (step_index < 0 || step_index >= num_inference_steps) throw std::out_of_range("ddim_step: step index");
    int t = ts[step_index];
    if (state.t != t) throw std::invalid_argument("ddim_step: latent timestep does not match step index");

    DenoiseContext cctx;
    cctx.text = cond.cond_text;
    cctx.subjects = &cond.subjects;
    cctx.lambda = cond.lambda;
    if (hooks) {
        cctx.store = hooks->store;
        cctx.injection = hooks->injection;
        cctx.forward_layers = hooks->forward_layers;
    }

    Var z = constant(state.z);
    Tensor eps;
    {
        NoGradGuard ng;
        Tensor eps_cond = model.unet.forward(z, t, cctx)->value;
        if (guidance_scale == 1.0f) {
            eps = std::move(eps_cond);
        } else {
            if (!cond.uncond_text)
                throw std::invalid_argument("ddim_step: classifier-free guidance requires an unconditional embedding");
            DenoiseContext uctx;
            uctx.text = cond.uncond_text;
            Tensor eps_uncond = model.unet.forward(z, t, uctx)->value;
            eps = eps_uncond;
            for (int64_t i = 0; i < eps.numel(); ++i)
                eps[i] = eps_uncond[i] + guidance_scale * (eps_cond[i] - eps_uncond[i]);
        }
    }

    float a_t = sched.alphas[t], s_t = sched.sigmas[t];
    int t_prev = step_index + 1 < num_inference_steps ? ts[step_index + 1] : -1;
    float a_prev = t_prev >= 0 ? sched.alphas[t_prev] : 1.0f;
    float s_prev = t_prev >= 0 ? sched.sigmas[t_prev] : 0.0f;

    LatentState out;
    out.rng_seed = state.rng_seed;
    out.t = t_prev;
    out.z = Tensor(state.z.shape);
    for (int64_t i = 0; i < out.z.numel(); ++i) {
        float z0p = (state.z[i] - s_t * eps[i]) / a_t;
        out.z[i] = a_prev * z0p + s_prev * eps[i];
    }
    if (!out.z.all_finite())
        throw std::runtime_error("ddim_step: non-finite latent after step " + std::to_string(step_index));
    return out;
}

Tensor initial_latent(const DenoiserConfig& cfg, uint64_t seed) {
    RandomStream rng(seed);
    Tensor z({cfg.latent_channels, cfg.latent_size, cfg.latent_size});
    rng.fill_normal(z);
    return z;
}

Tensor sample_baseline(const GenerationModel& model, const CondBranches& cond, const NoiseSchedule& sched,
                       int num_inference_steps, float guidance_scale, uint64_t seed) {
    auto ts = ddim_timesteps(sched, num_inference_steps);
    LatentState state{initial_latent(model.cfg, seed), ts[0], seed};
    for (int k = 0; k < num_inference_steps; ++k)
        state = ddim_step(state, model, cond, sched, k, num_inference_steps, guidance_scale, nullptr);
    return model.codec.decode(state.z);
}

std::vector<SubjectTokens> encode_subject_tokens(
    const GenerationModel& model,
    const std::vector<std::pair<std::string, std::vector<Tensor>>>& subject_images) {
    std::vector<SubjectTokens> out;
    for (const auto& [id, images] : subject_images) {
        if (images.empty()) throw std::invalid_argument("subject " + id + " has no reference images");
        std::vector<Var> views;
        views.reserve(images.size());
        for (const auto& img : images) views.push_back(model.image_encoder.forward(img));
        out.push_back({id, views.size() == 1 ? views[0] : concat_rows(views)});
    }
    return out;
}

Var training_loss_at(const GenerationModel& model, const ConditionedSample& sample, const NoiseSchedule& sched,
                     int t, const Tensor& eps, bool drop_condition, float lambda_train) {
    if (!sample.z0.same_shape(eps)) throw std::invalid_argument("training_loss: z0/eps shape mismatch");

    DenoiseContext ctx;
    std::vector<SubjectTokens> subjects;
    if (drop_condition) {
        ctx.text = model.null_text;
    } else {
        ctx.text = model.text_encoder.forward(sample.tokens);
        subjects = encode_subject_tokens(model, sample.subject_crops);
        ctx.subjects = &subjects;
        ctx.lambda = subjects.empty() ? 0.0f : lambda_train;
    }

    Tensor zt = add_noise(sample.z0, eps, t, sched);
    Var pred = model.unet.forward(constant(zt), t, ctx);
    Var loss = mse(pred, constant(eps));
    if (!std::isfinite(loss->value[0])) throw std::runtime_error("training_loss: non-finite loss (diverged)");
    return loss;
}

Var training_loss(const GenerationModel& model, const std::vector<const ConditionedSample*>& batch,
                  const NoiseSchedule& sched, RandomStream& rng, float cond_dropout, float lambda_train) {
    if (batch.empty()) throw std::invalid_argument("training_loss: empty batch");
    Var acc;
    for (const ConditionedSample* s : batch) {
        int t = rng.uniform_int(sched.num_train_steps);
        Tensor eps(s->z0.shape);
        rng.fill_normal(eps);
        bool drop = rng.u01() < cond_dropout;
        Var l = training_loss_at(model, *s, sched, t, eps, drop, lambda_train);
        acc = acc ? add(acc, l) : l;
    }
    return batch.size() > 1 ? scale(acc, 1.0f / static_cast<float>(batch.size())) : acc;
}

}  // namespace seg
