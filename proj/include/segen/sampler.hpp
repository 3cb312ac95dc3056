#pragma once

#include <optional>

#include "segen/latent.hpp"
#include "segen/model.hpp"
#include "segen/schedule.hpp"

namespace seg {

// Conditioning resolved to features: conditional text, per-subject image
// tokens, and the unconditional branch used by classifier-free guidance.
struct CondBranches {
    Var cond_text;                        // [N, d]
    std::vector<SubjectTokens> subjects;  // projected image tokens per subject
    float lambda = 0.0f;
    Var uncond_text;                      // null embedding; required when guidance_scale != 1
};

// Hooks applied to the conditional pass only.
struct StepHooks {
    AttentionStore* store = nullptr;
    InjectionSpec injection;
    const std::set<LayerGroup>* forward_layers = nullptr;
};

// One deterministic DDIM update. Classifier-free combination
// eps = eps_uncond + s*(eps_cond - eps_uncond) runs before the latent update;
// s == 1 short-circuits to the conditional prediction exactly.
LatentState ddim_step(const LatentState& state, const GenerationModel& model, const CondBranches& cond,
                      const NoiseSchedule& sched, int step_index, int num_inference_steps,
                      float guidance_scale, const StepHooks* hooks = nullptr);

// Plain text-to-image DDIM loop (the guidance-free baseline pipeline).
Tensor sample_baseline(const GenerationModel& model, const CondBranches& cond, const NoiseSchedule& sched,
                       int num_inference_steps, float guidance_scale, uint64_t seed);

Tensor initial_latent(const DenoiserConfig& cfg, uint64_t seed);

// One training sample: encoded latent target plus raw conditioning inputs
// (tokens and per-subject reference crops, re-encoded every step while the
// encoders train).
struct ConditionedSample {
    Tensor z0;                // [C,H,W], already codec-encoded
    std::vector<int> tokens;  // caption ids including <SoT>
    std::vector<std::pair<std::string, std::vector<Tensor>>> subject_crops;
};

// Deterministic single-sample denoising loss at fixed (t, eps); the gradient
// checks difference exactly this function.
Var training_loss_at(const GenerationModel& model, const ConditionedSample& sample, const NoiseSchedule& sched,
                     int t, const Tensor& eps, bool drop_condition, float lambda_train);

// Minibatch loss with uniform t, fresh noise and condition dropout.
Var training_loss(const GenerationModel& model, const std::vector<const ConditionedSample*>& batch,
                  const NoiseSchedule& sched, RandomStream& rng, float cond_dropout, float lambda_train);

std::vector<SubjectTokens> encode_subject_tokens(
    const GenerationModel& model,
    const std::vector<std::pair<std::string, std::vector<Tensor>>>& subject_images);

}  // namespace seg
