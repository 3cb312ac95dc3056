#pragma once

#include <string>

#include "segen/guidance_ops.hpp"
#include "segen/sampler.hpp"

namespace seg {

struct SamplerOptions {
    int num_inference_steps = 50;
    float guidance_scale = 7.5f;
};

struct RefineEvent {
    int step_index = 0;
    float required = 0.0f;
    float pre_attention = 0.0f;
    float post_attention = 0.0f;
    int iterations = 0;
    float final_loss = 0.0f;
    bool hit_max_iters = false;
};

struct BackwardUpdateEvent {
    int step_index = 0;
    float pre_attention = 0.0f;
};

struct GenerationTrace {
    std::vector<RefineEvent> refine_events;
    std::vector<BackwardUpdateEvent> backward_updates;
    double seconds = 0.0;
    int num_steps = 0;
};

struct GenerationResult {
    Tensor image;  // [3,64,64]
    Tensor final_latent;
    GenerationTrace trace;
};

// Pre-resolved conditioning for a guided run (features computed once, under
// no-grad, so refinement graphs reach only the latent).
struct GuidedConditioning {
    TextEmbedding text;
    std::vector<SubjectTokens> subjects;
    Var uncond_text;
};

GuidedConditioning prepare_conditioning(const GenerationModel& model, const std::string& prompt,
                                        const Vocabulary& vocab, const SubjectSet& subjects);

// Iteratively refines the latent at one step until the minimum subject
// attention reaches `required` or cfg.max_refine_iters updates have run.
RefineEvent refine_until_threshold(LatentState& state, int step_index, float required,
                                   const GenerationModel& model, const GuidedConditioning& cond,
                                   const GuidanceConfig& cfg, const NoiseSchedule& sched,
                                   const SamplerOptions& opts);

// Full SE-guided pipeline: optional backward refinement before each step's
// denoiser pass, forward injection with masks from the previous step's
// attention, DDIM update, final decode.
GenerationResult guided_generate(const GenerationModel& model, const std::string& prompt,
                                 const SubjectSet& subjects, const GuidanceConfig& cfg,
                                 const Vocabulary& vocab, const NoiseSchedule& sched,
                                 const SamplerOptions& opts, uint64_t seed,
                                 const std::string& dump_attn_dir = "");

}  // namespace seg
