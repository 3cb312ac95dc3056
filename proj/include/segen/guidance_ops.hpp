#pragma once

#include <map>
#include <set>
#include <string>

#include "segen/attention_store.hpp"
#include "segen/latent.hpp"
#include "segen/schedule.hpp"

namespace seg {

enum class EtaDecay { Linear, SqrtAlpha };
enum class MaskThresholdRule { HalfMax };

struct GuidanceConfig {
    float lambda = 0.5f;   // image feature strength
    float mu = 0.8f;       // injection strength
    float eta0 = 20.0f;    // base latent step size
    EtaDecay eta_decay = EtaDecay::Linear;
    MaskThresholdRule mask_threshold_rule = MaskThresholdRule::HalfMax;
    std::set<LayerGroup> forward_layers = {LayerGroup::Down, LayerGroup::Mid, LayerGroup::Up};
    bool backward_enabled = true;
    bool forward_enabled = true;
    std::map<int, float> refine_steps = {{5, 0.5f}, {10, 0.8f}};
    int max_refine_iters = 20;
    int guided_step_window = 25;
    int mask_resolution = 16;
    GaussianSpec smoothing;

    void validate() const;
};

// m_{i,j} = 1 iff a_{i,j} > max(map)/2. Rejects all-zero maps.
Tensor compute_mask(const Tensor& map);

// Nearest-neighbor resample of a binary [P,P] mask to [p_out,p_out].
Tensor resample_mask_nearest(const Tensor& mask, int p_out);

// Eq-5 style injection on a value tensor whose rows are patches: rows inside
// the mask are untouched, rows outside are scaled by (1 - mu).
Tensor forward_inject_rows(const Tensor& z_img, const Tensor& mask, float mu);

// Row scale factors for the in-graph injection path.
Tensor injection_row_factors(const Tensor& mask, float mu, int block_resolution);

// L = 1 - min over subjects of (max patch of its smoothed map).
Var backward_loss(const SubjectMaps& maps);
// min over subjects of max-patch attention, as a plain value.
float min_subject_attention(const SubjectMaps& maps);

// z <- z - eta * grad. Timestep unchanged. Rejects non-finite gradients and
// eta <= 0.
LatentState latent_update(const LatentState& state, const Tensor& loss_grad, float eta);

float eta_schedule(int step_index, int num_inference_steps, const GuidanceConfig& cfg,
                   const NoiseSchedule& sched, int timestep);

}  // namespace seg
