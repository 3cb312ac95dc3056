#include "segen/guidance_ops.hpp"

#include <cmath>
#include <stdexcept>

namespace seg {

void GuidanceConfig::validate() const {
    if (lambda < 0.0f) throw std::invalid_argument("guidance config: lambda must be >= 0");
    if (mu < 0.0f || mu > 1.0f) throw std::invalid_argument("guidance config: mu must be in [0,1]");
    if (eta0 <= 0.0f) throw std::invalid_argument("guidance config: eta0 must be > 0");
    if (max_refine_iters < 1) throw std::invalid_argument("guidance config: max_refine_iters must be >= 1");
    if (guided_step_window < 0) throw std::invalid_argument("guidance config: guided_step_window must be >= 0");
    if (mask_resolution < 1) throw std::invalid_argument("guidance config: mask_resolution must be >= 1");
    for (const auto& [step, thr] : refine_steps)
        if (thr <= 0.0f || thr > 1.0f)
            throw std::invalid_argument("guidance config: refine threshold must be in (0,1]");
}

Tensor compute_mask(const Tensor& map) {
    if (map.ndim() != 2 || map.rows() != map.cols()) throw std::invalid_argument("compute_mask: map must be [P,P]");
    float mx = 0.0f;
    for (float v : map.data) {
        if (!std::isfinite(v) || v < 0.0f) throw std::invalid_argument("compute_mask: map must be finite and non-negative");
        mx = std::max(mx, v);
    }
    if (mx == 0.0f) throw std::runtime_error("compute_mask: attention map is all zero");
    float b = mx / 2.0f;
    Tensor mask(map.shape);
    for (int64_t i = 0; i < map.numel(); ++i) mask[i] = map[i] > b ? 1.0f : 0.0f;
    return mask;
}

Tensor resample_mask_nearest(const Tensor& mask, int p_out) {
    if (mask.ndim() != 2 || mask.rows() != mask.cols()) throw std::invalid_argument("resample_mask_nearest: mask must be [P,P]");
    int p_in = mask.rows();
    if (p_in == p_out) return mask;
    Tensor out({p_out, p_out});
    for (int y = 0; y < p_out; ++y)
        for (int x = 0; x < p_out; ++x) out.at(y, x) = mask.at(y * p_in / p_out, x * p_in / p_out);
    return out;
}

Tensor forward_inject_rows(const Tensor& z_img, const Tensor& mask, float mu) {
    if (mu < 0.0f || mu > 1.0f) throw std::invalid_argument("forward_inject: mu must be in [0,1]");
    if (z_img.ndim() != 2) throw std::invalid_argument("forward_inject: z must be [HW, C]");
    if (mask.numel() != z_img.rows()) throw std::invalid_argument("forward_inject: mask/patch count mismatch");
    if (mu == 0.0f) return z_img;
    Tensor out = z_img;
    int cols = z_img.cols();
    float off_scale = 1.0f - mu;
    for (int r = 0; r < z_img.rows(); ++r) {
        if (mask[r] != 0.0f) continue;  // inside mask: untouched
        for (int c = 0; c < cols; ++c) out.at(r, c) *= off_scale;
    }
    return out;
}

Tensor injection_row_factors(const Tensor& mask, float mu, int block_resolution) {
    Tensor m = resample_mask_nearest(mask, block_resolution);
    Tensor f({block_resolution * block_resolution});
    float off_scale = 1.0f - mu;
    for (int64_t i = 0; i < m.numel(); ++i) f[i] = m[i] != 0.0f ? 1.0f : off_scale;
    return f;
}

Var backward_loss(const SubjectMaps& maps) {
    if (maps.maps.empty()) throw std::invalid_argument("backward_loss: empty subject set");
    std::vector<Var> per_subject;
    per_subject.reserve(maps.maps.size());
    for (const auto& [id, m] : maps.maps) per_subject.push_back(reduce_max_all(m));
    return rsub_scalar(1.0f, reduce_min_all(concat_scalars(per_subject)));
}

float min_subject_attention(const SubjectMaps& maps) {
    if (maps.maps.empty()) throw std::invalid_argument("min_subject_attention: empty subject set");
    float best = 2.0f;
    for (const auto& [id, m] : maps.maps) {
        float mx = m->value[0];
        for (float v : m->value.data) mx = std::max(mx, v);
        best = std::min(best, mx);
    }
    return best;
}

LatentState latent_update(const LatentState& state, const Tensor& loss_grad, float eta) {
    if (eta <= 0.0f) throw std::invalid_argument("latent_update: eta must be > 0");
    if (!loss_grad.same_shape(state.z)) throw std::invalid_argument("latent_update: grad shape mismatch");
    if (!loss_grad.all_finite()) throw std::runtime_error("latent_update: non-finite gradient");
    LatentState out = state;
    for (int64_t i = 0; i < out.z.numel(); ++i) out.z[i] -= eta * loss_grad[i];
    return out;
}

float eta_schedule(int step_index, int num_inference_steps, const GuidanceConfig& cfg,
                   const NoiseSchedule& sched, int timestep) {
    if (step_index < 0 || step_index >= num_inference_steps)
        throw std::out_of_range("eta_schedule: step index out of range");
    switch (cfg.eta_decay) {
        case EtaDecay::Linear:
            return cfg.eta0 * (1.0f - static_cast<float>(step_index) / static_cast<float>(num_inference_steps));
        case EtaDecay::SqrtAlpha: {
            if (timestep < 0 || timestep >= sched.num_train_steps)
                throw std::out_of_range("eta_schedule: timestep out of range");
            return cfg.eta0 * std::sqrt(1.0f - sched.alphas[timestep]);
        }
    }
    throw std::logic_error("eta_schedule: unknown decay");
}

}  // namespace seg
