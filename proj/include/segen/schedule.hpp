#pragma once

#include <vector>

#include "segen/tensor.hpp"

namespace seg {

enum class ScheduleKind { Linear, Cosine };

// Variance-preserving noise schedule: z_t = alphas[t]*z0 + sigmas[t]*eps with
// alphas[t]^2 + sigmas[t]^2 == 1 at every step.
struct NoiseSchedule {
    int num_train_steps = 0;
    std::vector<float> alphas;  // strictly decreasing, (0,1]
    std::vector<float> sigmas;  // strictly increasing, [0,1)
};

NoiseSchedule make_noise_schedule(int num_train_steps, ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& s);

// z_t = alphas[t]*z0 + sigmas[t]*eps
Tensor add_noise(const Tensor& z0, const Tensor& eps, int t, const NoiseSchedule& sched);

// Descending train-timestep indices visited by a DDIM run ("leading" spacing).
std::vector<int> ddim_timesteps(const NoiseSchedule& sched, int num_inference_steps);

}  // namespace seg
