#include "segen/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace seg {

NoiseSchedule make_noise_schedule(int num_train_steps, ScheduleKind kind) {
    if (num_train_steps < 2) throw std::invalid_argument("make_noise_schedule: num_train_steps must be >= 2");
    NoiseSchedule s;
    s.num_train_steps = num_train_steps;
    s.alphas.resize(num_train_steps);
    s.sigmas.resize(num_train_steps);

    const int T = num_train_steps;
    std::vector<double> abar(T);
    if (kind == ScheduleKind::Linear) {
        double cum = 1.0;
        for (int t = 0; t < T; ++t) {
            double beta = 1e-4 + (0.02 - 1e-4) * (T == 1 ? 0.0 : static_cast<double>(t) / (T - 1));
            cum *= 1.0 - beta;
            abar[t] = cum;
        }
    } else {
        // squared-cosine schedule with the usual 0.999 beta clamp
        const double sshift = 0.008;
        auto f = [&](double u) {
            double c = std::cos((u + sshift) / (1.0 + sshift) * M_PI / 2.0);
            return c * c;
        };
        double f0 = f(0.0);
        double cum = 1.0;
        double prev = 1.0;
        for (int t = 0; t < T; ++t) {
            double cur = f(static_cast<double>(t + 1) / T) / f0;
            double beta = std::min(1.0 - cur / prev, 0.999);
            cum *= 1.0 - beta;
            abar[t] = cum;
            prev = cur;
        }
    }
    // floor abar with a strictly decreasing ramp so sigma stays below 1 in
    // float32 and the monotonicity invariants hold at the noisy tail
    for (int t = 0; t < T; ++t) {
        double floor_t = 2e-6 * (1.0 + 1e-3 * (T - 1 - t));
        abar[t] = std::max(abar[t], floor_t);
    }
    for (int t = 0; t < T; ++t) {
        s.alphas[t] = static_cast<float>(std::sqrt(abar[t]));
        s.sigmas[t] = static_cast<float>(std::sqrt(1.0 - abar[t]));
    }
    return s;
}

ScheduleKind schedule_kind_from_string(const std::string& str) {
    if (str == "linear") return ScheduleKind::Linear;
    if (str == "cosine") return ScheduleKind::Cosine;
    throw std::invalid_argument("unknown schedule kind: " + str);
}

Tensor add_noise(const Tensor& z0, const Tensor& eps, int t, const NoiseSchedule& sched) {
    if (!z0.same_shape(eps)) throw std::invalid_argument("add_noise: z0/eps shape mismatch");
    if (t < 0 || t >= sched.num_train_steps) throw std::out_of_range("add_noise: timestep out of range");
    Tensor out(z0.shape);
    float a = sched.alphas[t], sg = sched.sigmas[t];
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a * z0[i] + sg * eps[i];
    return out;
}

std::vector<int> ddim_timesteps(const NoiseSchedule& sched, int num_inference_steps) {
    if (num_inference_steps < 1 || num_inference_steps > sched.num_train_steps)
        throw std::invalid_argument("ddim_timesteps: num_inference_steps out of range");
    int T = sched.num_train_steps;
    int stride = T / num_inference_steps;
    std::vector<int> ts(num_inference_steps);
    for (int k = 0; k < num_inference_steps; ++k) ts[k] = T - 1 - k * stride;  // descending
    return ts;
}

}  // namespace seg
