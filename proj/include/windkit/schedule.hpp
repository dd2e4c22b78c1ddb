#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "windkit/errors.hpp"
#include "windkit/field.hpp"
#include "windkit/rng.hpp"

namespace windkit {

/// Rectified noise schedule endpoints.
struct ScheduleParams {
    double alpha_min = 1e-3;
    double beta_min = 1e-3;

    void validate() const {
        if (!(alpha_min > 0.0 && alpha_min < 1.0) || !(beta_min > 0.0 && beta_min < 1.0))
            throw ConfigError("ScheduleParams: alpha_min and beta_min must lie in (0, 1)");
    }
};

namespace detail {
inline void check_noise_level(double k) {
    if (!(k >= 0.0 && k <= 1.0))
        throw NumericError("noise level k=" + std::to_string(k) + " outside [0, 1]");
}
}  // namespace detail

/// Signal coefficient alpha(k) = k*alpha_min + (1-k); strictly decreasing.
inline double alpha(double k, const ScheduleParams& p = {}) {
    detail::check_noise_level(k);
    return k * p.alpha_min + (1.0 - k);
}

/// Noise coefficient beta(k) = k + (1-k)*beta_min; strictly increasing.
inline double beta(double k, const ScheduleParams& p = {}) {
    detail::check_noise_level(k);
    return k + (1.0 - k) * p.beta_min;
}

/// Interpolation coefficient for the reverse transition from level k to
/// k' <= k:  tau = 1 - alpha(k)^2 beta(k')^2 / (alpha(k')^2 beta(k)^2).
inline double tau(double k, double k_prime, const ScheduleParams& p = {}) {
    detail::check_noise_level(k);
    detail::check_noise_level(k_prime);
    if (k_prime > k)
        throw NumericError("tau: k'=" + std::to_string(k_prime) + " exceeds k=" +
                           std::to_string(k));
    const double ak = alpha(k, p), bk = beta(k, p);
    const double akp = alpha(k_prime, p), bkp = beta(k_prime, p);
    const double r = (ak * bkp) / (akp * bk);
    return 1.0 - r * r;
}

/// T i.i.d. uniform noise levels.
inline NoiseLevels sample_noise_levels(std::size_t frames, RandomStream& rng) {
    NoiseLevels n;
    n.k.resize(frames);
    for (double& v : n.k) v = rng.uniform();
    return n;
}

/// Forward process: frame t of the output is alpha(k^t) x^t + beta(k^t) eps^t.
inline FieldSequence noise_sequence(const FieldSequence& x, const NoiseLevels& k,
                                    const FieldSequence& eps, const ScheduleParams& p = {}) {
    if (!x.same_shape(eps))
        throw DataError("noise_sequence: x and eps shapes differ");
    if (k.k.size() != x.frames)
        throw DataError("noise_sequence: noise levels count " + std::to_string(k.k.size()) +
                        " != frames " + std::to_string(x.frames));
    k.validate();
    FieldSequence z = FieldSequence::zeros(x.grid, x.channels, x.frames, x.stride_hours);
    const std::size_t fs = x.frame_size();
    for (std::size_t t = 0; t < x.frames; ++t) {
        const double a = alpha(k.k[t], p), b = beta(k.k[t], p);
        const std::size_t off = t * fs;
        for (std::size_t i = 0; i < fs; ++i)
            z.values[off + i] = a * x.values[off + i] + b * eps.values[off + i];
    }
    return z;
}

/// Uniform descending sampling grid from 1 to 0 inclusive: n_steps+1 points.
inline std::vector<double> sampling_grid(std::size_t n_steps) {
    if (n_steps < 1) throw ConfigError("sampling_grid: n_steps must be >= 1");
    std::vector<double> g(n_steps + 1);
    for (std::size_t i = 0; i <= n_steps; ++i)
        g[i] = 1.0 - static_cast<double>(i) / static_cast<double>(n_steps);
    g.back() = 0.0;
    return g;
}

}  // namespace windkit
