#pragma once

#include <memory>
#include <span>
#include <vector>

#include "windkit/errors.hpp"
#include "windkit/field.hpp"
#include "windkit/schedule.hpp"

namespace windkit {

/// Differential view of a clean-state predictor at a fixed (Z, k): its value
/// plus Jacobian-vector products in both directions. Produced once per
/// sampling step so guidance can reuse the forward pass.
class DenoiserLinearization {
public:
    virtual ~DenoiserLinearization() = default;
    virtual const FieldSequence& value() const = 0;
    virtual FieldSequence jvp(const FieldSequence& direction) const = 0;
    virtual FieldSequence vjp(const FieldSequence& cotangent) const = 0;
};

/// Clean-state predictor contract: Z -> X_hat with directional-derivative
/// access. Trainable implementations must ignore k inside denoise; it is
/// passed so exactly-solvable oracle implementations can be exact.
class Denoiser {
public:
    virtual ~Denoiser() = default;

    virtual FieldSequence denoise(const FieldSequence& z, const NoiseLevels& k) const = 0;
    virtual std::unique_ptr<DenoiserLinearization> linearize(const FieldSequence& z,
                                                             const NoiseLevels& k) const = 0;

    FieldSequence jvp(const FieldSequence& z, const NoiseLevels& k,
                      const FieldSequence& direction) const {
        return linearize(z, k)->jvp(direction);
    }
    FieldSequence vjp(const FieldSequence& z, const NoiseLevels& k,
                      const FieldSequence& cotangent) const {
        return linearize(z, k)->vjp(cotangent);
    }
};

/// Score inferred from the data prediction:
///   s^t = -beta(k^t)^{-2} (z^t - alpha(k^t) xhat^t).
/// Finite for every k since beta >= beta_min > 0.
inline FieldSequence score_from_denoiser(const FieldSequence& z, const FieldSequence& xhat,
                                         const NoiseLevels& k, const ScheduleParams& p = {}) {
    if (!z.same_shape(xhat))
        throw DataError("score_from_denoiser: z and xhat shapes differ");
    if (k.k.size() != z.frames)
        throw DataError("score_from_denoiser: noise level count mismatch");
    FieldSequence s = FieldSequence::zeros(z.grid, z.channels, z.frames, z.stride_hours);
    const std::size_t fs = z.frame_size();
    for (std::size_t t = 0; t < z.frames; ++t) {
        const double a = alpha(k.k[t], p);
        const double inv_b2 = 1.0 / (beta(k.k[t], p) * beta(k.k[t], p));
        const std::size_t off = t * fs;
        for (std::size_t i = 0; i < fs; ++i)
            s.values[off + i] = -inv_b2 * (z.values[off + i] - a * xhat.values[off + i]);
    }
    return s;
}

/// Training objective: channel- and area-weighted squared error, divided by
/// T*C*H*W so magnitudes are grid-independent. Empty channel_weights means 1.
inline double weighted_mse(const FieldSequence& x, const FieldSequence& xhat,
                           std::span<const double> channel_weights,
                           std::span<const double> area) {
    if (!x.same_shape(xhat)) throw DataError("weighted_mse: shapes differ");
    const std::size_t c_count = x.n_channels(), px = x.pixels();
    if (!channel_weights.empty() && channel_weights.size() != c_count)
        throw DataError("weighted_mse: channel weight count mismatch");
    if (area.size() != px) throw DataError("weighted_mse: area weight size mismatch");
    double acc = 0.0;
    for (std::size_t t = 0; t < x.frames; ++t)
        for (std::size_t c = 0; c < c_count; ++c) {
            const double wc = channel_weights.empty() ? 1.0 : channel_weights[c];
            auto xs = x.frame_channel(t, c);
            auto ps = xhat.frame_channel(t, c);
            double s = 0.0;
            for (std::size_t i = 0; i < px; ++i) {
                const double d = xs[i] - ps[i];
                s += area[i] * d * d;
            }
            acc += wc * s;
        }
    return acc / static_cast<double>(x.size());
}

}  // namespace windkit
