#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "windkit/cg.hpp"
#include "windkit/denoiser.hpp"
#include "windkit/errors.hpp"
#include "windkit/field.hpp"
#include "windkit/operators.hpp"
#include "windkit/sampler.hpp"
#include "windkit/schedule.hpp"

namespace windkit {

enum class GuidanceMethod { mmps, dps };

inline std::string to_string(GuidanceMethod m) {
    return m == GuidanceMethod::mmps ? "mmps" : "dps";
}

inline GuidanceMethod guidance_method_from_string(const std::string& s) {
    if (s == "mmps") return GuidanceMethod::mmps;
    if (s == "dps") return GuidanceMethod::dps;
    throw ConfigError("unknown guidance method '" + s + "'");
}

struct GuidanceConfig {
    GuidanceMethod method = GuidanceMethod::mmps;
    std::size_t cg_iters = 2;
    double delta_sq = 0.0015;
    std::vector<double> residual_weights;  // optional per-output-component scaling
    double cg_tol = 1e-6;
    double strength = 1.0;  // optional multiplier on the likelihood score

    void validate() const {
        if (cg_iters < 1) throw ConfigError("GuidanceConfig: cg_iters must be >= 1");
        if (!(delta_sq > 0.0)) throw ConfigError("GuidanceConfig: delta_sq must be positive");
        if (strength < 0.0) throw ConfigError("GuidanceConfig: strength must be nonnegative");
    }
};

namespace detail {

inline void scale_per_frame(FieldSequence& f, const NoiseLevels& k, const ScheduleParams& p) {
    const std::size_t fs = f.frame_size();
    for (std::size_t t = 0; t < f.frames; ++t) {
        const double s = beta(k.k[t], p) * beta(k.k[t], p) / alpha(k.k[t], p);
        const std::size_t off = t * fs;
        for (std::size_t i = 0; i < fs; ++i) f.values[off + i] *= s;
    }
}

/// Likelihood score at a prepared linearization. Solves
///   (W G Cov(x|z) G' W' + delta^2 I) v = W (y - A(xhat))
/// matrix-free with Cov(x|z) u = J (beta^2/alpha u) via one jvp, then returns
///   J' G' W' v, scaled by the optional strength multiplier.
/// DPS degenerates the system matrix to delta^2 I (no CG).
inline FieldSequence likelihood_score_at(const DenoiserLinearization& lin,
                                         const ForwardOperator& op, const NoiseLevels& k,
                                         std::span<const double> y, const GuidanceConfig& cfg,
                                         const ScheduleParams& sched) {
    cfg.validate();
    if (!op.apply || !op.jvp || !op.vjp)
        throw ConfigError("likelihood_score: operator lacks apply/jvp/vjp");
    const FieldSequence& xhat = lin.value();
    const std::vector<double> ax = op.apply(xhat);
    if (ax.size() != y.size())
        throw DataError("likelihood_score: observation size " + std::to_string(y.size()) +
                        " != operator output size " + std::to_string(ax.size()));
    if (!cfg.residual_weights.empty() && cfg.residual_weights.size() != y.size())
        throw ConfigError("likelihood_score: residual weight count mismatch");

    auto weight = [&](std::vector<double> v) {
        if (!cfg.residual_weights.empty())
            for (std::size_t i = 0; i < v.size(); ++i) v[i] *= cfg.residual_weights[i];
        return v;
    };

    std::vector<double> resid(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) resid[i] = y[i] - ax[i];
    resid = weight(std::move(resid));

    std::vector<double> v;
    if (cfg.method == GuidanceMethod::dps) {
        v = std::move(resid);
        for (double& r : v) r /= cfg.delta_sq;
    } else {
        auto matvec = [&](const std::vector<double>& in) {
            FieldSequence g = op.vjp(xhat, weight(in));
            scale_per_frame(g, k, sched);
            const FieldSequence jg = lin.jvp(g);
            std::vector<double> out = weight(op.jvp(xhat, jg));
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += cfg.delta_sq * in[i];
            return out;
        };
        v = cg_solve(matvec, resid, cfg.cg_iters, cfg.cg_tol).x;
    }

    FieldSequence pulled = op.vjp(xhat, weight(std::move(v)));
    FieldSequence score = lin.vjp(pulled);
    if (cfg.strength != 1.0)
        for (double& s : score.values) s *= cfg.strength;
    return score;
}

}  // namespace detail

/// Gradient of the measurement log-likelihood with respect to the noised
/// state, via moment matching (CG) or the DPS point estimate.
inline FieldSequence likelihood_score(const Denoiser& denoiser, const ForwardOperator& op,
                                      const FieldSequence& z, const NoiseLevels& k,
                                      std::span<const double> y, const GuidanceConfig& cfg,
                                      const ScheduleParams& sched = {}) {
    const auto lin = denoiser.linearize(z, k);
    return detail::likelihood_score_at(*lin, op, k, y, cfg, sched);
}

/// Fold the likelihood score into the clean estimate:
///   xhat_guided^t = xhat^t + (beta(k^t)^2 / alpha(k^t)) s_y^t.
/// Feeding this into the DDIM update substitutes the posterior score for the
/// prior score under the score-from-denoiser identity.
inline FieldSequence guided_denoised_estimate(const FieldSequence& xhat,
                                              const FieldSequence& score, const NoiseLevels& k,
                                              const ScheduleParams& sched = {}) {
    if (!xhat.same_shape(score))
        throw DataError("guided_denoised_estimate: shape mismatch");
    FieldSequence out = xhat;
    const std::size_t fs = xhat.frame_size();
    for (std::size_t t = 0; t < xhat.frames; ++t) {
        const double s = beta(k.k[t], sched) * beta(k.k[t], sched) / alpha(k.k[t], sched);
        const std::size_t off = t * fs;
        for (std::size_t i = 0; i < fs; ++i) out.values[off + i] += s * score.values[off + i];
    }
    return out;
}

/// Sampler hook bundling one forward linearization per step: denoise, compute
/// the likelihood score against (op, y), and return the guided estimate.
inline GuidedDenoise make_guidance_hook(const Denoiser& denoiser, ForwardOperator op,
                                        std::vector<double> y, GuidanceConfig cfg,
                                        ScheduleParams sched = {}) {
    cfg.validate();
    auto op_ptr = std::make_shared<ForwardOperator>(std::move(op));
    auto y_ptr = std::make_shared<std::vector<double>>(std::move(y));
    return [&denoiser, op_ptr, y_ptr, cfg, sched](const FieldSequence& z,
                                                  const NoiseLevels& k) {
        const auto lin = denoiser.linearize(z, k);
        const FieldSequence score =
            detail::likelihood_score_at(*lin, *op_ptr, k, *y_ptr, cfg, sched);
        return guided_denoised_estimate(lin->value(), score, k, sched);
    };
}

}  // namespace windkit
