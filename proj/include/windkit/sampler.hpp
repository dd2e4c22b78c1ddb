#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "windkit/denoiser.hpp"
#include "windkit/errors.hpp"
#include "windkit/field.hpp"
#include "windkit/rng.hpp"
#include "windkit/schedule.hpp"

namespace windkit {

struct SamplerConfig {
    std::size_t n_steps = 15;
    double eta = 0.0;
    std::vector<std::size_t> pin_frames;  // held clean, re-imposed after every step
    enum class KScheduleMode { uniform_shared, per_frame_custom };
    KScheduleMode mode = KScheduleMode::uniform_shared;
    std::vector<std::vector<double>> per_frame_grid;  // per frame, descending, n_steps+1 points

    void validate(std::size_t frames) const {
        if (n_steps < 1) throw ConfigError("SamplerConfig: n_steps must be >= 1");
        if (!(eta >= 0.0 && eta <= 1.0))
            throw ConfigError("SamplerConfig: eta must lie in [0, 1]");
        for (std::size_t p : pin_frames)
            if (p >= frames)
                throw ConfigError("SamplerConfig: pinned frame " + std::to_string(p) +
                                  " out of range");
        if (mode == KScheduleMode::per_frame_custom) {
            if (per_frame_grid.size() != frames)
                throw ConfigError("SamplerConfig: per-frame grid needs one schedule per frame");
            for (const auto& g : per_frame_grid) {
                if (g.size() != n_steps + 1)
                    throw ConfigError("SamplerConfig: per-frame schedules need n_steps+1 points");
                for (std::size_t i = 1; i < g.size(); ++i)
                    if (g[i] > g[i - 1])
                        throw ConfigError("SamplerConfig: per-frame schedules must descend");
            }
        }
    }

    bool pinned(std::size_t t) const {
        for (std::size_t p : pin_frames)
            if (p == t) return true;
        return false;
    }
};

/// Replaces the plain denoise call inside the sampler; returns the (possibly
/// guidance-corrected) clean estimate for the current state.
using GuidedDenoise = std::function<FieldSequence(const FieldSequence&, const NoiseLevels&)>;

/// One reverse transition from per-frame levels k to k' <= k:
///   z^t <- a' xhat^t + b' sqrt(1 - eta tau) (z^t - a xhat^t)/b
///              + b' sqrt(eta tau) eps.
/// Pinned frames are returned untouched.
inline FieldSequence ddim_step(const FieldSequence& z, const FieldSequence& xhat,
                               const NoiseLevels& k, const NoiseLevels& k_next, double eta,
                               RandomStream& rng, const ScheduleParams& p = {},
                               const std::vector<bool>& pinned = {}) {
    if (!z.same_shape(xhat)) throw DataError("ddim_step: z and xhat shapes differ");
    if (k.k.size() != z.frames || k_next.k.size() != z.frames)
        throw DataError("ddim_step: noise level counts differ from frames");
    FieldSequence out = z;
    const std::size_t fs = z.frame_size();
    for (std::size_t t = 0; t < z.frames; ++t) {
        if (!pinned.empty() && pinned[t]) continue;
        const double kc = k.k[t], kn = k_next.k[t];
        if (kn > kc)
            throw NumericError("ddim_step: frame " + std::to_string(t) +
                               " asked to move from k=" + std::to_string(kc) + " to larger k'=" +
                               std::to_string(kn));
        const double a = alpha(kc, p), b = beta(kc, p);
        const double an = alpha(kn, p), bn = beta(kn, p);
        const double tv = tau(kc, kn, p);
        const double carry = bn * std::sqrt(std::max(1.0 - eta * tv, 0.0)) / b;
        const double fresh = bn * std::sqrt(std::max(eta * tv, 0.0));
        const std::size_t off = t * fs;
        for (std::size_t i = 0; i < fs; ++i) {
            const double zh = z.values[off + i] - a * xhat.values[off + i];
            double v = an * xhat.values[off + i] + carry * zh;
            if (fresh > 0.0) v += fresh * rng.normal();
            out.values[off + i] = v;
        }
    }
    return out;
}

/// Reverse sampling from a prepared initial state: pinned frames hold clean
/// data, all other frames iterate over the k-grid from 1 to 0. The guidance
/// correction (when given) replaces the plain denoise before every step, and
/// pinned frames are re-imposed after every step.
inline FieldSequence sample(const Denoiser& denoiser, const SamplerConfig& cfg,
                            const FieldSequence& z_init, RandomStream& rng,
                            const ScheduleParams& p = {}, const GuidedDenoise& guided = {}) {
    cfg.validate(z_init.frames);
    const std::size_t frames = z_init.frames;
    std::vector<bool> pinned(frames, false);
    for (std::size_t t : cfg.pin_frames) pinned[t] = true;

    const std::vector<double> shared_grid =
        cfg.mode == SamplerConfig::KScheduleMode::uniform_shared ? sampling_grid(cfg.n_steps)
                                                                 : std::vector<double>{};
    auto level_at = [&](std::size_t t, std::size_t i) {
        if (pinned[t]) return 0.0;
        return cfg.mode == SamplerConfig::KScheduleMode::uniform_shared
                   ? shared_grid[i]
                   : cfg.per_frame_grid[t][i];
    };

    FieldSequence z = z_init;
    for (std::size_t i = 0; i < cfg.n_steps; ++i) {
        NoiseLevels k_cur, k_next;
        k_cur.k.resize(frames);
        k_next.k.resize(frames);
        for (std::size_t t = 0; t < frames; ++t) {
            k_cur.k[t] = level_at(t, i);
            k_next.k[t] = level_at(t, i + 1);
        }
        const FieldSequence xhat = guided ? guided(z, k_cur) : denoiser.denoise(z, k_cur);
        z = ddim_step(z, xhat, k_cur, k_next, cfg.eta, rng, p, pinned);
        const std::size_t fs = z.frame_size();
        for (std::size_t t = 0; t < frames; ++t)
            if (pinned[t])
                std::copy(z_init.values.begin() + static_cast<std::ptrdiff_t>(t * fs),
                          z_init.values.begin() + static_cast<std::ptrdiff_t>((t + 1) * fs),
                          z.values.begin() + static_cast<std::ptrdiff_t>(t * fs));
        for (double v : z.values)
            if (!std::isfinite(v))
                throw NumericError("sample: non-finite state after step " + std::to_string(i) +
                                   " (k=" + std::to_string(shared_grid.empty() ? -1.0 : shared_grid[i + 1]) + ")");
    }
    return z;
}

/// Forecast: clean context frames occupy the first slots, every other frame
/// starts as pure noise and is denoised on the shared schedule.
inline FieldSequence forecast(const Denoiser& denoiser, SamplerConfig cfg,
                              const FieldSequence& context, std::size_t total_frames,
                              RandomStream& rng, const ScheduleParams& p = {},
                              const GuidedDenoise& guided = {}) {
    if (context.frames < 1 || context.frames >= total_frames)
        throw ConfigError("forecast: context must hold between 1 and total_frames-1 frames");
    FieldSequence z = FieldSequence::zeros(context.grid, context.channels, total_frames,
                                           context.stride_hours);
    const std::size_t fs = z.frame_size();
    for (std::size_t t = 0; t < total_frames; ++t) {
        if (t < context.frames) {
            auto src = context.frame(t);
            std::copy(src.begin(), src.end(),
                      z.values.begin() + static_cast<std::ptrdiff_t>(t * fs));
        } else {
            auto dst = z.frame(t);
            for (double& v : dst) v = rng.normal();
        }
    }
    cfg.pin_frames.clear();
    for (std::size_t t = 0; t < context.frames; ++t) cfg.pin_frames.push_back(t);
    cfg.mode = SamplerConfig::KScheduleMode::uniform_shared;
    return sample(denoiser, cfg, z, rng, p, guided);
}

/// Windowed autoregressive rollout: the final generated frame of window i is
/// pinned as the clean context frame 0 of window i+1. Returns
/// 1 + (T-1) * n_windows frames without duplicating the shared boundaries.
inline FieldSequence rollout(const Denoiser& denoiser, const SamplerConfig& cfg,
                             const FieldSequence& initial_frame, std::size_t model_frames,
                             std::size_t n_windows, RandomStream& rng,
                             const ScheduleParams& p = {}, const GuidedDenoise& guided = {}) {
    if (initial_frame.frames != 1)
        throw ConfigError("rollout: initial state must be a single frame");
    if (n_windows < 1) throw ConfigError("rollout: need at least one window");
    const std::size_t step_frames = model_frames - 1;
    FieldSequence out = FieldSequence::zeros(initial_frame.grid, initial_frame.channels,
                                             1 + step_frames * n_windows,
                                             initial_frame.stride_hours);
    const std::size_t fs = out.frame_size();
    std::copy(initial_frame.values.begin(), initial_frame.values.end(), out.values.begin());

    FieldSequence context = initial_frame;
    for (std::size_t wnd = 0; wnd < n_windows; ++wnd) {
        const FieldSequence window = forecast(denoiser, cfg, context, model_frames, rng, p, guided);
        for (std::size_t t = 1; t < model_frames; ++t) {
            auto src = window.frame(t);
            const std::size_t dst_frame = 1 + wnd * step_frames + (t - 1);
            std::copy(src.begin(), src.end(),
                      out.values.begin() + static_cast<std::ptrdiff_t>(dst_frame * fs));
        }
        context = window.window(model_frames - 1, 1);
    }
    return out;
}

}  // namespace windkit
