#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "windkit/errors.hpp"
#include "windkit/field.hpp"
#include "windkit/grid.hpp"
#include "windkit/operators.hpp"
#include "windkit/transforms.hpp"

namespace windkit {

struct PhysicalConstants {
    double r_dry = 287.05;      // J kg^-1 K^-1
    double gravity = 9.80665;   // m s^-2
    double p_top = 0.0;         // Pa; <= 0 means "top model level of the data"

    void validate() const {
        if (!(r_dry > 0.0 && gravity > 0.0))
            throw ConfigError("PhysicalConstants: R_d and g must be positive");
    }
};

/// Specific humidity on pressure levels, ordered by increasing pressure
/// (descending altitude).
struct VerticalProfile {
    std::vector<double> pressure_pa;
    std::vector<double> q;

    void validate() const {
        if (pressure_pa.size() != q.size() || pressure_pa.empty())
            throw DataError("VerticalProfile: levels and q must be non-empty and equal-sized");
        for (std::size_t i = 1; i < pressure_pa.size(); ++i)
            if (pressure_pa[i] <= pressure_pa[i - 1])
                throw DataError("VerticalProfile: pressure levels must be strictly increasing");
        for (double v : q)
            if (!(v >= 0.0 && v < 0.1))
                throw DataError("VerticalProfile: q outside [0, 0.1)");
    }
};

/// p_sfc = mslp * exp(-phi_sfc / (R_d * t2m)), pixelwise.
inline std::vector<double> surface_pressure(std::span<const double> mslp,
                                            std::span<const double> phi_sfc,
                                            std::span<const double> t2m,
                                            const PhysicalConstants& c = {}) {
    if (mslp.size() != phi_sfc.size() || mslp.size() != t2m.size())
        throw DataError("surface_pressure: field sizes differ");
    std::vector<double> p(mslp.size());
    for (std::size_t i = 0; i < mslp.size(); ++i) {
        if (!(t2m[i] > 0.0))
            throw NumericError("surface_pressure: nonpositive temperature at pixel " +
                               std::to_string(i));
        p[i] = mslp[i] * std::exp(-phi_sfc[i] / (c.r_dry * t2m[i]));
    }
    return p;
}

namespace detail {

/// Trapezoid weights w_i such that g * TWP = sum_i w_i q_i for one column:
/// constant extrapolation from the lowest level down to p_sfc and from the
/// highest level up to p_top.
inline std::vector<double> twp_weights(std::span<const double> levels, double p_sfc,
                                       double p_top) {
    const std::size_t n = levels.size();
    std::vector<double> w(n, 0.0);
    w[0] += levels[0] - p_top;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double half = 0.5 * (levels[i + 1] - levels[i]);
        w[i] += half;
        w[i + 1] += half;
    }
    w[n - 1] += p_sfc - levels[n - 1];
    return w;
}

}  // namespace detail

/// Column total water path (kg/m^2): (1/g) * integral of q dp from p_top to
/// p_sfc, trapezoidal over the model levels with constant closure segments.
inline double total_water_path_column(const VerticalProfile& profile, double p_sfc,
                                      const PhysicalConstants& c = {}) {
    profile.validate();
    const double p_top = c.p_top > 0.0 ? c.p_top : profile.pressure_pa.front();
    if (p_top > profile.pressure_pa.front())
        throw DataError("total_water_path: p_top below the highest model level");
    if (!(p_top < p_sfc))
        throw DataError("total_water_path: p_top must be smaller than p_sfc");
    const auto w = detail::twp_weights(profile.pressure_pa, p_sfc, p_top);
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * profile.q[i];
    return acc / c.gravity;
}

/// Fieldwise TWP: one q field per level (all H*W), p_sfc per pixel.
inline std::vector<double> total_water_path(std::span<const double> levels,
                                            const std::vector<std::span<const double>>& q_fields,
                                            std::span<const double> p_sfc,
                                            const PhysicalConstants& c = {}) {
    if (levels.size() != q_fields.size() || levels.empty())
        throw DataError("total_water_path: level/q field count mismatch");
    const double p_top = c.p_top > 0.0 ? c.p_top : levels.front();
    std::vector<double> out(p_sfc.size(), 0.0);
    for (std::size_t p = 0; p < p_sfc.size(); ++p) {
        const auto w = detail::twp_weights(levels, p_sfc[p], p_top);
        double acc = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * q_fields[i][p];
        out[p] = acc / c.gravity;
    }
    return out;
}

/// m_dry = p_sfc / g - TWP, pixelwise.
inline std::vector<double> dry_air_mass_field(std::span<const double> p_sfc,
                                              std::span<const double> twp,
                                              const PhysicalConstants& c = {}) {
    if (p_sfc.size() != twp.size())
        throw DataError("dry_air_mass_field: field sizes differ");
    std::vector<double> m(p_sfc.size());
    for (std::size_t i = 0; i < p_sfc.size(); ++i) m[i] = p_sfc[i] / c.gravity - twp[i];
    return m;
}

/// Area-weighted global sum of the dry-air-mass field (the paper-style sum
/// with mean-1 weights, so the value scales with the number of cells).
inline double global_dam(std::span<const double> m_dry, std::span<const double> area) {
    if (m_dry.size() != area.size())
        throw DataError("global_dam: field/weight sizes differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < m_dry.size(); ++i) acc += area[i] * m_dry[i];
    return acc;
}

/// Channel roles needed by the DAM computation, resolved from channel specs.
struct DamChannelMap {
    std::size_t mslp = 0;
    std::size_t t2m = 0;
    std::vector<std::size_t> humidity;       // sorted by increasing pressure level
    std::vector<double> humidity_levels_pa;  // matching pressures

    static DamChannelMap resolve(const std::vector<ChannelSpec>& channels) {
        DamChannelMap map;
        bool have_mslp = false, have_t2m = false;
        std::vector<std::pair<double, std::size_t>> q;
        for (std::size_t c = 0; c < channels.size(); ++c) {
            switch (channels[c].kind) {
                case ChannelKind::pressure:
                    map.mslp = c;
                    have_mslp = true;
                    break;
                case ChannelKind::temperature:
                    map.t2m = c;
                    have_t2m = true;
                    break;
                case ChannelKind::humidity: {
                    if (!channels[c].level_hpa)
                        throw DataError("DAM: humidity channel '" + channels[c].name +
                                        "' lacks a pressure level");
                    q.emplace_back(*channels[c].level_hpa * 100.0, c);
                    break;
                }
                default:
                    break;
            }
        }
        if (!have_mslp) throw DataError("DAM: missing mean-sea-level-pressure channel");
        if (!have_t2m) throw DataError("DAM: missing 2m-temperature channel");
        if (q.empty()) throw DataError("DAM: missing specific-humidity channels");
        std::sort(q.begin(), q.end());
        for (const auto& [p, c] : q) {
            map.humidity_levels_pa.push_back(p);
            map.humidity.push_back(c);
        }
        return map;
    }
};

/// Global dry-air-mass operator: one scalar per frame. Operates on normalized
/// sequences; denormalizes internally and chain-rules the normalization into
/// jvp/vjp. Nonlinear (exponential in t2m, product terms in q * p_sfc).
inline ForwardOperator dam_operator(const FieldSequence& shape, const NormStats& stats,
                                    std::vector<double> phi_sfc,
                                    const PhysicalConstants& constants = {}) {
    constants.validate();
    stats.validate();
    if (stats.mean.size() != shape.n_channels())
        throw DataError("dam_operator: stats channel count mismatch");
    if (phi_sfc.size() != shape.pixels())
        throw DataError("dam_operator: surface geopotential size != grid pixels");
    const DamChannelMap map = DamChannelMap::resolve(shape.channels);
    const auto area = area_weights(shape.grid);
    const std::size_t t_count = shape.frames, px = shape.pixels();
    const std::size_t n_lev = map.humidity.size();

    struct Ctx {
        DamChannelMap map;
        NormStats stats;
        std::vector<double> phi;
        std::vector<double> area;
        PhysicalConstants c;
        std::size_t frames, px, n_lev;
    };
    auto ctx = std::make_shared<Ctx>(Ctx{map, stats, std::move(phi_sfc), area, constants,
                                         t_count, px, n_lev});

    // Evaluates per-frame DAM and, when grad != nullptr, the gradient with
    // respect to the normalized inputs of that frame (mslp, t2m, q channels).
    auto eval_frame = [ctx](const FieldSequence& x, std::size_t t,
                            FieldSequence* grad) -> double {
        const auto& m = ctx->map;
        const double p_top_cfg = ctx->c.p_top > 0.0 ? ctx->c.p_top : m.humidity_levels_pa.front();
        auto mslp_n = x.frame_channel(t, m.mslp);
        auto t2m_n = x.frame_channel(t, m.t2m);
        const double mu_p = ctx->stats.mean[m.mslp], sd_p = ctx->stats.stddev[m.mslp];
        const double mu_t = ctx->stats.mean[m.t2m], sd_t = ctx->stats.stddev[m.t2m];
        double f = 0.0;
        for (std::size_t p = 0; p < ctx->px; ++p) {
            const double mslp = mu_p + sd_p * mslp_n[p];
            const double t2m = mu_t + sd_t * t2m_n[p];
            if (!(t2m > 0.0))
                throw NumericError("dam_operator: nonpositive temperature after denormalization");
            const double expf = std::exp(-ctx->phi[p] / (ctx->c.r_dry * t2m));
            const double p_sfc = mslp * expf;
            const auto w = detail::twp_weights(m.humidity_levels_pa, p_sfc, p_top_cfg);
            double twp = 0.0;
            double q_low = 0.0;
            for (std::size_t l = 0; l < ctx->n_lev; ++l) {
                const double q = ctx->stats.mean[m.humidity[l]] +
                                 ctx->stats.stddev[m.humidity[l]] *
                                     x.frame_channel(t, m.humidity[l])[p];
                twp += w[l] * q;
                if (l + 1 == ctx->n_lev) q_low = q;
            }
            twp /= ctx->c.gravity;
            const double m_dry = p_sfc / ctx->c.gravity - twp;
            f += ctx->area[p] * m_dry;
            if (grad) {
                // d m_dry / d p_sfc = (1 - q_low)/g  (TWP's surface segment).
                const double dm_dpsfc = (1.0 - q_low) / ctx->c.gravity;
                const double dpsfc_dmslp = expf;
                const double dpsfc_dt2m = p_sfc * ctx->phi[p] / (ctx->c.r_dry * t2m * t2m);
                grad->frame_channel(t, m.mslp)[p] =
                    ctx->area[p] * dm_dpsfc * dpsfc_dmslp * sd_p;
                grad->frame_channel(t, m.t2m)[p] =
                    ctx->area[p] * dm_dpsfc * dpsfc_dt2m * sd_t;
                for (std::size_t l = 0; l < ctx->n_lev; ++l)
                    grad->frame_channel(t, m.humidity[l])[p] =
                        ctx->area[p] * (-w[l] / ctx->c.gravity) *
                        ctx->stats.stddev[m.humidity[l]];
            }
        }
        return f;
    };

    ForwardOperator op;
    op.out_shape.dims = {t_count};
    op.linear = false;
    op.apply = [ctx, eval_frame](const FieldSequence& x) {
        std::vector<double> y(ctx->frames);
        for (std::size_t t = 0; t < ctx->frames; ++t) y[t] = eval_frame(x, t, nullptr);
        return y;
    };
    op.jvp = [ctx, eval_frame](const FieldSequence& x, const FieldSequence& u) {
        FieldSequence grad = FieldSequence::zeros(x.grid, x.channels, x.frames, x.stride_hours);
        std::vector<double> y(ctx->frames, 0.0);
        for (std::size_t t = 0; t < ctx->frames; ++t) {
            eval_frame(x, t, &grad);
            double acc = 0.0;
            auto g = grad.frame(t);
            auto d = u.frame(t);
            for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * d[i];
            y[t] = acc;
        }
        return y;
    };
    op.vjp = [ctx, eval_frame](const FieldSequence& x, std::span<const double> v) {
        FieldSequence grad = FieldSequence::zeros(x.grid, x.channels, x.frames, x.stride_hours);
        for (std::size_t t = 0; t < ctx->frames; ++t) {
            eval_frame(x, t, &grad);
            auto g = grad.frame(t);
            for (double& gv : g) gv *= v[t];
        }
        return grad;
    };
    return op;
}

}  // namespace windkit
