#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "windkit/errors.hpp"
#include "windkit/field.hpp"
#include "windkit/grid.hpp"
#include "windkit/rng.hpp"
#include "windkit/transforms.hpp"

namespace windkit {

/// Desk-scale synthetic atmosphere configuration.
struct WorldConfig {
    std::size_t n_lat = 32;
    std::size_t n_lon = 64;
    enum class Preset { standard6, dam9 };
    Preset preset = Preset::standard6;
    double advection_speed = 1.0;    // cells per frame, scales the wind field
    double diffusivity = 0.06;       // cells^2 per frame, explicit Laplacian
    double forcing_amplitude = 1.0;  // scales relaxation + stochastic forcing
    double stride_hours = 6.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_lat < 8 || n_lon < 8)
            throw ConfigError("WorldConfig: grid dimensions must be >= 8");
        if (!(diffusivity > 0.0 && diffusivity <= 0.24))
            throw ConfigError("WorldConfig: diffusivity must lie in (0, 0.24] for stability");
        if (advection_speed < 0.0 || forcing_amplitude < 0.0)
            throw ConfigError("WorldConfig: speeds and amplitudes must be nonnegative");
        if (!(stride_hours > 0.0)) throw ConfigError("WorldConfig: stride_hours must be positive");
    }
};

inline std::vector<ChannelSpec> world_channels(WorldConfig::Preset preset) {
    std::vector<ChannelSpec> ch;
    ch.push_back({"t2m", ChannelKind::temperature, std::nullopt, Transform::none});
    ch.push_back({"u10", ChannelKind::wind_u, std::nullopt, Transform::none});
    ch.push_back({"v10", ChannelKind::wind_v, std::nullopt, Transform::none});
    if (preset == WorldConfig::Preset::standard6) {
        ch.push_back({"q850", ChannelKind::humidity, 850.0, Transform::none});
    } else {
        ch.push_back({"q300", ChannelKind::humidity, 300.0, Transform::none});
        ch.push_back({"q500", ChannelKind::humidity, 500.0, Transform::none});
        ch.push_back({"q700", ChannelKind::humidity, 700.0, Transform::none});
        ch.push_back({"q850", ChannelKind::humidity, 850.0, Transform::none});
    }
    ch.push_back({"tp6h", ChannelKind::precipitation, std::nullopt, Transform::log_precip});
    ch.push_back({"mslp", ChannelKind::pressure, std::nullopt, Transform::none});
    return ch;
}

/// Fixed smooth synthetic orography as surface geopotential (m^2/s^2),
/// deterministic in the grid alone.
inline std::vector<double> orography_geopotential(const GridSpec& grid) {
    const std::size_t h = grid.n_lat(), w = grid.n_lon();
    std::vector<double> phi(h * w, 0.0);
    struct Bump {
        double lat, lon, height_m, radius_deg;
    };
    const Bump bumps[] = {{45.0, 90.0, 420.0, 28.0},
                          {-30.0, 200.0, 560.0, 34.0},
                          {62.0, 310.0, 300.0, 22.0}};
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            double height = 0.0;
            for (const auto& b : bumps) {
                double dlon = std::abs(grid.lon[j] - b.lon);
                dlon = std::min(dlon, 360.0 - dlon);
                const double dlat = grid.lat[i] - b.lat;
                const double d2 = (dlat * dlat + dlon * dlon) / (b.radius_deg * b.radius_deg);
                height += b.height_m * std::exp(-d2);
            }
            phi[i * w + j] = 9.80665 * height;
        }
    return phi;
}

namespace detail {

/// One pass of a separable [1 2 1]/4 smoother, periodic in lon, clamped in lat.
inline void smooth_pass(std::vector<double>& f, std::size_t h, std::size_t w) {
    std::vector<double> tmp(f.size());
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const std::size_t jm = (j + w - 1) % w, jp = (j + 1) % w;
            tmp[i * w + j] = 0.25 * (f[i * w + jm] + 2.0 * f[i * w + j] + f[i * w + jp]);
        }
    for (std::size_t i = 0; i < h; ++i) {
        const std::size_t im = i == 0 ? 0 : i - 1, ip = i + 1 == h ? h - 1 : i + 1;
        for (std::size_t j = 0; j < w; ++j)
            f[i * w + j] = 0.25 * (tmp[im * w + j] + 2.0 * tmp[i * w + j] + tmp[ip * w + j]);
    }
}

inline std::vector<double> smooth_noise(std::size_t h, std::size_t w, RandomStream& rng,
                                        int passes = 3) {
    std::vector<double> f(h * w);
    for (double& v : f) v = rng.normal();
    for (int p = 0; p < passes; ++p) smooth_pass(f, h, w);
    // Renormalize to unit standard deviation so amplitudes are predictable.
    double s1 = 0.0, s2 = 0.0;
    for (double v : f) {
        s1 += v;
        s2 += v * v;
    }
    const double n = static_cast<double>(f.size());
    const double mean = s1 / n;
    const double sd = std::sqrt(std::max(s2 / n - mean * mean, 1e-30));
    for (double& v : f) v = (v - mean) / sd;
    return f;
}

/// Multi-scale random field: random phases over low-to-mid zonal/meridional
/// wavenumbers with power-law decaying amplitudes.
inline std::vector<double> multiscale_field(const GridSpec& grid, RandomStream& rng,
                                            std::size_t max_kx, std::size_t max_ky) {
    const std::size_t h = grid.n_lat(), w = grid.n_lon();
    constexpr double two_pi = 2.0 * 3.14159265358979323846;
    std::vector<double> f(h * w, 0.0);
    for (std::size_t kx = 1; kx <= max_kx; ++kx)
        for (std::size_t ky = 1; ky <= max_ky; ++ky) {
            const double k2 = static_cast<double>(kx * kx + ky * ky);
            const double amp = (0.5 + rng.uniform()) / std::pow(k2, 0.8);
            const double phx = two_pi * rng.uniform();
            const double phy = two_pi * rng.uniform();
            for (std::size_t i = 0; i < h; ++i) {
                const double y = static_cast<double>(i) / static_cast<double>(h);
                const double my = std::sin(3.14159265358979323846 * static_cast<double>(ky) * y + phy);
                for (std::size_t j = 0; j < w; ++j) {
                    const double x = static_cast<double>(j) / static_cast<double>(w);
                    f[i * w + j] += amp * std::cos(two_pi * static_cast<double>(kx) * x + phx) * my;
                }
            }
        }
    double s2 = 0.0;
    for (double v : f) s2 += v * v;
    const double sd = std::sqrt(std::max(s2 / static_cast<double>(f.size()), 1e-30));
    for (double& v : f) v /= sd;
    return f;
}

struct WindMode {
    double amp, kx, ky, omega, phase;
};

/// Smooth rotating wind field: a fixed mid-latitude jet plus slowly rotating
/// streamfunction modes. Returns (u, v) in cells per frame.
inline void wind_field(const GridSpec& grid, const std::vector<WindMode>& modes, double speed,
                       double t_frames, std::vector<double>& u, std::vector<double>& v) {
    const std::size_t h = grid.n_lat(), w = grid.n_lon();
    constexpr double two_pi = 2.0 * 3.14159265358979323846;
    constexpr double deg = 3.14159265358979323846 / 180.0;
    u.assign(h * w, 0.0);
    v.assign(h * w, 0.0);
    for (std::size_t i = 0; i < h; ++i) {
        const double lat = grid.lat[i];
        const double taper = std::cos(lat * deg);
        const double jet = 0.45 + 0.85 * std::exp(-std::pow((std::abs(lat) - 45.0) / 20.0, 2.0));
        for (std::size_t j = 0; j < w; ++j) {
            double du = jet, dv = 0.0;
            const double x = static_cast<double>(j) / static_cast<double>(w);
            const double y = static_cast<double>(i) / static_cast<double>(h);
            for (const auto& m : modes) {
                const double px = two_pi * m.kx * x + m.omega * t_frames + m.phase;
                const double py = 3.14159265358979323846 * m.ky * y;
                // u = -d(psi)/dy, v = d(psi)/dx of psi = amp cos(px) sin(py)
                du += -m.amp * m.ky * 0.5 * std::cos(px) * std::cos(py);
                dv += -m.amp * m.kx * std::sin(px) * std::sin(py);
            }
            u[i * w + j] = speed * du;
            v[i * w + j] = speed * dv * taper;
        }
    }
}

inline double bilinear_periodic(const std::vector<double>& f, std::size_t h, std::size_t w,
                                double y, double x) {
    // periodic in x, clamped in y
    x = std::fmod(x, static_cast<double>(w));
    if (x < 0.0) x += static_cast<double>(w);
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const std::size_t x0 = static_cast<std::size_t>(x) % w;
    const std::size_t x1 = (x0 + 1) % w;
    const std::size_t y0 = static_cast<std::size_t>(y);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double fx = x - std::floor(x);
    const double fy = y - static_cast<double>(y0);
    return (1.0 - fy) * ((1.0 - fx) * f[y0 * w + x0] + fx * f[y0 * w + x1]) +
           fy * ((1.0 - fx) * f[y1 * w + x0] + fx * f[y1 * w + x1]);
}

inline void advect_semi_lagrangian(std::vector<double>& f, std::size_t h, std::size_t w,
                                   const std::vector<double>& u, const std::vector<double>& v) {
    std::vector<double> out(f.size());
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const double xd = static_cast<double>(j) - u[i * w + j];
            const double yd = static_cast<double>(i) - v[i * w + j];
            out[i * w + j] = bilinear_periodic(f, h, w, yd, xd);
        }
    f = std::move(out);
}

inline void diffuse(std::vector<double>& f, std::size_t h, std::size_t w, double nu) {
    std::vector<double> out(f.size());
    for (std::size_t i = 0; i < h; ++i) {
        const std::size_t im = i == 0 ? 0 : i - 1, ip = i + 1 == h ? h - 1 : i + 1;
        for (std::size_t j = 0; j < w; ++j) {
            const std::size_t jm = (j + w - 1) % w, jp = (j + 1) % w;
            const double lap = f[im * w + j] + f[ip * w + j] + f[i * w + jm] + f[i * w + jp] -
                               4.0 * f[i * w + j];
            out[i * w + j] = f[i * w + j] + nu * lap;
        }
    }
    f = std::move(out);
}

}  // namespace detail

/// Generate a synthetic trajectory in physical units: semi-Lagrangian
/// advection of temperature and humidity by a slowly rotating smooth wind,
/// diffusion, seasonal sinusoidal forcing, a rectified precipitation channel
/// driven by moisture convergence, and a pressure channel coupled to the
/// streamfunction.
inline FieldSequence generate(const WorldConfig& cfg, std::size_t n_frames) {
    cfg.validate();
    if (n_frames < 1) throw ConfigError("generate: need at least one frame");
    const GridSpec grid = GridSpec::regular(cfg.n_lat, cfg.n_lon);
    const auto channels = world_channels(cfg.preset);
    const std::size_t h = cfg.n_lat, w = cfg.n_lon, px = h * w;
    constexpr double deg = 3.14159265358979323846 / 180.0;
    constexpr double two_pi = 2.0 * 3.14159265358979323846;

    SeedPolicy seeds{cfg.seed};
    RandomStream init_rng = seeds.stream("datagen/init");
    RandomStream force_rng = seeds.stream("datagen/forcing");

    // Humidity levels, lowest pressure first (matches world_channels order).
    const bool dam = cfg.preset == WorldConfig::Preset::dam9;
    const std::vector<double> level_ratio = dam ? std::vector<double>{0.10, 0.33, 0.62, 1.0}
                                                : std::vector<double>{1.0};
    const std::size_t n_q = level_ratio.size();
    const std::size_t ch_t2m = 0, ch_u = 1, ch_v = 2, ch_q0 = 3;
    const std::size_t ch_precip = 3 + n_q, ch_mslp = 4 + n_q;

    // Wind modes, fixed per seed.
    std::vector<detail::WindMode> modes;
    for (int m = 0; m < 5; ++m) {
        detail::WindMode md;
        md.kx = 1.0 + static_cast<double>(m % 3);
        md.ky = 1.0 + static_cast<double>(m % 2);
        md.amp = 0.35 * (0.6 + 0.8 * init_rng.uniform());
        md.omega = (init_rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.10 + 0.20 * init_rng.uniform());
        md.phase = two_pi * init_rng.uniform();
        modes.push_back(md);
    }

    // Equilibrium profiles.
    auto t_eq = [&](double lat, double t_hours) {
        const double seasonal = 7.0 * std::sin(lat * deg) *
                                std::sin(two_pi * t_hours / 8766.0 + 0.3);
        return 258.0 + 42.0 * std::cos(lat * deg) + cfg.forcing_amplitude * seasonal;
    };
    auto q_eq = [&](double t2m) {
        return std::clamp(0.011 * std::exp((t2m - 288.0) / 14.3), 1e-4, 0.035);
    };

    // State: temperature and per-level humidity.
    std::vector<double> t2m(px), q_anom(px);
    {
        const auto t_an = detail::multiscale_field(grid, init_rng, std::max<std::size_t>(8, w / 4), 5);
        const auto q_an = detail::multiscale_field(grid, init_rng, std::max<std::size_t>(8, w / 4), 5);
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                t2m[i * w + j] = t_eq(grid.lat[i], 0.0) + 3.0 * t_an[i * w + j];
                q_anom[i * w + j] = 0.0016 * q_an[i * w + j];
            }
    }
    std::vector<std::vector<double>> q(n_q, std::vector<double>(px));
    for (std::size_t l = 0; l < n_q; ++l)
        for (std::size_t p = 0; p < px; ++p)
            q[l][p] = std::max(level_ratio[l] * (q_eq(t2m[p]) + q_anom[p]), 5e-5);

    FieldSequence seq = FieldSequence::zeros(grid, channels, n_frames, cfg.stride_hours);
    std::vector<double> u, v, psi_like(px);
    std::vector<double> precip_driver(px, 0.0);
    bool driver_primed = false;

    const double relax = 0.035 * cfg.forcing_amplitude;
    const double noise_t = 0.22 * cfg.forcing_amplitude;
    // Rectified precipitation: tuned once so that >= 50% of cells are exactly
    // zero at default settings, with a heavy right tail from the 3/2 power.
    const double conv_norm = std::max(cfg.advection_speed, 1e-12) * 0.011 / 3.0;
    const double precip_threshold = 0.05;
    const double precip_scale = 0.0045;

    for (std::size_t frame = 0; frame < n_frames; ++frame) {
        const double t_hours = cfg.stride_hours * static_cast<double>(frame);
        detail::wind_field(grid, modes, cfg.advection_speed, static_cast<double>(frame), u, v);

        if (frame > 0) {
            detail::advect_semi_lagrangian(t2m, h, w, u, v);
            for (auto& ql : q) detail::advect_semi_lagrangian(ql, h, w, u, v);
            detail::diffuse(t2m, h, w, cfg.diffusivity);
            for (auto& ql : q) detail::diffuse(ql, h, w, cfg.diffusivity);

            if (cfg.forcing_amplitude > 0.0) {
                const auto nt = detail::smooth_noise(h, w, force_rng);
                const auto nq = detail::smooth_noise(h, w, force_rng);
                for (std::size_t i = 0; i < h; ++i)
                    for (std::size_t j = 0; j < w; ++j) {
                        const std::size_t p = i * w + j;
                        t2m[p] += relax * (t_eq(grid.lat[i], t_hours) - t2m[p]) + noise_t * nt[p];
                        for (std::size_t l = 0; l < n_q; ++l) {
                            const double target = level_ratio[l] * q_eq(t2m[p]);
                            q[l][p] += relax * (target - q[l][p]) +
                                       0.00022 * level_ratio[l] * nq[p];
                            q[l][p] = std::clamp(q[l][p], 5e-5, 0.045);
                        }
                    }
            }
        }

        // Streamfunction proxy for the pressure channel (unit-std shape).
        {
            for (std::size_t i = 0; i < h; ++i) {
                const double y = static_cast<double>(i) / static_cast<double>(h);
                for (std::size_t j = 0; j < w; ++j) {
                    const double x = static_cast<double>(j) / static_cast<double>(w);
                    double s = 0.0;
                    for (const auto& m : modes)
                        s += m.amp * std::cos(two_pi * m.kx * x + m.omega * static_cast<double>(frame) + m.phase) *
                             std::sin(3.14159265358979323846 * m.ky * y);
                    psi_like[i * w + j] = s;
                }
            }
            double s1 = 0.0, s2 = 0.0;
            for (double s : psi_like) {
                s1 += s;
                s2 += s * s;
            }
            const double mean = s1 / static_cast<double>(px);
            const double sd = std::sqrt(std::max(s2 / static_cast<double>(px) - mean * mean, 1e-30));
            for (double& s : psi_like) s = (s - mean) / sd;
        }

        // Moisture-flux convergence of the lowest humidity level -> precip.
        const auto& q_low = q[n_q - 1];
        std::vector<double> conv(px, 0.0);
        for (std::size_t i = 0; i < h; ++i) {
            const std::size_t im = i == 0 ? 0 : i - 1, ip = i + 1 == h ? h - 1 : i + 1;
            for (std::size_t j = 0; j < w; ++j) {
                const std::size_t jm = (j + w - 1) % w, jp = (j + 1) % w;
                const double dfx = 0.5 * (u[i * w + jp] * q_low[i * w + jp] -
                                          u[i * w + jm] * q_low[i * w + jm]);
                const double dfy = 0.5 * (v[ip * w + j] * q_low[ip * w + j] -
                                          v[im * w + j] * q_low[im * w + j]);
                conv[i * w + j] = -(dfx + dfy);
            }
        }
        for (int pass = 0; pass < 9; ++pass) detail::smooth_pass(conv, h, w);
        // AR(1) moisture storage so rain bands evolve smoothly in time
        if (!driver_primed) {
            precip_driver = conv;
            driver_primed = true;
        } else {
            for (std::size_t p = 0; p < px; ++p)
                precip_driver[p] = 0.82 * precip_driver[p] + 0.18 * conv[p];
        }

        const double seasonal_mslp = 900.0 * cfg.forcing_amplitude *
                                     std::sin(two_pi * t_hours / 8766.0 + 0.8);
        for (std::size_t p = 0; p < px; ++p) {
            seq.frame_channel(frame, ch_t2m)[p] = t2m[p];
            seq.frame_channel(frame, ch_u)[p] = u[p];
            seq.frame_channel(frame, ch_v)[p] = v[p];
            for (std::size_t l = 0; l < n_q; ++l)
                seq.frame_channel(frame, ch_q0 + l)[p] = q[l][p];
            const double c_norm = precip_driver[p] / conv_norm;
            const double r = c_norm - precip_threshold;
            seq.frame_channel(frame, ch_precip)[p] =
                r > 0.0 ? precip_scale * std::pow(r, 1.5) : 0.0;
            seq.frame_channel(frame, ch_mslp)[p] =
                101325.0 + 260.0 * psi_like[p] + seasonal_mslp;
        }
    }
    return seq;
}

/// Disjoint contiguous train/val/test time ranges: [0, t), [t, v), [v, n).
struct SplitSpec {
    std::size_t train_end = 0;
    std::size_t val_end = 0;
    std::size_t n_frames = 0;

    static SplitSpec fractions(std::size_t n_frames, double train = 0.7, double val = 0.15) {
        SplitSpec s;
        s.n_frames = n_frames;
        s.train_end = static_cast<std::size_t>(static_cast<double>(n_frames) * train);
        s.val_end = s.train_end + static_cast<std::size_t>(static_cast<double>(n_frames) * val);
        s.val_end = std::min(s.val_end, n_frames);
        if (s.train_end < 2 || s.val_end <= s.train_end || s.val_end >= n_frames)
            throw ConfigError("SplitSpec: dataset too short to split");
        return s;
    }
};

}  // namespace windkit
