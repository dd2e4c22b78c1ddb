#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "windkit/errors.hpp"
#include "windkit/field.hpp"

namespace windkit {

/// Precipitation map x -> log10(1000 x + 1); x in meters, x >= 0.
inline double precip_transform(double x) {
    if (x < 0.0)
        throw NumericError("precip_transform: negative precipitation " + std::to_string(x));
    return std::log10(1000.0 * x + 1.0);
}

inline double precip_inverse(double y) {
    return (std::pow(10.0, y) - 1.0) / 1000.0;
}

/// Per-channel mean and standard deviation over the training split, computed
/// after the per-channel transform (log for precipitation).
struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;

    void validate() const {
        if (mean.size() != stddev.size())
            throw DataError("NormStats: mean/stddev size mismatch");
        for (double s : stddev)
            if (!(s > 0.0)) throw DataError("NormStats: stddev must be positive");
    }

    nlohmann::json to_json(const std::vector<ChannelSpec>& channels) const {
        nlohmann::json arr = nlohmann::json::array();
        for (std::size_t c = 0; c < mean.size(); ++c) {
            nlohmann::json j;
            j["name"] = c < channels.size() ? channels[c].name : std::to_string(c);
            j["mean"] = mean[c];
            j["std"] = stddev[c];
            arr.push_back(std::move(j));
        }
        return arr;
    }

    static NormStats from_json(const nlohmann::json& arr) {
        NormStats s;
        for (const auto& j : arr) {
            s.mean.push_back(j.at("mean").get<double>());
            s.stddev.push_back(j.at("std").get<double>());
        }
        s.validate();
        return s;
    }
};

/// Stats over a physical-units training split; precipitation channels are
/// transformed before the moments are taken.
inline NormStats compute_norm_stats(const FieldSequence& train) {
    NormStats stats;
    const std::size_t c_count = train.n_channels(), px = train.pixels();
    stats.mean.resize(c_count);
    stats.stddev.resize(c_count);
    for (std::size_t c = 0; c < c_count; ++c) {
        const bool log_tf = train.channels[c].transform == Transform::log_precip;
        double s1 = 0.0, s2 = 0.0;
        const double n = static_cast<double>(train.frames * px);
        for (std::size_t t = 0; t < train.frames; ++t)
            for (double v : train.frame_channel(t, c)) {
                const double y = log_tf ? precip_transform(v) : v;
                s1 += y;
                s2 += y * y;
            }
        const double m = s1 / n;
        const double var = std::max(s2 / n - m * m, 0.0);
        stats.mean[c] = m;
        stats.stddev[c] = std::sqrt(var);
        if (!(stats.stddev[c] > 0.0))
            throw DataError("compute_norm_stats: channel '" + train.channels[c].name +
                            "' has zero variance");
    }
    return stats;
}

/// Physical units -> normalized: transform precipitation first, then the
/// per-channel affine map.
inline FieldSequence normalize(const FieldSequence& seq, const NormStats& stats) {
    stats.validate();
    if (stats.mean.size() != seq.n_channels())
        throw DataError("normalize: stats channel count mismatch");
    FieldSequence out = seq;
    for (std::size_t c = 0; c < seq.n_channels(); ++c) {
        const bool log_tf = seq.channels[c].transform == Transform::log_precip;
        const double m = stats.mean[c], inv_s = 1.0 / stats.stddev[c];
        for (std::size_t t = 0; t < seq.frames; ++t)
            for (double& v : out.frame_channel(t, c)) {
                const double y = log_tf ? precip_transform(v) : v;
                v = (y - m) * inv_s;
            }
    }
    return out;
}

inline FieldSequence denormalize(const FieldSequence& seq, const NormStats& stats) {
    stats.validate();
    if (stats.mean.size() != seq.n_channels())
        throw DataError("denormalize: stats channel count mismatch");
    FieldSequence out = seq;
    for (std::size_t c = 0; c < seq.n_channels(); ++c) {
        const bool log_tf = seq.channels[c].transform == Transform::log_precip;
        const double m = stats.mean[c], s = stats.stddev[c];
        for (std::size_t t = 0; t < seq.frames; ++t)
            for (double& v : out.frame_channel(t, c)) {
                const double y = m + s * v;
                v = log_tf ? precip_inverse(y) : y;
            }
    }
    return out;
}

/// Spherical coordinate embedding (sin phi, cos phi, cos phi sin lambda),
/// three static channels of size H*W each, concatenated channel-major.
inline std::vector<double> static_spatial_embeddings(const GridSpec& grid) {
    constexpr double deg = 3.14159265358979323846 / 180.0;
    const std::size_t h = grid.n_lat(), w = grid.n_lon();
    std::vector<double> out(3 * h * w);
    for (std::size_t i = 0; i < h; ++i) {
        const double sphi = std::sin(grid.lat[i] * deg);
        const double cphi = std::cos(grid.lat[i] * deg);
        for (std::size_t j = 0; j < w; ++j) {
            const double slam = std::sin(grid.lon[j] * deg);
            out[0 * h * w + i * w + j] = sphi;
            out[1 * h * w + i * w + j] = cphi;
            out[2 * h * w + i * w + j] = cphi * slam;
        }
    }
    return out;
}

/// Annual/diurnal cycle embeddings per frame: sin/cos of year progress and of
/// local time of day (UTC + longitude), four channels of size H*W per frame.
inline std::vector<double> time_embeddings(const GridSpec& grid, double start_hours_utc,
                                           double stride_hours, std::size_t frames) {
    constexpr double two_pi = 2.0 * 3.14159265358979323846;
    constexpr double hours_per_year = 365.25 * 24.0;
    const std::size_t h = grid.n_lat(), w = grid.n_lon(), px = h * w;
    std::vector<double> out(frames * 4 * px);
    for (std::size_t t = 0; t < frames; ++t) {
        const double hours = start_hours_utc + stride_hours * static_cast<double>(t);
        const double year_phase = two_pi * hours / hours_per_year;
        double* base = out.data() + t * 4 * px;
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                const double local = hours + grid.lon[j] / 15.0;  // 15 deg per hour
                const double day_phase = two_pi * local / 24.0;
                const std::size_t p = i * w + j;
                base[0 * px + p] = std::sin(year_phase);
                base[1 * px + p] = std::cos(year_phase);
                base[2 * px + p] = std::sin(day_phase);
                base[3 * px + p] = std::cos(day_phase);
            }
    }
    return out;
}

}  // namespace windkit
