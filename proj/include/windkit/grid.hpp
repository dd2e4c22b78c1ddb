#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "windkit/errors.hpp"

namespace windkit {

/// Regular latitude-longitude grid. Latitude per row (strictly monotone,
/// poles allowed), longitude per column (periodic, uniform spacing).
struct GridSpec {
    std::vector<double> lat;
    std::vector<double> lon;

    std::size_t n_lat() const { return lat.size(); }
    std::size_t n_lon() const { return lon.size(); }

    /// Cell-centered regular grid covering the sphere, no pole rows.
    static GridSpec regular(std::size_t n_lat, std::size_t n_lon) {
        GridSpec g;
        g.lat.resize(n_lat);
        g.lon.resize(n_lon);
        const double dlat = 180.0 / static_cast<double>(n_lat);
        const double dlon = 360.0 / static_cast<double>(n_lon);
        for (std::size_t i = 0; i < n_lat; ++i)
            g.lat[i] = -90.0 + dlat * (static_cast<double>(i) + 0.5);
        for (std::size_t j = 0; j < n_lon; ++j)
            g.lon[j] = dlon * static_cast<double>(j);
        return g;
    }

    void validate() const {
        if (lat.size() < 2 || lon.size() < 2)
            throw DataError("GridSpec: grid must be at least 2x2, got " +
                            std::to_string(lat.size()) + "x" + std::to_string(lon.size()));
        const bool increasing = lat[1] > lat[0];
        for (std::size_t i = 1; i < lat.size(); ++i) {
            if ((increasing && lat[i] <= lat[i - 1]) || (!increasing && lat[i] >= lat[i - 1]))
                throw DataError("GridSpec: lat must be strictly monotone (row " +
                                std::to_string(i) + ")");
        }
        const double dlon = lon[1] - lon[0];
        for (std::size_t j = 1; j < lon.size(); ++j) {
            if (std::abs((lon[j] - lon[j - 1]) - dlon) > 1e-9 * std::max(1.0, std::abs(dlon)))
                throw DataError("GridSpec: lon spacing must be uniform (column " +
                                std::to_string(j) + ")");
        }
    }

    bool operator==(const GridSpec&) const = default;
};

enum class ChannelKind {
    temperature,
    humidity,
    wind_u,
    wind_v,
    pressure,
    precipitation,
    geopotential,
    generic,
};

enum class Transform { none, log_precip };

inline std::string to_string(ChannelKind k) {
    switch (k) {
        case ChannelKind::temperature: return "temperature";
        case ChannelKind::humidity: return "humidity";
        case ChannelKind::wind_u: return "wind_u";
        case ChannelKind::wind_v: return "wind_v";
        case ChannelKind::pressure: return "pressure";
        case ChannelKind::precipitation: return "precipitation";
        case ChannelKind::geopotential: return "geopotential";
        case ChannelKind::generic: return "generic";
    }
    return "generic";
}

inline ChannelKind channel_kind_from_string(const std::string& s) {
    if (s == "temperature") return ChannelKind::temperature;
    if (s == "humidity") return ChannelKind::humidity;
    if (s == "wind_u") return ChannelKind::wind_u;
    if (s == "wind_v") return ChannelKind::wind_v;
    if (s == "pressure") return ChannelKind::pressure;
    if (s == "precipitation") return ChannelKind::precipitation;
    if (s == "geopotential") return ChannelKind::geopotential;
    if (s == "generic") return ChannelKind::generic;
    throw DataError("unknown channel kind '" + s + "'");
}

inline std::string to_string(Transform t) {
    return t == Transform::log_precip ? "log_precip" : "none";
}

inline Transform transform_from_string(const std::string& s) {
    if (s == "none") return Transform::none;
    if (s == "log_precip") return Transform::log_precip;
    throw DataError("unknown transform '" + s + "'");
}

/// Identity of one variable: name, physical kind, optional pressure level,
/// and the per-channel data transform.
struct ChannelSpec {
    std::string name;
    ChannelKind kind = ChannelKind::generic;
    std::optional<double> level_hpa;
    Transform transform = Transform::none;

    void validate() const {
        if (kind == ChannelKind::precipitation && transform != Transform::log_precip)
            throw DataError("channel '" + name + "': precipitation channels carry transform=log_precip");
        if (kind != ChannelKind::precipitation && transform == Transform::log_precip)
            throw DataError("channel '" + name + "': log_precip transform on non-precipitation channel");
    }

    bool operator==(const ChannelSpec&) const = default;
};

/// cos(latitude) area proxy, clamped >= 0 at the poles, rescaled so the mean
/// over all H*W cells is exactly 1. Returned row-major H*W.
inline std::vector<double> area_weights(const GridSpec& grid) {
    grid.validate();
    const std::size_t h = grid.n_lat(), w = grid.n_lon();
    constexpr double deg = 3.14159265358979323846 / 180.0;
    std::vector<double> row(h);
    double sum = 0.0;
    for (std::size_t i = 0; i < h; ++i) {
        row[i] = std::max(std::cos(grid.lat[i] * deg), 0.0);
        sum += row[i];
    }
    if (sum <= 0.0)
        throw NumericError("area_weights: all rows have zero area");
    const double scale = static_cast<double>(h) / sum;
    std::vector<double> out(h * w);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = row[i] * scale;
    return out;
}

}  // namespace windkit
