#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "windkit/errors.hpp"
#include "windkit/grid.hpp"
#include "windkit/rng.hpp"

namespace windkit {

/// Spatiotemporal state: frames x channels x lat x lon, row-major, in
/// normalized units unless stated otherwise by the producer.
struct FieldSequence {
    GridSpec grid;
    std::vector<ChannelSpec> channels;
    std::size_t frames = 0;
    double stride_hours = 6.0;
    std::vector<double> values;  // frames * channels * n_lat * n_lon

    std::size_t n_channels() const { return channels.size(); }
    std::size_t n_lat() const { return grid.n_lat(); }
    std::size_t n_lon() const { return grid.n_lon(); }
    std::size_t pixels() const { return n_lat() * n_lon(); }
    std::size_t frame_size() const { return n_channels() * pixels(); }
    std::size_t size() const { return frames * frame_size(); }

    double& at(std::size_t t, std::size_t c, std::size_t h, std::size_t w) {
        return values[((t * n_channels() + c) * n_lat() + h) * n_lon() + w];
    }
    double at(std::size_t t, std::size_t c, std::size_t h, std::size_t w) const {
        return values[((t * n_channels() + c) * n_lat() + h) * n_lon() + w];
    }

    std::span<double> frame(std::size_t t) {
        return std::span<double>(values).subspan(t * frame_size(), frame_size());
    }
    std::span<const double> frame(std::size_t t) const {
        return std::span<const double>(values).subspan(t * frame_size(), frame_size());
    }
    std::span<double> frame_channel(std::size_t t, std::size_t c) {
        return std::span<double>(values).subspan((t * n_channels() + c) * pixels(), pixels());
    }
    std::span<const double> frame_channel(std::size_t t, std::size_t c) const {
        return std::span<const double>(values).subspan((t * n_channels() + c) * pixels(), pixels());
    }

    static FieldSequence zeros(GridSpec grid, std::vector<ChannelSpec> channels,
                               std::size_t frames, double stride_hours = 6.0) {
        FieldSequence s;
        s.grid = std::move(grid);
        s.channels = std::move(channels);
        s.frames = frames;
        s.stride_hours = stride_hours;
        s.values.assign(s.size(), 0.0);
        return s;
    }

    /// Same grid, channels and frame count (metadata equality, not values).
    bool same_shape(const FieldSequence& o) const {
        return frames == o.frames && channels == o.channels && grid == o.grid;
    }

    void validate() const {
        grid.validate();
        for (const auto& c : channels) c.validate();
        if (stride_hours <= 0.0)
            throw DataError("FieldSequence: stride_hours must be positive");
        if (values.size() != size())
            throw DataError("FieldSequence: values size " + std::to_string(values.size()) +
                            " does not match shape " + std::to_string(frames) + "x" +
                            std::to_string(n_channels()) + "x" + std::to_string(n_lat()) + "x" +
                            std::to_string(n_lon()));
        for (double v : values)
            if (!std::isfinite(v)) throw DataError("FieldSequence: non-finite value");
    }

    /// Windowed view copy: frames [start, start+count).
    FieldSequence window(std::size_t start, std::size_t count) const {
        if (start + count > frames)
            throw DataError("FieldSequence::window out of range");
        FieldSequence s = zeros(grid, channels, count, stride_hours);
        std::copy(values.begin() + static_cast<std::ptrdiff_t>(start * frame_size()),
                  values.begin() + static_cast<std::ptrdiff_t>((start + count) * frame_size()),
                  s.values.begin());
        return s;
    }
};

/// Fill all frames with i.i.d. standard normal draws from the stream.
inline FieldSequence gaussian_like(const FieldSequence& shape, RandomStream& rng) {
    FieldSequence s = FieldSequence::zeros(shape.grid, shape.channels, shape.frames, shape.stride_hours);
    for (double& v : s.values) v = rng.normal();
    return s;
}

/// Per-frame diffusion times k^t in [0, 1].
struct NoiseLevels {
    std::vector<double> k;

    static NoiseLevels shared(std::size_t frames, double level) {
        NoiseLevels n;
        n.k.assign(frames, level);
        return n;
    }

    void validate() const {
        for (double v : k)
            if (!(v >= 0.0 && v <= 1.0))
                throw NumericError("NoiseLevels: k outside [0, 1]");
    }
};

/// Ensemble of forecasts sharing grid, channels and frame count.
struct EnsembleSet {
    std::vector<FieldSequence> members;

    std::size_t size() const { return members.size(); }

    void validate() const {
        if (members.size() < 2)
            throw DataError("EnsembleSet: probabilistic metrics need at least 2 members");
        for (std::size_t m = 1; m < members.size(); ++m)
            if (!members[m].same_shape(members[0]))
                throw DataError("EnsembleSet: member " + std::to_string(m) +
                                " does not match member 0 shape");
    }

    FieldSequence mean() const {
        FieldSequence out = FieldSequence::zeros(members[0].grid, members[0].channels,
                                                 members[0].frames, members[0].stride_hours);
        for (const auto& m : members)
            for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += m.values[i];
        const double inv = 1.0 / static_cast<double>(members.size());
        for (double& v : out.values) v *= inv;
        return out;
    }
};

}  // namespace windkit
