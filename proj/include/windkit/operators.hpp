#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "windkit/errors.hpp"
#include "windkit/field.hpp"

namespace windkit {

struct OutShape {
    std::vector<std::size_t> dims;

    std::size_t size() const {
        return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                               [](std::size_t a, std::size_t b) { return a * b; });
    }
};

/// Task-defining forward map A with matrix-free derivative access. For linear
/// operators jvp(x, u) == apply(u) and vjp is the adjoint.
struct ForwardOperator {
    std::function<std::vector<double>(const FieldSequence&)> apply;
    std::function<std::vector<double>(const FieldSequence&, const FieldSequence&)> jvp;
    std::function<FieldSequence(const FieldSequence&, std::span<const double>)> vjp;
    OutShape out_shape;
    bool linear = true;
    double delta_sq_default = 0.0015;
};

/// Non-overlapping s x s block means per frame and channel. Requires s to
/// divide both grid dimensions; remainders are rejected, not padded.
inline ForwardOperator avgpool_spatial(std::size_t s, const FieldSequence& shape) {
    if (s < 1) throw ConfigError("avgpool_spatial: factor must be >= 1");
    const std::size_t h = shape.n_lat(), w = shape.n_lon();
    if (h % s != 0 || w % s != 0)
        throw ConfigError("avgpool_spatial: factor " + std::to_string(s) +
                          " does not divide grid " + std::to_string(h) + "x" + std::to_string(w));
    const std::size_t t_count = shape.frames, c_count = shape.n_channels();
    const std::size_t hc = h / s, wc = w / s;

    ForwardOperator op;
    op.out_shape.dims = {t_count, c_count, hc, wc};
    op.linear = true;
    const double inv_block = 1.0 / static_cast<double>(s * s);

    op.apply = [=](const FieldSequence& x) {
        std::vector<double> y(t_count * c_count * hc * wc, 0.0);
        std::size_t o = 0;
        for (std::size_t t = 0; t < t_count; ++t)
            for (std::size_t c = 0; c < c_count; ++c) {
                auto f = x.frame_channel(t, c);
                for (std::size_t i = 0; i < hc; ++i)
                    for (std::size_t j = 0; j < wc; ++j) {
                        double acc = 0.0;
                        for (std::size_t a = 0; a < s; ++a)
                            for (std::size_t b = 0; b < s; ++b)
                                acc += f[(i * s + a) * w + (j * s + b)];
                        y[o++] = acc * inv_block;
                    }
            }
        return y;
    };
    op.jvp = [apply = op.apply](const FieldSequence&, const FieldSequence& u) {
        return apply(u);
    };
    op.vjp = [=](const FieldSequence& x, std::span<const double> v) {
        FieldSequence u = FieldSequence::zeros(x.grid, x.channels, x.frames, x.stride_hours);
        std::size_t o = 0;
        for (std::size_t t = 0; t < t_count; ++t)
            for (std::size_t c = 0; c < c_count; ++c) {
                auto f = u.frame_channel(t, c);
                for (std::size_t i = 0; i < hc; ++i)
                    for (std::size_t j = 0; j < wc; ++j) {
                        const double spread = v[o++] * inv_block;
                        for (std::size_t a = 0; a < s; ++a)
                            for (std::size_t b = 0; b < s; ++b)
                                f[(i * s + a) * w + (j * s + b)] += spread;
                    }
            }
        return u;
    };
    return op;
}

/// Mean over the first t_agg frames per channel and pixel; later frames are
/// unconstrained.
inline ForwardOperator temporal_mean(std::size_t t_agg, const FieldSequence& shape) {
    if (t_agg < 1 || t_agg > shape.frames)
        throw ConfigError("temporal_mean: aggregation window " + std::to_string(t_agg) +
                          " exceeds sequence length " + std::to_string(shape.frames));
    const std::size_t fs = shape.frame_size();
    const double inv = 1.0 / static_cast<double>(t_agg);

    ForwardOperator op;
    op.out_shape.dims = {1, shape.n_channels(), shape.n_lat(), shape.n_lon()};
    op.linear = true;
    op.apply = [=](const FieldSequence& x) {
        std::vector<double> y(fs, 0.0);
        for (std::size_t t = 0; t < t_agg; ++t) {
            auto f = x.frame(t);
            for (std::size_t i = 0; i < fs; ++i) y[i] += f[i];
        }
        for (double& v : y) v *= inv;
        return y;
    };
    op.jvp = [apply = op.apply](const FieldSequence&, const FieldSequence& u) {
        return apply(u);
    };
    op.vjp = [=](const FieldSequence& x, std::span<const double> v) {
        FieldSequence u = FieldSequence::zeros(x.grid, x.channels, x.frames, x.stride_hours);
        for (std::size_t t = 0; t < t_agg; ++t) {
            auto f = u.frame(t);
            for (std::size_t i = 0; i < fs; ++i) f[i] += v[i] * inv;
        }
        return u;
    };
    return op;
}

/// Binary observation mask. One H*W bitmap shared by all channels and frames,
/// or per-frame bitmaps (frames x H*W) for moving sensor tracks.
struct MaskSpec {
    std::size_t n_lat = 0, n_lon = 0;
    std::vector<std::uint8_t> m;  // pixels, or frames*pixels when per_frame
    bool per_frame = false;

    std::size_t pixels() const { return n_lat * n_lon; }

    void validate(std::size_t frames) const {
        const std::size_t expected = per_frame ? frames * pixels() : pixels();
        if (m.size() != expected)
            throw DataError("MaskSpec: mask size " + std::to_string(m.size()) +
                            " != expected " + std::to_string(expected));
        for (auto v : m)
            if (v > 1) throw DataError("MaskSpec: mask entries must be 0 or 1");
    }

    std::span<const std::uint8_t> frame_mask(std::size_t t) const {
        const std::size_t px = pixels();
        return std::span<const std::uint8_t>(m).subspan(per_frame ? t * px : 0, px);
    }
};

/// Random Bernoulli(density) mask.
inline MaskSpec random_mask(std::size_t n_lat, std::size_t n_lon, double density,
                            RandomStream& rng) {
    if (!(density > 0.0 && density <= 1.0))
        throw ConfigError("random_mask: density must lie in (0, 1]");
    MaskSpec spec;
    spec.n_lat = n_lat;
    spec.n_lon = n_lon;
    spec.m.resize(n_lat * n_lon);
    for (auto& v : spec.m) v = rng.uniform() < density ? 1 : 0;
    return spec;
}

/// Keep only masked entries, compactly gathered per frame and channel.
inline ForwardOperator sparse_mask(MaskSpec mask, const FieldSequence& shape) {
    mask.validate(shape.frames);
    if (mask.n_lat != shape.n_lat() || mask.n_lon != shape.n_lon())
        throw DataError("sparse_mask: mask grid does not match sequence grid");

    // Gather indices per (frame) mask.
    const std::size_t t_count = shape.frames, c_count = shape.n_channels();
    std::vector<std::vector<std::size_t>> idx(mask.per_frame ? t_count : 1);
    for (std::size_t t = 0; t < idx.size(); ++t) {
        auto fm = mask.frame_mask(t);
        for (std::size_t p = 0; p < fm.size(); ++p)
            if (fm[p]) idx[t].push_back(p);
    }
    std::size_t total = 0;
    for (const auto& v : idx) total += v.size();
    if (total == 0) throw DataError("sparse_mask: no observations (empty mask)");

    std::size_t out_size = 0;
    for (std::size_t t = 0; t < t_count; ++t)
        out_size += c_count * idx[mask.per_frame ? t : 0].size();

    ForwardOperator op;
    op.out_shape.dims = {out_size};
    op.linear = true;
    auto shared_idx = std::make_shared<std::vector<std::vector<std::size_t>>>(std::move(idx));
    const bool per_frame = mask.per_frame;

    op.apply = [=](const FieldSequence& x) {
        std::vector<double> y;
        y.reserve(out_size);
        for (std::size_t t = 0; t < t_count; ++t) {
            const auto& px = (*shared_idx)[per_frame ? t : 0];
            for (std::size_t c = 0; c < c_count; ++c) {
                auto f = x.frame_channel(t, c);
                for (std::size_t p : px) y.push_back(f[p]);
            }
        }
        return y;
    };
    op.jvp = [apply = op.apply](const FieldSequence&, const FieldSequence& u) {
        return apply(u);
    };
    op.vjp = [=](const FieldSequence& x, std::span<const double> v) {
        FieldSequence u = FieldSequence::zeros(x.grid, x.channels, x.frames, x.stride_hours);
        std::size_t o = 0;
        for (std::size_t t = 0; t < t_count; ++t) {
            const auto& px = (*shared_idx)[per_frame ? t : 0];
            for (std::size_t c = 0; c < c_count; ++c) {
                auto f = u.frame_channel(t, c);
                for (std::size_t p : px) f[p] += v[o++];
            }
        }
        return u;
    };
    return op;
}

/// Unweighted spatial mean of the selected channels, per frame when
/// per_frame is set, otherwise averaged over the whole sequence.
inline ForwardOperator channel_spatial_mean(std::vector<std::size_t> channel_idx,
                                            bool per_frame, const FieldSequence& shape) {
    if (channel_idx.empty())
        throw ConfigError("channel_spatial_mean: empty channel set");
    for (std::size_t c : channel_idx)
        if (c >= shape.n_channels())
            throw ConfigError("channel_spatial_mean: channel index " + std::to_string(c) +
                              " out of range");
    const std::size_t t_count = shape.frames, px = shape.pixels();
    const std::size_t n_sel = channel_idx.size();
    const double inv_px = 1.0 / static_cast<double>(px);
    const double inv_t = 1.0 / static_cast<double>(t_count);

    ForwardOperator op;
    op.out_shape.dims = per_frame ? std::vector<std::size_t>{t_count, n_sel}
                                  : std::vector<std::size_t>{n_sel};
    op.linear = true;
    auto idx = std::make_shared<std::vector<std::size_t>>(std::move(channel_idx));

    op.apply = [=](const FieldSequence& x) {
        std::vector<double> y(per_frame ? t_count * n_sel : n_sel, 0.0);
        for (std::size_t t = 0; t < t_count; ++t)
            for (std::size_t s = 0; s < n_sel; ++s) {
                auto f = x.frame_channel(t, (*idx)[s]);
                double acc = 0.0;
                for (double v : f) acc += v;
                if (per_frame)
                    y[t * n_sel + s] = acc * inv_px;
                else
                    y[s] += acc * inv_px * inv_t;
            }
        return y;
    };
    op.jvp = [apply = op.apply](const FieldSequence&, const FieldSequence& u) {
        return apply(u);
    };
    op.vjp = [=](const FieldSequence& x, std::span<const double> v) {
        FieldSequence u = FieldSequence::zeros(x.grid, x.channels, x.frames, x.stride_hours);
        for (std::size_t t = 0; t < t_count; ++t)
            for (std::size_t s = 0; s < n_sel; ++s) {
                const double g = (per_frame ? v[t * n_sel + s] : v[s] * inv_t) * inv_px;
                auto f = u.frame_channel(t, (*idx)[s]);
                for (double& w : f) w += g;
            }
        return u;
    };
    return op;
}

/// Concatenate operators, each output block pre-scaled by its residual
/// weight. jvp/vjp concatenate and sum correspondingly.
inline ForwardOperator stack(std::vector<ForwardOperator> ops, std::vector<double> weights) {
    if (ops.empty()) throw ConfigError("stack: no operators");
    if (weights.empty()) weights.assign(ops.size(), 1.0);
    if (weights.size() != ops.size())
        throw ConfigError("stack: weight count != operator count");

    std::size_t total = 0;
    bool linear = true;
    for (const auto& o : ops) {
        total += o.out_shape.size();
        linear = linear && o.linear;
    }

    ForwardOperator op;
    op.out_shape.dims = {total};
    op.linear = linear;
    auto parts = std::make_shared<std::vector<ForwardOperator>>(std::move(ops));
    auto w = std::make_shared<std::vector<double>>(std::move(weights));

    op.apply = [=](const FieldSequence& x) {
        std::vector<double> y;
        y.reserve(total);
        for (std::size_t i = 0; i < parts->size(); ++i) {
            auto part = (*parts)[i].apply(x);
            for (double v : part) y.push_back(v * (*w)[i]);
        }
        return y;
    };
    op.jvp = [=](const FieldSequence& x, const FieldSequence& u) {
        std::vector<double> y;
        y.reserve(total);
        for (std::size_t i = 0; i < parts->size(); ++i) {
            auto part = (*parts)[i].jvp(x, u);
            for (double v : part) y.push_back(v * (*w)[i]);
        }
        return y;
    };
    op.vjp = [=](const FieldSequence& x, std::span<const double> v) {
        FieldSequence acc = FieldSequence::zeros(x.grid, x.channels, x.frames, x.stride_hours);
        std::size_t off = 0;
        for (std::size_t i = 0; i < parts->size(); ++i) {
            const std::size_t n = (*parts)[i].out_shape.size();
            std::vector<double> scaled(v.begin() + static_cast<std::ptrdiff_t>(off),
                                       v.begin() + static_cast<std::ptrdiff_t>(off + n));
            for (double& s : scaled) s *= (*w)[i];
            FieldSequence part = (*parts)[i].vjp(x, scaled);
            for (std::size_t j = 0; j < acc.values.size(); ++j) acc.values[j] += part.values[j];
            off += n;
        }
        return acc;
    };
    return op;
}

}  // namespace windkit
