#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "windkit/denoiser.hpp"
#include "windkit/errors.hpp"
#include "windkit/field.hpp"
#include "windkit/rng.hpp"
#include "windkit/transforms.hpp"

namespace windkit {

struct ConvNetConfig {
    std::size_t frames = 5;
    std::size_t channels = 6;
    std::size_t n_lat = 32;
    std::size_t n_lon = 64;
    std::size_t width = 32;
    std::size_t stages = 3;
    bool append_noise_channels = false;  // ablation: feed k^t as extra planes
    std::uint64_t init_seed = 0;

    void validate() const {
        if (frames < 1 || channels < 1 || n_lat < 4 || n_lon < 4)
            throw ConfigError("ConvNetConfig: degenerate input dimensions");
        if (width < 4 || width > 64)
            throw ConfigError("ConvNetConfig: width must lie in [4, 64]");
        if (stages < 1 || stages > 5)
            throw ConfigError("ConvNetConfig: stages must lie in [1, 5]");
    }

    std::size_t data_planes() const { return frames * channels; }
    std::size_t input_planes() const {
        return data_planes() + 3 + (append_noise_channels ? frames : 0);
    }
};

namespace convdet {

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

inline double silu_deriv(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

/// Copy one H*W plane into an (H+2)*(W+2) buffer with periodic longitude and
/// reflect-101 latitude halos.
inline void pad_plane(const double* in, double* out, std::size_t h, std::size_t w) {
    const std::size_t wp = w + 2;
    auto src_row = [&](std::ptrdiff_t i) -> const double* {
        if (i < 0) i = 1;
        if (i >= static_cast<std::ptrdiff_t>(h)) i = static_cast<std::ptrdiff_t>(h) - 2;
        return in + static_cast<std::size_t>(i) * w;
    };
    for (std::ptrdiff_t i = -1; i <= static_cast<std::ptrdiff_t>(h); ++i) {
        const double* row = src_row(i);
        double* dst = out + static_cast<std::size_t>(i + 1) * wp;
        dst[0] = row[w - 1];
        for (std::size_t j = 0; j < w; ++j) dst[1 + j] = row[j];
        dst[w + 1] = row[0];
    }
}

/// Fold an (H+2)*(W+2) gradient buffer back onto the H*W plane, accumulating
/// halo contributions where the padding read from (exact conv adjoint).
inline void unpad_accumulate(const double* gpad, double* gout, std::size_t h, std::size_t w) {
    const std::size_t wp = w + 2;
    std::vector<double> rowbuf(w);
    auto fold_row = [&](std::size_t padded_i, double* dst) {
        const double* src = gpad + padded_i * wp;
        for (std::size_t j = 0; j < w; ++j) rowbuf[j] = src[1 + j];
        rowbuf[w - 1] += src[0];
        rowbuf[0] += src[w + 1];
        for (std::size_t j = 0; j < w; ++j) dst[j] += rowbuf[j];
    };
    for (std::size_t i = 0; i < h; ++i) fold_row(i + 1, gout + i * w);
    // reflect-101: padded row -1 read from row 1, padded row h from row h-2
    fold_row(0, gout + 1 * w);
    fold_row(h + 1, gout + (h - 2) * w);
}

}  // namespace convdet

/// Small residual convolutional clean-state predictor. Input is the noised
/// sequence with time folded into channels, concatenated with the static
/// coordinate embeddings; output adds a shallow 3x3 linear bypass and the
/// deep residual trunk onto the skip path Z. Head and bypass are
/// zero-initialized so the untrained map is the identity. Periodic padding in
/// longitude, reflect in latitude. The noise levels are ignored unless
/// append_noise_channels is set.
class ConvDenoiser final : public Denoiser {
public:
    struct Layer {
        std::size_t c_in = 0, c_out = 0;
        std::size_t w_off = 0, b_off = 0;  // offsets into the flat parameter vector
        std::size_t w_count() const { return c_out * c_in * 9; }
    };

    struct Tape {
        std::vector<double> input;      // input_planes * H*W
        std::vector<double> stage_in;   // (stages+1) * width * H*W; last = final x
        std::vector<double> a_pre;      // stages * width * H*W
        NoiseLevels k;
    };

    ConvDenoiser(ConvNetConfig cfg, GridSpec grid)
        : cfg_(cfg), grid_(std::move(grid)), embeddings_(static_spatial_embeddings(grid_)) {
        cfg_.validate();
        if (grid_.n_lat() != cfg_.n_lat || grid_.n_lon() != cfg_.n_lon)
            throw ConfigError("ConvDenoiser: grid does not match config dimensions");
        build_layers();
        init_params();
    }

    const ConvNetConfig& config() const { return cfg_; }
    const GridSpec& grid() const { return grid_; }
    const std::vector<Layer>& layers() const { return layers_; }

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    std::size_t n_params() const { return params_.size(); }

    FieldSequence denoise(const FieldSequence& z, const NoiseLevels& k) const override {
        return forward(z, k, nullptr);
    }

    std::unique_ptr<DenoiserLinearization> linearize(const FieldSequence& z,
                                                     const NoiseLevels& k) const override;

    /// Forward pass; fills the tape when given so backward/jvp can reuse the
    /// activations.
    FieldSequence forward(const FieldSequence& z, const NoiseLevels& k, Tape* tape) const {
        check_shape(z, k);
        const std::size_t px = pixels(), wd = cfg_.width;
        std::vector<double> input = assemble_input(z, k);
        std::vector<double> x(wd * px), buf(wd * px);

        conv_forward(layers_[0], input.data(), x.data());
        Tape local;
        Tape& tp = tape ? *tape : local;
        if (tape) {
            tp.input = input;
            tp.stage_in.resize((cfg_.stages + 1) * wd * px);
            tp.a_pre.resize(cfg_.stages * wd * px);
            tp.k = k;
        }

        std::vector<double> act(wd * px);
        for (std::size_t s = 0; s < cfg_.stages; ++s) {
            if (tape) std::copy(x.begin(), x.end(), tp.stage_in.begin() + static_cast<std::ptrdiff_t>(s * wd * px));
            for (std::size_t i = 0; i < act.size(); ++i) act[i] = convdet::silu(x[i]);
            conv_forward(layers_[1 + 2 * s], act.data(), buf.data());
            if (tape) std::copy(buf.begin(), buf.end(), tp.a_pre.begin() + static_cast<std::ptrdiff_t>(s * wd * px));
            for (std::size_t i = 0; i < act.size(); ++i) act[i] = convdet::silu(buf[i]);
            conv_forward(layers_[2 + 2 * s], act.data(), buf.data());
            for (std::size_t i = 0; i < x.size(); ++i) x[i] += buf[i];
        }
        if (tape)
            std::copy(x.begin(), x.end(),
                      tp.stage_in.begin() + static_cast<std::ptrdiff_t>(cfg_.stages * wd * px));

        for (std::size_t i = 0; i < act.size(); ++i) act[i] = convdet::silu(x[i]);
        std::vector<double> head_out(cfg_.data_planes() * px);
        conv_forward(head_layer(), act.data(), head_out.data());
        std::vector<double> bypass_out(cfg_.data_planes() * px);
        conv_forward(bypass_layer(), input.data(), bypass_out.data());

        FieldSequence xhat = z;
        for (std::size_t i = 0; i < head_out.size(); ++i)
            xhat.values[i] += head_out[i] + bypass_out[i];
        return xhat;
    }

    /// Parameter gradients (accumulated into grad_params) and, optionally,
    /// the gradient with respect to the noised input z.
    void backward(const Tape& tape, const FieldSequence& dxhat, std::span<double> grad_params,
                  FieldSequence* dz) const {
        if (grad_params.size() != params_.size())
            throw ConfigError("ConvDenoiser::backward: gradient buffer size mismatch");
        const std::size_t px = pixels(), wd = cfg_.width;
        const std::size_t data = cfg_.data_planes() * px;

        // xhat = z + bypass(input) + head(silu(x_final))
        std::vector<double> g_input(cfg_.input_planes() * px, 0.0);
        conv_backward(bypass_layer(), tape.input.data(), dxhat.values.data(), grad_params,
                      g_input.data());

        std::vector<double> act(wd * px), g_x(wd * px, 0.0), g_buf(wd * px);
        const double* x_final = tape.stage_in.data() + cfg_.stages * wd * px;
        for (std::size_t i = 0; i < wd * px; ++i) act[i] = convdet::silu(x_final[i]);
        conv_backward(head_layer(), act.data(), dxhat.values.data(), grad_params, g_x.data());
        for (std::size_t i = 0; i < wd * px; ++i) g_x[i] *= convdet::silu_deriv(x_final[i]);

        std::vector<double> g_mid(wd * px);
        for (std::size_t s = cfg_.stages; s-- > 0;) {
            const double* sin_ = tape.stage_in.data() + s * wd * px;
            const double* apre = tape.a_pre.data() + s * wd * px;
            // conv_b input = silu(a_pre)
            for (std::size_t i = 0; i < wd * px; ++i) act[i] = convdet::silu(apre[i]);
            std::fill(g_buf.begin(), g_buf.end(), 0.0);
            conv_backward(layers_[2 + 2 * s], act.data(), g_x.data(), grad_params, g_buf.data());
            for (std::size_t i = 0; i < wd * px; ++i)
                g_mid[i] = g_buf[i] * convdet::silu_deriv(apre[i]);
            // conv_a input = silu(stage_in)
            for (std::size_t i = 0; i < wd * px; ++i) act[i] = convdet::silu(sin_[i]);
            std::fill(g_buf.begin(), g_buf.end(), 0.0);
            conv_backward(layers_[1 + 2 * s], act.data(), g_mid.data(), grad_params, g_buf.data());
            for (std::size_t i = 0; i < wd * px; ++i)
                g_x[i] += g_buf[i] * convdet::silu_deriv(sin_[i]);
        }

        conv_backward(layers_[0], tape.input.data(), g_x.data(), grad_params, g_input.data());

        if (dz) {
            *dz = FieldSequence::zeros(grid_, dxhat.channels, cfg_.frames, dxhat.stride_hours);
            for (std::size_t i = 0; i < data; ++i)
                dz->values[i] = dxhat.values[i] + g_input[i];  // skip path + network paths
        }
    }

    /// Exact forward-mode directional derivative using a recorded tape.
    FieldSequence jvp_with_tape(const Tape& tape, const FieldSequence& u) const {
        const std::size_t px = pixels(), wd = cfg_.width;
        const std::size_t data = cfg_.data_planes() * px;
        if (u.values.size() != data)
            throw DataError("ConvDenoiser::jvp: direction shape mismatch");

        std::vector<double> t_input(cfg_.input_planes() * px, 0.0);
        std::copy(u.values.begin(), u.values.end(), t_input.begin());
        // embedding and noise planes carry zero tangent

        std::vector<double> tx(wd * px), tbuf(wd * px), tact(wd * px);
        conv_tangent(layers_[0], t_input.data(), tx.data());
        for (std::size_t s = 0; s < cfg_.stages; ++s) {
            const double* sin_ = tape.stage_in.data() + s * wd * px;
            const double* apre = tape.a_pre.data() + s * wd * px;
            for (std::size_t i = 0; i < wd * px; ++i)
                tact[i] = tx[i] * convdet::silu_deriv(sin_[i]);
            conv_tangent(layers_[1 + 2 * s], tact.data(), tbuf.data());
            for (std::size_t i = 0; i < wd * px; ++i)
                tact[i] = tbuf[i] * convdet::silu_deriv(apre[i]);
            conv_tangent(layers_[2 + 2 * s], tact.data(), tbuf.data());
            for (std::size_t i = 0; i < wd * px; ++i) tx[i] += tbuf[i];
        }
        const double* x_final = tape.stage_in.data() + cfg_.stages * wd * px;
        for (std::size_t i = 0; i < wd * px; ++i)
            tact[i] = tx[i] * convdet::silu_deriv(x_final[i]);
        std::vector<double> t_out(data);
        conv_tangent(head_layer(), tact.data(), t_out.data());
        std::vector<double> t_bypass(data);
        conv_tangent(bypass_layer(), t_input.data(), t_bypass.data());

        FieldSequence out = FieldSequence::zeros(grid_, u.channels, cfg_.frames, u.stride_hours);
        for (std::size_t i = 0; i < data; ++i)
            out.values[i] = u.values[i] + t_out[i] + t_bypass[i];
        return out;
    }

    /// Reverse-mode input gradient using a recorded tape (no parameter grads).
    FieldSequence vjp_with_tape(const Tape& tape, const FieldSequence& v) const {
        std::vector<double> scratch(params_.size(), 0.0);
        FieldSequence dz;
        backward(tape, v, scratch, &dz);
        return dz;
    }

private:
    std::size_t pixels() const { return cfg_.n_lat * cfg_.n_lon; }

    void check_shape(const FieldSequence& z, const NoiseLevels& k) const {
        if (z.frames != cfg_.frames || z.n_channels() != cfg_.channels ||
            z.n_lat() != cfg_.n_lat || z.n_lon() != cfg_.n_lon)
            throw DataError("ConvDenoiser: sequence shape does not match the model (" +
                            std::to_string(z.frames) + "x" + std::to_string(z.n_channels()) +
                            "x" + std::to_string(z.n_lat()) + "x" + std::to_string(z.n_lon()) +
                            ")");
        if (k.k.size() != cfg_.frames)
            throw DataError("ConvDenoiser: noise level count != frames");
    }

    std::vector<double> assemble_input(const FieldSequence& z, const NoiseLevels& k) const {
        const std::size_t px = pixels();
        std::vector<double> input(cfg_.input_planes() * px);
        std::copy(z.values.begin(), z.values.end(), input.begin());
        std::copy(embeddings_.begin(), embeddings_.end(),
                  input.begin() + static_cast<std::ptrdiff_t>(cfg_.data_planes() * px));
        if (cfg_.append_noise_channels) {
            double* base = input.data() + (cfg_.data_planes() + 3) * px;
            for (std::size_t t = 0; t < cfg_.frames; ++t)
                std::fill(base + t * px, base + (t + 1) * px, k.k[t]);
        }
        return input;
    }

    // layer order: stem, (a,b) per stage, head, bypass
    const Layer& head_layer() const { return layers_[layers_.size() - 2]; }
    const Layer& bypass_layer() const { return layers_.back(); }

    void build_layers() {
        layers_.clear();
        std::size_t off = 0;
        auto add = [&](std::size_t c_in, std::size_t c_out) {
            Layer l;
            l.c_in = c_in;
            l.c_out = c_out;
            l.w_off = off;
            off += l.w_count();
            l.b_off = off;
            off += c_out;
            layers_.push_back(l);
        };
        add(cfg_.input_planes(), cfg_.width);
        for (std::size_t s = 0; s < cfg_.stages; ++s) {
            add(cfg_.width, cfg_.width);
            add(cfg_.width, cfg_.width);
        }
        add(cfg_.width, cfg_.data_planes());        // head
        add(cfg_.input_planes(), cfg_.data_planes());  // linear bypass
        params_.assign(off, 0.0);
    }

    void init_params() {
        RandomStream rng(detail::mix64(cfg_.init_seed ^ 0x77aa11ffULL));
        for (std::size_t li = 0; li + 2 < layers_.size(); ++li) {
            const Layer& l = layers_[li];
            const double sd = std::sqrt(2.0 / static_cast<double>(l.c_in * 9));
            for (std::size_t i = 0; i < l.w_count(); ++i)
                params_[l.w_off + i] = sd * rng.normal();
            // biases stay zero
        }
        // head and bypass stay zero: the untrained network is the identity on Z
    }

    // out[oc] = bias[oc] + sum_ic conv(in[ic]); out buffers are overwritten.
    void conv_forward(const Layer& l, const double* in, double* out) const {
        run_conv(l, in, out, params_.data() + l.w_off, params_.data() + l.b_off);
    }

    // Bias-free convolution for tangent propagation.
    void conv_tangent(const Layer& l, const double* in, double* out) const {
        run_conv(l, in, out, params_.data() + l.w_off, nullptr);
    }

    void run_conv(const Layer& l, const double* in, double* out, const double* w,
                  const double* bias) const {
        const std::size_t h = cfg_.n_lat, wd = cfg_.n_lon, px = h * wd;
        const std::size_t wp = wd + 2;
        std::vector<double> padded(l.c_in * (h + 2) * wp);
        for (std::size_t ic = 0; ic < l.c_in; ++ic)
            convdet::pad_plane(in + ic * px, padded.data() + ic * (h + 2) * wp, h, wd);
        for (std::size_t oc = 0; oc < l.c_out; ++oc) {
            double* o = out + oc * px;
            const double b = bias ? bias[oc] : 0.0;
            for (std::size_t i = 0; i < px; ++i) o[i] = b;
            for (std::size_t ic = 0; ic < l.c_in; ++ic) {
                const double* p = padded.data() + ic * (h + 2) * wp;
                const double* wk = w + (oc * l.c_in + ic) * 9;
                for (std::size_t a = 0; a < 3; ++a)
                    for (std::size_t bb = 0; bb < 3; ++bb) {
                        const double wv = wk[a * 3 + bb];
                        if (wv == 0.0) continue;
                        for (std::size_t i = 0; i < h; ++i) {
                            const double* src = p + (i + a) * wp + bb;
                            double* dst = o + i * wd;
                            for (std::size_t j = 0; j < wd; ++j) dst[j] += wv * src[j];
                        }
                    }
            }
        }
    }

    /// Accumulates weight/bias gradients and the input gradient (g_in must be
    /// zero-initialized by the caller; contributions are added).
    void conv_backward(const Layer& l, const double* in, const double* g_out,
                       std::span<double> grad_params, double* g_in) const {
        const std::size_t h = cfg_.n_lat, wd = cfg_.n_lon, px = h * wd;
        const std::size_t wp = wd + 2;
        std::vector<double> padded(l.c_in * (h + 2) * wp);
        for (std::size_t ic = 0; ic < l.c_in; ++ic)
            convdet::pad_plane(in + ic * px, padded.data() + ic * (h + 2) * wp, h, wd);
        std::vector<double> g_pad((h + 2) * wp);

        double* gw = grad_params.data() + l.w_off;
        double* gb = grad_params.data() + l.b_off;
        for (std::size_t oc = 0; oc < l.c_out; ++oc) {
            const double* go = g_out + oc * px;
            double bsum = 0.0;
            for (std::size_t i = 0; i < px; ++i) bsum += go[i];
            gb[oc] += bsum;
        }
        for (std::size_t ic = 0; ic < l.c_in; ++ic) {
            const double* p = padded.data() + ic * (h + 2) * wp;
            std::fill(g_pad.begin(), g_pad.end(), 0.0);
            for (std::size_t oc = 0; oc < l.c_out; ++oc) {
                const double* go = g_out + oc * px;
                const double* wk = params_.data() + l.w_off + (oc * l.c_in + ic) * 9;
                double* gwk = gw + (oc * l.c_in + ic) * 9;
                for (std::size_t a = 0; a < 3; ++a)
                    for (std::size_t bb = 0; bb < 3; ++bb) {
                        double acc = 0.0;
                        const double wv = wk[a * 3 + bb];
                        for (std::size_t i = 0; i < h; ++i) {
                            const double* src = p + (i + a) * wp + bb;
                            double* gp = g_pad.data() + (i + a) * wp + bb;
                            const double* g_row = go + i * wd;
                            for (std::size_t j = 0; j < wd; ++j) {
                                acc += g_row[j] * src[j];
                                gp[j] += wv * g_row[j];
                            }
                        }
                        gwk[a * 3 + bb] += acc;
                    }
            }
            convdet::unpad_accumulate(g_pad.data(), g_in + ic * px, h, wd);
        }
    }

    ConvNetConfig cfg_;
    GridSpec grid_;
    std::vector<double> embeddings_;
    std::vector<Layer> layers_;
    std::vector<double> params_;
};

namespace convdet {

class ConvLinearization final : public DenoiserLinearization {
public:
    ConvLinearization(const ConvDenoiser& net, FieldSequence xhat, ConvDenoiser::Tape tape)
        : net_(net), xhat_(std::move(xhat)), tape_(std::move(tape)) {}

    const FieldSequence& value() const override { return xhat_; }
    FieldSequence jvp(const FieldSequence& u) const override {
        return net_.jvp_with_tape(tape_, u);
    }
    FieldSequence vjp(const FieldSequence& v) const override {
        return net_.vjp_with_tape(tape_, v);
    }

private:
    const ConvDenoiser& net_;
    FieldSequence xhat_;
    ConvDenoiser::Tape tape_;
};

}  // namespace convdet

inline std::unique_ptr<DenoiserLinearization> ConvDenoiser::linearize(
    const FieldSequence& z, const NoiseLevels& k) const {
    Tape tape;
    FieldSequence xhat = forward(z, k, &tape);
    return std::make_unique<convdet::ConvLinearization>(*this, std::move(xhat), std::move(tape));
}

}  // namespace windkit
