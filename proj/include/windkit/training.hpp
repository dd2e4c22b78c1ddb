#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "windkit/conv_denoiser.hpp"
#include "windkit/denoiser.hpp"
#include "windkit/errors.hpp"
#include "windkit/field.hpp"
#include "windkit/grid.hpp"
#include "windkit/rng.hpp"
#include "windkit/schedule.hpp"

namespace windkit {

struct TrainConfig {
    std::size_t epochs = 1;
    std::size_t max_steps = 0;  // 0: run until the epochs are exhausted
    std::size_t batch_size = 8;
    double peak_lr = 1e-3;
    double warmup_fraction = 0.1;
    double lr_floor = 1e-6;
    double clip_norm = 0.8;
    double ema_decay = 0.999;
    std::vector<double> channel_weights;  // empty: all ones
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs < 1 || batch_size < 1)
            throw ConfigError("TrainConfig: epochs and batch_size must be positive");
        if (peak_lr < 0.0 || lr_floor < 0.0 || clip_norm <= 0.0)
            throw ConfigError("TrainConfig: learning rates and clip norm must be nonnegative");
        if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0))
            throw ConfigError("TrainConfig: warmup_fraction must lie in [0, 1)");
        if (!(ema_decay >= 0.0 && ema_decay < 1.0))
            throw ConfigError("TrainConfig: ema_decay must lie in [0, 1)");
        for (double w : channel_weights)
            if (w < 0.0) throw ConfigError("TrainConfig: channel weights must be nonnegative");
    }
};

/// Fixed-length training windows over a normalized sequence.
class WindowDataset {
public:
    WindowDataset(const FieldSequence& data, std::size_t window)
        : data_(&data), window_(window) {
        if (window < 1 || data.frames < window)
            throw DataError("WindowDataset: sequence shorter than the training window");
    }

    std::size_t count() const { return data_->frames - window_ + 1; }
    std::size_t window() const { return window_; }
    FieldSequence at(std::size_t i) const { return data_->window(i, window_); }

private:
    const FieldSequence* data_;
    std::size_t window_;
};

struct TrainResult {
    std::vector<double> loss_curve;
    std::vector<double> ema_params;
    std::size_t steps = 0;
};

/// Linear warmup to peak_lr, then cosine decay to lr_floor.
inline double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& cfg) {
    const double t = static_cast<double>(step);
    const double total = static_cast<double>(total_steps);
    const double warm = cfg.warmup_fraction * total;
    if (warm > 0.0 && t < warm) return cfg.peak_lr * (t + 1.0) / warm;
    const double progress = total > warm ? (t - warm) / (total - warm) : 1.0;
    const double cosine = 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
    return cfg.lr_floor + (cfg.peak_lr - cfg.lr_floor) * cosine;
}

/// Diffusion-forcing training: per step, sample independent per-frame noise
/// levels, noise the window, predict the clean window, and descend on the
/// weighted MSE. Adam with global-norm clipping; EMA tracked alongside.
inline TrainResult train(ConvDenoiser& net, const WindowDataset& dataset,
                         const TrainConfig& cfg, const ScheduleParams& sched = {}) {
    cfg.validate();
    const std::size_t t_frames = net.config().frames;
    if (dataset.window() != t_frames)
        throw ConfigError("train: dataset window length != model frames");
    if (!cfg.channel_weights.empty() && cfg.channel_weights.size() != net.config().channels)
        throw ConfigError("train: channel weight count != channels");

    const std::size_t steps_per_epoch =
        (dataset.count() + cfg.batch_size - 1) / cfg.batch_size;
    // max_steps, when set, is the step budget; otherwise run the epochs out.
    const std::size_t total_steps =
        cfg.max_steps > 0 ? cfg.max_steps : cfg.epochs * steps_per_epoch;
    if (total_steps == 0) throw ConfigError("train: zero training steps");

    SeedPolicy seeds{cfg.seed};
    RandomStream batch_rng = seeds.stream("training/batch");
    RandomStream noise_rng = seeds.stream("training/noise");

    const auto area = area_weights(net.grid());
    const std::size_t n_par = net.n_params();
    std::vector<double> grad(n_par), m1(n_par, 0.0), m2(n_par, 0.0);
    TrainResult result;
    // zero-initialized EMA accumulator, debiased at the end (short runs would
    // otherwise be dominated by the initialization)
    std::vector<double> ema_acc(n_par, 0.0);

    const double adam_b1 = 0.9, adam_b2 = 0.999, adam_eps = 1e-8;
    ConvDenoiser::Tape tape;

    for (std::size_t step = 0; step < total_steps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double loss_acc = 0.0;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            const std::size_t idx =
                static_cast<std::size_t>(batch_rng.uniform() * static_cast<double>(dataset.count()));
            const FieldSequence x = dataset.at(std::min(idx, dataset.count() - 1));
            const NoiseLevels k = sample_noise_levels(t_frames, noise_rng);
            const FieldSequence eps = gaussian_like(x, noise_rng);
            const FieldSequence z = noise_sequence(x, k, eps, sched);
            const FieldSequence xhat = net.forward(z, k, &tape);

            loss_acc += weighted_mse(x, xhat, cfg.channel_weights, area);

            // dL/dxhat = 2 w_c a (xhat - x) / (T C H W)
            FieldSequence g = FieldSequence::zeros(x.grid, x.channels, x.frames, x.stride_hours);
            const double norm = 2.0 / static_cast<double>(x.size());
            for (std::size_t t = 0; t < x.frames; ++t)
                for (std::size_t c = 0; c < x.n_channels(); ++c) {
                    const double wc = cfg.channel_weights.empty() ? 1.0 : cfg.channel_weights[c];
                    auto gs = g.frame_channel(t, c);
                    auto xs = x.frame_channel(t, c);
                    auto ps = xhat.frame_channel(t, c);
                    for (std::size_t p = 0; p < gs.size(); ++p)
                        gs[p] = norm * wc * area[p] * (ps[p] - xs[p]);
                }
            net.backward(tape, g, grad, nullptr);
        }
        const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);
        loss_acc *= inv_batch;
        if (!std::isfinite(loss_acc))
            throw NumericError("train: non-finite loss at step " + std::to_string(step) +
                               " (lr=" + std::to_string(lr_at(step, total_steps, cfg)) + ")");
        for (double& gv : grad) gv *= inv_batch;

        double gnorm2 = 0.0;
        for (double gv : grad) gnorm2 += gv * gv;
        const double gnorm = std::sqrt(gnorm2);
        if (gnorm > cfg.clip_norm && gnorm > 0.0) {
            const double scale = cfg.clip_norm / gnorm;
            for (double& gv : grad) gv *= scale;
        }

        const double lr = lr_at(step, total_steps, cfg);
        const double bc1 = 1.0 - std::pow(adam_b1, static_cast<double>(step + 1));
        const double bc2 = 1.0 - std::pow(adam_b2, static_cast<double>(step + 1));
        auto& params = net.params();
        for (std::size_t i = 0; i < n_par; ++i) {
            m1[i] = adam_b1 * m1[i] + (1.0 - adam_b1) * grad[i];
            m2[i] = adam_b2 * m2[i] + (1.0 - adam_b2) * grad[i] * grad[i];
            params[i] -= lr * (m1[i] / bc1) / (std::sqrt(m2[i] / bc2) + adam_eps);
        }
        for (std::size_t i = 0; i < n_par; ++i)
            ema_acc[i] = cfg.ema_decay * ema_acc[i] + (1.0 - cfg.ema_decay) * params[i];

        result.loss_curve.push_back(loss_acc);
        ++result.steps;
    }
    const double ema_debias = 1.0 - std::pow(cfg.ema_decay, static_cast<double>(result.steps));
    result.ema_params = ema_acc;
    if (ema_debias > 0.0)
        for (double& v : result.ema_params) v /= ema_debias;
    else
        result.ema_params = net.params();  // decay 1 would never accumulate
    return result;
}

}  // namespace windkit
