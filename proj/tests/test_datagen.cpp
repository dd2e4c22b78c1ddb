#include <doctest.h>

#include <cmath>

#include "windkit/datagen.hpp"
#include "windkit/metrics.hpp"
#include "windkit/transforms.hpp"

using namespace windkit;

namespace {

double channel_correlation(const FieldSequence& s, std::size_t c, std::size_t t0,
                           std::size_t t1) {
    auto a = s.frame_channel(t0, c);
    auto b = s.frame_channel(t1, c);
    const std::size_t n = a.size();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) return 1.0;
    return cov / std::sqrt(va * vb);
}

double spatial_variance(const FieldSequence& s, std::size_t c, std::size_t t) {
    auto a = s.frame_channel(t, c);
    double m = 0.0;
    for (double v : a) m += v;
    m /= a.size();
    double var = 0.0;
    for (double v : a) var += (v - m) * (v - m);
    return var / a.size();
}

}  // namespace

TEST_CASE("generate: deterministic per seed") {
    WorldConfig cfg;
    cfg.n_lat = 16;
    cfg.n_lon = 32;
    cfg.seed = 99;
    const FieldSequence a = generate(cfg, 8);
    const FieldSequence b = generate(cfg, 8);
    CHECK(a.values == b.values);
    cfg.seed = 100;
    const FieldSequence c = generate(cfg, 8);
    CHECK(a.values != c.values);
}

TEST_CASE("generate: pure diffusion strictly shrinks spatial variance") {
    WorldConfig cfg;
    cfg.n_lat = 16;
    cfg.n_lon = 32;
    cfg.advection_speed = 0.0;
    cfg.forcing_amplitude = 0.0;
    cfg.seed = 5;
    const FieldSequence s = generate(cfg, 10);
    // diffusion acts on the prognostic temperature/humidity channels
    for (std::size_t c : {std::size_t{0}, std::size_t{3}}) {
        for (std::size_t t = 1; t < s.frames; ++t)
            CHECK(spatial_variance(s, c, t) < spatial_variance(s, c, t - 1));
    }
}

TEST_CASE("generate: temporally smooth, precipitation >= 0 with >= 50% zeros") {
    WorldConfig cfg;  // defaults: 32x64, standard6
    cfg.seed = 17;
    const std::size_t frames = 40;
    const FieldSequence s = generate(cfg, frames);
    s.validate();

    std::size_t precip_c = 0;
    for (std::size_t c = 0; c < s.n_channels(); ++c)
        if (s.channels[c].kind == ChannelKind::precipitation) precip_c = c;

    std::size_t zeros = 0, total = 0;
    for (std::size_t t = 0; t < frames; ++t)
        for (double v : s.frame_channel(t, precip_c)) {
            CHECK(v >= 0.0);
            zeros += v == 0.0 ? 1 : 0;
            ++total;
        }
    CHECK(static_cast<double>(zeros) / static_cast<double>(total) >= 0.5);

    for (std::size_t c = 0; c < s.n_channels(); ++c) {
        double worst = 1.0;
        for (std::size_t t = 1; t < frames; ++t)
            worst = std::min(worst, channel_correlation(s, c, t - 1, t));
        CAPTURE(s.channels[c].name);
        CHECK(worst > 0.9);
    }
}

TEST_CASE("generate: zonal spectrum nonvanishing up to W/4") {
    WorldConfig cfg;
    cfg.seed = 23;
    const FieldSequence s = generate(cfg, 4);
    const auto area = area_weights(s.grid);
    const auto psd = zonal_psd(s.frame_channel(0, 0), s.grid, area);
    double peak = 0.0;
    for (double p : psd) peak = std::max(peak, p);
    for (std::size_t k = 1; k <= s.n_lon() / 4; ++k) CHECK(psd[k] > 1e-9 * peak);
}

TEST_CASE("precip transform: endpoints, arithmetic, round trip") {
    CHECK(precip_transform(0.0) == doctest::Approx(0.0));
    CHECK(precip_transform(0.001) == doctest::Approx(0.3010299956639812).epsilon(1e-12));
    CHECK_THROWS_AS(precip_transform(-1e-9), NumericError);
    RandomStream rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double x = rng.uniform() * 0.05;
        CHECK(std::abs(precip_inverse(precip_transform(x)) - x) <= 1e-12);
    }
}

TEST_CASE("normalize: train split moments, round trip, no leakage") {
    WorldConfig cfg;
    cfg.n_lat = 16;
    cfg.n_lon = 32;
    cfg.seed = 31;
    const FieldSequence phys = generate(cfg, 60);
    const SplitSpec split = SplitSpec::fractions(60);
    const FieldSequence train = phys.window(0, split.train_end);
    const FieldSequence val = phys.window(split.train_end, split.val_end - split.train_end);

    const NormStats stats = compute_norm_stats(train);
    const FieldSequence train_n = normalize(train, stats);
    for (std::size_t c = 0; c < train_n.n_channels(); ++c) {
        double s1 = 0.0, s2 = 0.0;
        const double n = static_cast<double>(train_n.frames * train_n.pixels());
        for (std::size_t t = 0; t < train_n.frames; ++t)
            for (double v : train_n.frame_channel(t, c)) {
                s1 += v;
                s2 += v * v;
            }
        const double mean = s1 / n;
        const double sd = std::sqrt(std::max(s2 / n - mean * mean, 0.0));
        CHECK(std::abs(mean) < 1e-6);
        CHECK(std::abs(sd - 1.0) < 1e-6);
    }

    // round trip
    const FieldSequence back = denormalize(train_n, stats);
    for (std::size_t i = 0; i < train.values.size(); ++i)
        CHECK(std::abs(back.values[i] - train.values[i]) < 1e-10);

    // validation split is not forced to zero mean (no leakage)
    const FieldSequence val_n = normalize(val, stats);
    bool some_channel_off = false;
    for (std::size_t c = 0; c < val_n.n_channels(); ++c) {
        double s1 = 0.0;
        const double n = static_cast<double>(val_n.frames * val_n.pixels());
        for (std::size_t t = 0; t < val_n.frames; ++t)
            for (double v : val_n.frame_channel(t, c)) s1 += v;
        if (std::abs(s1 / n) > 1e-4) some_channel_off = true;
    }
    CHECK(some_channel_off);
}

TEST_CASE("static embeddings: trig identities at reference points") {
    GridSpec g;
    g.lat = {0.0, 90.0};
    g.lon = {0.0, 180.0};
    const auto e = static_spatial_embeddings(g);
    const std::size_t px = 4;
    // equator, lambda = 0 -> (0, 1, 0)
    CHECK(e[0 * px + 0] == doctest::Approx(0.0));
    CHECK(e[1 * px + 0] == doctest::Approx(1.0));
    CHECK(e[2 * px + 0] == doctest::Approx(0.0));
    // phi = 90 -> (1, 0, 0)
    CHECK(e[0 * px + 2] == doctest::Approx(1.0));
    CHECK(std::abs(e[1 * px + 2]) < 1e-12);
    CHECK(std::abs(e[2 * px + 2]) < 1e-12);
}

TEST_CASE("time embeddings: 180 degrees of longitude is a 12 hour phase shift") {
    GridSpec g;
    g.lat = {0.0};
    g.lon = {0.0, 180.0};
    const auto e = time_embeddings(g, 0.0, 6.0, 1);
    const std::size_t px = 2;
    // local-time embedding at lon=180 equals the lon=0 value 12 hours later
    const auto e_later = time_embeddings(g, 12.0, 6.0, 1);
    CHECK(e[2 * px + 1] == doctest::Approx(e_later[2 * px + 0]).epsilon(1e-12));
    CHECK(e[3 * px + 1] == doctest::Approx(e_later[3 * px + 0]).epsilon(1e-12));
}

TEST_CASE("splits are disjoint and contiguous") {
    const SplitSpec s = SplitSpec::fractions(100);
    CHECK(s.train_end == 70);
    CHECK(s.val_end == 85);
    CHECK(s.n_frames == 100);
    CHECK_THROWS_AS(SplitSpec::fractions(3), ConfigError);
}

TEST_CASE("orography: nonnegative, nontrivial, peaks below ~700 m") {
    GridSpec g = GridSpec::regular(32, 64);
    const auto phi = orography_geopotential(g);
    double mx = 0.0;
    for (double v : phi) {
        CHECK(v >= 0.0);
        mx = std::max(mx, v);
    }
    CHECK(mx > 1000.0);
    CHECK(mx < 700.0 * 9.80665);
}
