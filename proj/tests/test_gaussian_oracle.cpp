#include <doctest.h>

#include <cmath>

#include "windkit/denoiser.hpp"
#include "windkit/gaussian_oracle.hpp"
#include "windkit/rng.hpp"

using namespace windkit;

namespace {

// Independent dense solve (Gauss-Jordan), used only as the oracle side.
std::vector<double> dense_solve(Mat a, std::vector<double> b) {
    const std::size_t n = a.rows;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
        for (std::size_t c = 0; c < n; ++c) std::swap(a(col, c), a(piv, c));
        std::swap(b[col], b[piv]);
        const double d = a(col, col);
        for (std::size_t c = 0; c < n; ++c) a(col, c) /= d;
        b[col] /= d;
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a(r, col);
            for (std::size_t c = 0; c < n; ++c) a(r, c) -= f * a(col, c);
            b[r] -= f * b[col];
        }
    }
    return b;
}

// Tiny sequence shell: frames x 1 x 2 x 2 so D = 4 * frames.
FieldSequence shell(std::size_t frames) {
    GridSpec grid = GridSpec::regular(2, 2);
    std::vector<ChannelSpec> ch = {{"x", ChannelKind::generic, std::nullopt, Transform::none}};
    return FieldSequence::zeros(grid, ch, frames);
}

GaussianPrior random_prior(std::size_t dim, RandomStream& rng, double mean_scale = 1.0) {
    GaussianPrior p;
    p.mean.resize(dim);
    for (double& v : p.mean) v = mean_scale * rng.normal();
    Mat g(dim, dim);
    for (double& v : g.a) v = rng.normal();
    p.covariance = matmul(g, transpose(g));
    for (std::size_t i = 0; i < dim; ++i) p.covariance(i, i) += 0.4 * static_cast<double>(dim);
    // normalize to O(1) variances
    double tr = 0.0;
    for (std::size_t i = 0; i < dim; ++i) tr += p.covariance(i, i);
    const double scale = static_cast<double>(dim) / tr;
    for (double& v : p.covariance.a) v *= scale;
    return p;
}

}  // namespace

TEST_CASE("analytic denoise: scalar conjugacy with identity prior") {
    FieldSequence sh = shell(1);  // D = 4
    GaussianPrior prior = GaussianPrior::isotropic(4, 1.0);
    GaussianDenoiser den(prior, sh);
    const double kv = 0.37;
    const double a = alpha(kv), b = beta(kv);
    FieldSequence z = sh;
    z.values = {0.5, -1.25, 2.0, 0.1};
    const FieldSequence xhat = den.denoise(z, NoiseLevels::shared(1, kv));
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(xhat.values[i] == doctest::Approx(a * z.values[i] / (a * a + b * b)).epsilon(1e-12));
}

TEST_CASE("analytic denoise: k=0 limit returns Z within 1e-3 (beta_min floor)") {
    RandomStream rng(7);
    FieldSequence sh = shell(2);  // D = 8
    GaussianPrior prior = random_prior(8, rng);
    GaussianDenoiser den(prior, sh);
    FieldSequence z = sh;
    for (double& v : z.values) v = rng.normal();
    const FieldSequence xhat = den.denoise(z, NoiseLevels::shared(2, 0.0));
    for (std::size_t i = 0; i < 8; ++i)
        CHECK(std::abs(xhat.values[i] - z.values[i]) < 1e-3);
}

TEST_CASE("analytic denoise matches an independent dense solve (D=8)") {
    RandomStream rng(13);
    FieldSequence sh = shell(2);
    GaussianPrior prior = random_prior(8, rng);
    GaussianDenoiser den(prior, sh);
    NoiseLevels k;
    k.k = {0.3, 0.8};
    FieldSequence z = sh;
    for (double& v : z.values) v = rng.normal();

    // oracle: xhat = mu + Sigma A (A Sigma A + B^2)^{-1} (z - A mu)
    const auto [a, b] = den.per_element_coeffs(k);
    const std::size_t d = 8;
    Mat m(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) m(i, j) = a[i] * prior.covariance(i, j) * a[j];
    for (std::size_t i = 0; i < d; ++i) m(i, i) += b[i] * b[i];
    std::vector<double> resid(d);
    for (std::size_t i = 0; i < d; ++i) resid[i] = z.values[i] - a[i] * prior.mean[i];
    const auto w = dense_solve(m, resid);
    std::vector<double> expect(d);
    for (std::size_t i = 0; i < d; ++i) {
        double s = prior.mean[i];
        for (std::size_t j = 0; j < d; ++j) s += prior.covariance(i, j) * a[j] * w[j];
        expect[i] = s;
    }

    const FieldSequence xhat = den.denoise(z, k);
    for (std::size_t i = 0; i < d; ++i)
        CHECK(xhat.values[i] == doctest::Approx(expect[i]).epsilon(1e-10));
}

TEST_CASE("score identity: residual cases") {
    FieldSequence sh = shell(1);
    const double kv = 0.6;
    const double a = alpha(kv), b = beta(kv);
    NoiseLevels k = NoiseLevels::shared(1, kv);
    SUBCASE("xhat = z/alpha gives zero score") {
        FieldSequence z = sh;
        z.values = {1.0, -0.5, 0.25, 2.0};
        FieldSequence xhat = z;
        for (double& v : xhat.values) v /= a;
        const FieldSequence s = score_from_denoiser(z, xhat, k);
        for (double v : s.values) CHECK(std::abs(v) < 1e-12);
    }
    SUBCASE("z = a x + b eps with xhat = x gives -eps/beta") {
        RandomStream rng(19);
        FieldSequence x = sh, eps = sh;
        for (double& v : x.values) v = rng.normal();
        for (double& v : eps.values) v = rng.normal();
        FieldSequence z = sh;
        for (std::size_t i = 0; i < 4; ++i) z.values[i] = a * x.values[i] + b * eps.values[i];
        const FieldSequence s = score_from_denoiser(z, x, k);
        for (std::size_t i = 0; i < 4; ++i)
            CHECK(s.values[i] == doctest::Approx(-eps.values[i] / b).epsilon(1e-12));
    }
}

TEST_CASE("score identity: N(0, I) marginal score at k=0.5 (D=4)") {
    FieldSequence sh = shell(1);
    GaussianPrior prior = GaussianPrior::isotropic(4, 1.0);
    GaussianDenoiser den(prior, sh);
    const double kv = 0.5;
    const double a = alpha(kv), b = beta(kv);
    NoiseLevels k = NoiseLevels::shared(1, kv);
    RandomStream rng(23);
    FieldSequence z = sh;
    for (double& v : z.values) v = rng.normal();
    const FieldSequence xhat = den.denoise(z, k);
    const FieldSequence s = score_from_denoiser(z, xhat, k);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(std::abs(s.values[i] - (-z.values[i] / (a * a + b * b))) < 1e-10);
}

TEST_CASE("score chain equals analytic marginal score across 10 noise levels (D<=16)") {
    RandomStream rng(29);
    FieldSequence sh = shell(4);  // D = 16
    GaussianPrior prior = random_prior(16, rng);
    GaussianDenoiser den(prior, sh);
    for (int step = 0; step < 10; ++step) {
        const double kv = 0.05 + 0.9 * step / 9.0;
        NoiseLevels k = NoiseLevels::shared(4, kv);
        FieldSequence z = sh;
        for (double& v : z.values) v = rng.normal();

        const FieldSequence xhat = den.denoise(z, k);
        const FieldSequence s = score_from_denoiser(z, xhat, k);

        // analytic score of N(A mu, A Sigma A + B^2): -(cov)^{-1} (z - mean)
        const auto [mean, cov] = den.marginal(k);
        std::vector<double> resid(16);
        for (std::size_t i = 0; i < 16; ++i) resid[i] = z.values[i] - mean[i];
        const auto sol = dense_solve(cov, resid);
        for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(s.values[i] + sol[i]) < 1e-8);
    }
}

TEST_CASE("oracle Jacobian: symmetric PSD at shared k; jvp == vjp") {
    RandomStream rng(31);
    FieldSequence sh = shell(3);  // D = 12
    GaussianPrior prior = random_prior(12, rng);
    GaussianDenoiser den(prior, sh);
    NoiseLevels k = NoiseLevels::shared(3, 0.45);
    FieldSequence z = sh;
    for (double& v : z.values) v = rng.normal();
    const auto lin = den.linearize(z, k);

    // materialize J column by column; check symmetry and PSD via Gershgorin
    Mat j(12, 12);
    for (std::size_t c = 0; c < 12; ++c) {
        FieldSequence e = sh;
        e.values.assign(12, 0.0);
        e.values[c] = 1.0;
        const FieldSequence col = lin->jvp(e);
        for (std::size_t r = 0; r < 12; ++r) j(r, c) = col.values[r];
    }
    for (std::size_t r = 0; r < 12; ++r)
        for (std::size_t c = 0; c < 12; ++c)
            CHECK(std::abs(j(r, c) - j(c, r)) < 1e-10);
    // PSD: x'Jx >= 0 on random probes
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> x(12);
        for (double& v : x) v = rng.normal();
        double quad = 0.0;
        for (std::size_t r = 0; r < 12; ++r)
            for (std::size_t c = 0; c < 12; ++c) quad += x[r] * j(r, c) * x[c];
        CHECK(quad >= -1e-12);
    }
    // jvp(u) == vjp(u)
    for (int rep = 0; rep < 5; ++rep) {
        FieldSequence u = sh;
        for (double& v : u.values) v = rng.normal();
        const FieldSequence a = lin->jvp(u);
        const FieldSequence b = lin->vjp(u);
        for (std::size_t i = 0; i < 12; ++i) CHECK(std::abs(a.values[i] - b.values[i]) < 1e-10);
    }
}

TEST_CASE("weighted_mse: zero, arithmetic, brute-force oracle, permutation invariance") {
    GridSpec grid = GridSpec::regular(3, 4);
    std::vector<ChannelSpec> ch = {
        {"a", ChannelKind::generic, std::nullopt, Transform::none},
        {"b", ChannelKind::generic, std::nullopt, Transform::none}};
    FieldSequence x = FieldSequence::zeros(grid, ch, 2);
    std::vector<double> area(12, 1.0);

    SUBCASE("xhat == x -> 0") {
        RandomStream rng(3);
        for (double& v : x.values) v = rng.normal();
        CHECK(weighted_mse(x, x, {}, area) == doctest::Approx(0.0));
    }
    SUBCASE("uniform weights, error 2 everywhere -> 4") {
        FieldSequence xhat = x;
        for (double& v : xhat.values) v += 2.0;
        CHECK(weighted_mse(x, xhat, {}, area) == doctest::Approx(4.0));
    }
    SUBCASE("random instance equals independent double-loop accumulation") {
        RandomStream rng(9);
        FieldSequence xhat = x;
        for (double& v : x.values) v = rng.normal();
        for (double& v : xhat.values) v = rng.normal();
        std::vector<double> wc = {0.4, 1.7};
        std::vector<double> aw(12);
        double wsum = 0.0;
        for (double& v : aw) {
            v = 0.3 + rng.uniform();
            wsum += v;
        }
        for (double& v : aw) v *= 12.0 / wsum;
        double acc = 0.0;
        for (std::size_t t = 0; t < 2; ++t)
            for (std::size_t c = 0; c < 2; ++c)
                for (std::size_t h = 0; h < 3; ++h)
                    for (std::size_t w = 0; w < 4; ++w) {
                        const double d = x.at(t, c, h, w) - xhat.at(t, c, h, w);
                        acc += wc[c] * aw[h * 4 + w] * d * d;
                    }
        acc /= static_cast<double>(x.size());
        CHECK(std::abs(weighted_mse(x, xhat, wc, aw) - acc) < 1e-12);
    }
    SUBCASE("invariant under simultaneous channel/weight permutation") {
        RandomStream rng(11);
        FieldSequence xhat = x;
        for (double& v : x.values) v = rng.normal();
        for (double& v : xhat.values) v = rng.normal();
        std::vector<double> wc = {0.4, 1.7};
        const double base = weighted_mse(x, xhat, wc, area);
        // swap the two channels everywhere and the weights with them
        FieldSequence xs = x, ps = xhat;
        for (std::size_t t = 0; t < 2; ++t)
            for (std::size_t h = 0; h < 3; ++h)
                for (std::size_t w = 0; w < 4; ++w) {
                    std::swap(xs.at(t, 0, h, w), xs.at(t, 1, h, w));
                    std::swap(ps.at(t, 0, h, w), ps.at(t, 1, h, w));
                }
        std::vector<double> wc_swapped = {1.7, 0.4};
        CHECK(weighted_mse(xs, ps, wc_swapped, area) == doctest::Approx(base).epsilon(1e-12));
    }
}
