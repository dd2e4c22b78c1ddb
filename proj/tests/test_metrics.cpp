#include <doctest.h>

#include <cmath>
#include <sstream>

#include "windkit/metrics.hpp"
#include "windkit/rng.hpp"

using namespace windkit;

namespace {

std::vector<std::span<const double>> as_spans(const std::vector<std::vector<double>>& m) {
    std::vector<std::span<const double>> s;
    for (const auto& v : m) s.emplace_back(v);
    return s;
}

}  // namespace

TEST_CASE("crps hand cases") {
    std::vector<double> area = {1.0};
    SUBCASE("all members equal truth -> 0") {
        std::vector<std::vector<double>> m = {{1.5}, {1.5}, {1.5}};
        std::vector<double> truth = {1.5};
        CHECK(crps(as_spans(m), truth, area) == doctest::Approx(0.0));
    }
    SUBCASE("members {0,2} vs truth 1 -> 0") {
        std::vector<std::vector<double>> m = {{0.0}, {2.0}};
        std::vector<double> truth = {1.0};
        CHECK(crps(as_spans(m), truth, area) == doctest::Approx(0.0).epsilon(1e-15));
    }
    SUBCASE("members {0,2} vs truth 0 -> 0; degenerate {1,1} vs 0 -> 1") {
        std::vector<std::vector<double>> m = {{0.0}, {2.0}};
        std::vector<double> truth = {0.0};
        CHECK(crps(as_spans(m), truth, area) == doctest::Approx(0.0).epsilon(1e-15));
        std::vector<std::vector<double>> deg = {{1.0}, {1.0}};
        CHECK(crps(as_spans(deg), truth, area) == doctest::Approx(1.0));
    }
    SUBCASE("fewer than 2 members rejected") {
        std::vector<std::vector<double>> m = {{0.0}};
        std::vector<double> truth = {0.0};
        CHECK_THROWS_AS(crps(as_spans(m), truth, area), DataError);
    }
}

TEST_CASE("crps of a degenerate ensemble equals the weighted MAE") {
    RandomStream rng(5);
    const std::size_t px = 64;
    std::vector<double> member(px), truth(px), area(px);
    double wsum = 0.0;
    for (std::size_t i = 0; i < px; ++i) {
        member[i] = rng.normal();
        truth[i] = rng.normal();
        area[i] = 0.5 + rng.uniform();
        wsum += area[i];
    }
    // keep weights mean-1 like area_weights does
    for (double& a : area) a *= static_cast<double>(px) / wsum;
    std::vector<std::vector<double>> m = {member, member, member};
    double mae = 0.0;
    for (std::size_t i = 0; i < px; ++i) mae += area[i] * std::abs(member[i] - truth[i]);
    mae /= static_cast<double>(px);
    CHECK(crps(as_spans(m), truth, area) == doctest::Approx(mae).epsilon(1e-12));
}

TEST_CASE("crps is nonnegative for i.i.d. ensembles around truth") {
    RandomStream rng(17);
    std::vector<double> area = {1.0, 1.0, 1.0, 1.0};
    for (int rep = 0; rep < 1000; ++rep) {
        std::vector<std::vector<double>> m(5, std::vector<double>(4));
        std::vector<double> truth(4);
        for (auto& mem : m)
            for (double& v : mem) v = rng.normal();
        for (double& v : truth) v = rng.normal();
        CHECK(crps(as_spans(m), truth, area) >= -1e-12);
    }
}

TEST_CASE("spread/skill/ssr hand case: members {0,2}, truth 0") {
    std::vector<double> area = {1.0};
    std::vector<std::vector<double>> m = {{0.0}, {2.0}};
    std::vector<double> truth = {0.0};
    const auto s = as_spans(m);
    CHECK(spread(s, area) == doctest::Approx(std::sqrt(2.0)));
    CHECK(skill(s, truth, area) == doctest::Approx(1.0));
    CHECK(ssr(s, truth, area) == doctest::Approx(std::sqrt(3.0)));
}

TEST_CASE("ssr: degenerate ensemble 0, perfect mean +inf") {
    std::vector<double> area = {1.0};
    std::vector<std::vector<double>> deg = {{1.0}, {1.0}};
    std::vector<double> truth = {1.0};
    CHECK(ssr(as_spans(deg), truth, area) == 0.0);
    std::vector<std::vector<double>> spreadful = {{0.5}, {1.5}};
    CHECK(std::isinf(ssr(as_spans(spreadful), truth, area)));
}

TEST_CASE("ssr calibration: exchangeable Gaussian ensemble, M=50, 1e4 pixels") {
    // Calibration means the truth is one more draw from the forecast
    // distribution; the sqrt((M+1)/M) inflation makes SSR -> 1 exactly then.
    RandomStream rng(23);
    const std::size_t px = 10000, m_count = 50;
    std::vector<double> center(px), truth(px), area(px, 1.0);
    for (double& v : center) v = rng.normal() * 3.0;
    for (std::size_t i = 0; i < px; ++i) truth[i] = center[i] + rng.normal();
    std::vector<std::vector<double>> m(m_count, std::vector<double>(px));
    for (auto& mem : m)
        for (std::size_t i = 0; i < px; ++i) mem[i] = center[i] + rng.normal();
    const double r = ssr(as_spans(m), truth, area);
    CHECK(r > 0.95);
    CHECK(r < 1.05);
}

TEST_CASE("rmse_weighted: zero, constant error, brute-force oracle") {
    std::vector<double> area = {1.0, 1.0, 1.0};
    std::vector<double> x = {1.0, 2.0, 3.0};
    CHECK(rmse_weighted(x, x, area) == doctest::Approx(0.0));
    std::vector<double> y = {3.0, 4.0, 5.0};
    CHECK(rmse_weighted(y, x, area) == doctest::Approx(2.0));

    RandomStream rng(31);
    const std::size_t px = 128;
    std::vector<double> pred(px), truth(px), w(px);
    double wsum = 0.0;
    for (std::size_t i = 0; i < px; ++i) {
        pred[i] = rng.normal();
        truth[i] = rng.normal();
        w[i] = 0.2 + rng.uniform();
        wsum += w[i];
    }
    for (double& a : w) a *= static_cast<double>(px) / wsum;
    // independent double-loop accumulation
    double acc = 0.0;
    for (std::size_t i = 0; i < px; ++i) acc += w[i] * (pred[i] - truth[i]) * (pred[i] - truth[i]);
    const double oracle = std::sqrt(acc / static_cast<double>(px));
    CHECK(std::abs(rmse_weighted(pred, truth, w) - oracle) < 1e-12);
}

TEST_CASE("zonal_psd: constant field -> all power at wavenumber 0") {
    GridSpec grid = GridSpec::regular(4, 16);
    const auto area = area_weights(grid);
    std::vector<double> field(4 * 16, 2.5);
    const auto psd = zonal_psd(field, grid, area);
    CHECK(psd[0] == doctest::Approx(2.5 * 2.5 * 16.0));
    for (std::size_t k = 1; k < psd.size(); ++k) CHECK(std::abs(psd[k]) < 1e-18);
}

TEST_CASE("zonal_psd: pure cosine line at wavenumber 3") {
    GridSpec grid = GridSpec::regular(4, 32);
    const auto area = area_weights(grid);
    std::vector<double> field(4 * 32);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 32; ++j)
            field[i * 32 + j] = std::cos(2.0 * 3.14159265358979323846 * 3.0 * j / 32.0);
    const auto psd = zonal_psd(field, grid, area);
    for (std::size_t k = 0; k < psd.size(); ++k) {
        if (k == 3)
            CHECK(psd[k] > 1.0);
        else
            CHECK(std::abs(psd[k]) < 1e-12);
    }
}

TEST_CASE("zonal_psd: Parseval within 1e-8 relative") {
    RandomStream rng(41);
    GridSpec grid = GridSpec::regular(8, 24);
    const auto area = area_weights(grid);
    std::vector<double> field(8 * 24);
    for (double& v : field) v = rng.normal();
    const auto psd = zonal_psd(field, grid, area);
    double total = 0.0;
    for (double p : psd) total += p;
    double expected = 0.0, wsum = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < 24; ++j) row += field[i * 24 + j] * field[i * 24 + j];
        expected += area[i * 24] * row;
        wsum += area[i * 24];
    }
    expected /= wsum;
    CHECK(std::abs(total - expected) / expected < 1e-8);
}

TEST_CASE("zonal_psd: white-noise spectrum flat within 10% (interior wavenumbers)") {
    RandomStream rng(43);
    GridSpec grid = GridSpec::regular(4, 32);
    const auto area = area_weights(grid);
    const std::size_t n_wave = 32 / 2 + 1;
    std::vector<double> mean_psd(n_wave, 0.0);
    const int reps = 1000;
    for (int r = 0; r < reps; ++r) {
        std::vector<double> field(4 * 32);
        for (double& v : field) v = rng.normal();
        const auto psd = zonal_psd(field, grid, area);
        for (std::size_t k = 0; k < n_wave; ++k) mean_psd[k] += psd[k];
    }
    for (double& p : mean_psd) p /= reps;
    // interior wavenumbers share E[P] = 2 sigma^2; the Nyquist and DC bins
    // hold one Fourier line each
    for (std::size_t k = 1; k + 1 < n_wave; ++k) {
        CHECK(mean_psd[k] > 0.9 * 2.0);
        CHECK(mean_psd[k] < 1.1 * 2.0);
    }
}

TEST_CASE("histogram_counts: binning basics") {
    std::vector<double> edges = {0.0, 1.0, 2.0};
    SUBCASE("all values in one bin") {
        std::vector<double> v(10, 0.5);
        const auto h = histogram_counts(v, edges);
        CHECK(h.counts[0] == 10);
        CHECK(h.counts[1] == 0);
        CHECK(h.underflow + h.overflow == 0);
    }
    SUBCASE("out-of-range goes to overflow bins") {
        std::vector<double> v = {-1.0, 0.0, 1.0, 2.0, 5.0};
        const auto h = histogram_counts(v, edges);
        CHECK(h.underflow == 1);
        CHECK(h.counts[0] == 1);
        CHECK(h.counts[1] == 1);
        CHECK(h.overflow == 2);  // right edge is exclusive
    }
    SUBCASE("empty input -> zero counts") {
        std::vector<double> v;
        const auto h = histogram_counts(v, edges);
        CHECK(h.total() == 0);
    }
    SUBCASE("unsorted edges rejected") {
        std::vector<double> bad = {1.0, 0.5};
        std::vector<double> v = {0.7};
        CHECK_THROWS_AS(histogram_counts(v, bad), DataError);
    }
}

TEST_CASE("histogram_counts: uniform data within 3 sigma per bin") {
    RandomStream rng(51);
    const std::size_t n = 1000000, bins = 10;
    std::vector<double> edges(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i) edges[i] = static_cast<double>(i) / bins;
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform();
    const auto h = histogram_counts(v, edges);
    const double expect = static_cast<double>(n) / bins;
    const double sigma = std::sqrt(expect * (1.0 - 1.0 / bins));
    for (std::size_t b = 0; b < bins; ++b)
        CHECK(std::abs(static_cast<double>(h.counts[b]) - expect) < 3.0 * sigma);
}

TEST_CASE("MetricReport: CSV layout and non-finite rejection") {
    MetricReport r;
    r.config_hash = "abc";
    r.seed = 7;
    r.add("t2m", 6.0, "crps", 0.25);
    CHECK_THROWS_AS(r.add("t2m", 6.0, "bad", std::numeric_limits<double>::quiet_NaN()),
                    NumericError);
    std::ostringstream os;
    r.write_csv(os);
    CHECK(os.str() == "channel,lead_hours,metric,value\nt2m,6,crps,0.25\n");
    CHECK(r.provenance()["config_hash"] == "abc");
}
