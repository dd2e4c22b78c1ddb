#include <doctest.h>

#include <cmath>

#include "windkit/cg.hpp"
#include "windkit/linalg.hpp"
#include "windkit/rng.hpp"

using namespace windkit;

namespace {

// Independent dense solver for the oracle side: plain Gauss-Jordan
// elimination with partial pivoting, no shared code with the library path.
std::vector<double> gauss_jordan_solve(Mat a, std::vector<double> b) {
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
            if (f == 0.0) continue;
            for (std::size_t c = 0; c < n; ++c) a(r, c) -= f * a(col, c);
            b[r] -= f * b[col];
        }
    }
    return b;
}

// Random SPD with bounded condition number: Gram matrix plus a diagonal
// shift that scales with the dimension (keeps CG's finite-termination
// property intact in floating point).
Mat random_spd(std::size_t n, RandomStream& rng) {
    Mat g(n, n);
    for (double& v : g.a) v = rng.normal();
    Mat spd = matmul(g, transpose(g));
    const double jitter = 0.5 * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) spd(i, i) += jitter;
    return spd;
}

}  // namespace

TEST_CASE("cholesky solve matches Gauss-Jordan on random SPD systems") {
    RandomStream rng(21);
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 14);
        const Mat spd = random_spd(n, rng);
        std::vector<double> b(n);
        for (double& v : b) v = rng.normal();
        const auto x1 = chol_solve(cholesky(spd), b);
        const auto x2 = gauss_jordan_solve(spd, b);
        for (std::size_t i = 0; i < n; ++i) CHECK(x1[i] == doctest::Approx(x2[i]).epsilon(1e-9));
    }
}

TEST_CASE("cholesky rejects indefinite matrices") {
    Mat m(2, 2);
    m(0, 0) = 1.0;
    m(1, 1) = -1.0;
    CHECK_THROWS_AS(cholesky(m), NumericError);
}

TEST_CASE("cg_solve: identity converges in exactly one iteration") {
    std::vector<double> rhs = {3.0, -1.0, 2.5};
    auto matvec = [](const std::vector<double>& v) { return v; };
    const CgResult r = cg_solve(matvec, rhs, 10, 1e-12);
    CHECK(r.iterations == 1);
    for (std::size_t i = 0; i < rhs.size(); ++i) CHECK(r.x[i] == doctest::Approx(rhs[i]));
}

TEST_CASE("cg_solve: 2x2 hand case lands on [1/11, 7/11] after 2 iterations") {
    Mat a(2, 2);
    a(0, 0) = 4.0;
    a(0, 1) = 1.0;
    a(1, 0) = 1.0;
    a(1, 1) = 3.0;
    std::vector<double> rhs = {1.0, 2.0};
    auto mv = [&](const std::vector<double>& v) { return windkit::matvec(a, v); };
    const CgResult r = cg_solve(mv, rhs, 2, 0.0);
    CHECK(r.iterations == 2);
    CHECK(r.x[0] == doctest::Approx(1.0 / 11.0).epsilon(1e-12));
    CHECK(r.x[1] == doctest::Approx(7.0 / 11.0).epsilon(1e-12));
}

TEST_CASE("cg_solve: exact convergence in <= D iterations on random SPD") {
    RandomStream rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 30);
        const Mat spd = random_spd(n, rng);
        std::vector<double> b(n);
        for (double& v : b) v = rng.normal();
        auto matvec = [&](const std::vector<double>& v) { return windkit::matvec(spd, v); };
        const CgResult r = cg_solve(matvec, b, n, 1e-14);
        const auto exact = gauss_jordan_solve(spd, b);
        double err = 0.0, ref = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            err += (r.x[i] - exact[i]) * (r.x[i] - exact[i]);
            ref += exact[i] * exact[i];
        }
        CHECK(std::sqrt(err / ref) < 1e-8);
        CHECK(r.iterations <= n);
    }
}

TEST_CASE("cg_solve: zero rhs returns zero immediately") {
    std::vector<double> rhs = {0.0, 0.0};
    const CgResult r = cg_solve([](const std::vector<double>& v) { return v; }, rhs, 5);
    CHECK(r.iterations == 0);
    CHECK(r.x == std::vector<double>{0.0, 0.0});
}
