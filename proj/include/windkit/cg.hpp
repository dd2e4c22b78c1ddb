#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "windkit/errors.hpp"

namespace windkit {

using MatVec = std::function<std::vector<double>(const std::vector<double>&)>;

struct CgResult {
    std::vector<double> x;
    std::size_t iterations = 0;
    double rel_residual = 0.0;
};

/// Conjugate gradients from a zero initial guess on a matrix-free SPD map.
/// Runs min(max_iters, early-exit-on-tol) iterations; tol is relative to
/// the right-hand-side norm.
inline CgResult cg_solve(const MatVec& matvec, std::span<const double> rhs,
                         std::size_t max_iters, double tol = 1e-6) {
    if (max_iters < 1) throw ConfigError("cg_solve: need at least one iteration");
    const std::size_t n = rhs.size();
    CgResult res;
    res.x.assign(n, 0.0);

    std::vector<double> r(rhs.begin(), rhs.end());
    std::vector<double> p = r;
    double rr = 0.0;
    for (double v : r) rr += v * v;
    const double rhs_norm = std::sqrt(rr);
    if (rhs_norm == 0.0) return res;

    for (std::size_t it = 0; it < max_iters; ++it) {
        const std::vector<double> ap = matvec(p);
        double pap = 0.0;
        for (std::size_t i = 0; i < n; ++i) pap += p[i] * ap[i];
        if (!std::isfinite(pap) || pap == 0.0)
            throw NumericError("cg_solve: breakdown at iteration " + std::to_string(it) +
                               " (p'Ap = " + std::to_string(pap) + ")");
        const double step = rr / pap;
        for (std::size_t i = 0; i < n; ++i) {
            res.x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        double rr_new = 0.0;
        for (double v : r) rr_new += v * v;
        if (!std::isfinite(rr_new))
            throw NumericError("cg_solve: non-finite residual at iteration " +
                               std::to_string(it));
        res.iterations = it + 1;
        res.rel_residual = std::sqrt(rr_new) / rhs_norm;
        if (res.rel_residual <= tol) return res;
        const double dir_update = rr_new / rr;
        rr = rr_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + dir_update * p[i];
    }
    return res;
}

}  // namespace windkit
