#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "windkit/denoiser.hpp"
#include "windkit/errors.hpp"
#include "windkit/field.hpp"
#include "windkit/linalg.hpp"
#include "windkit/schedule.hpp"

namespace windkit {

/// Exactly solvable prior over a flattened small sequence: x ~ N(mean, cov).
struct GaussianPrior {
    std::vector<double> mean;
    Mat covariance;

    void validate() const {
        if (covariance.rows != covariance.cols || covariance.rows != mean.size())
            throw DataError("GaussianPrior: covariance must be DxD with D = mean size");
        cholesky(covariance);  // SPD check
    }

    static GaussianPrior isotropic(std::size_t dim, double variance) {
        GaussianPrior p;
        p.mean.assign(dim, 0.0);
        p.covariance = Mat::identity(dim);
        for (std::size_t i = 0; i < dim; ++i) p.covariance(i, i) = variance;
        return p;
    }
};

namespace detail {

class GaussianLinearization final : public DenoiserLinearization {
public:
    GaussianLinearization(const GaussianPrior& prior, const FieldSequence& z,
                          std::vector<double> a, std::vector<double> b)
        : prior_(prior), a_(std::move(a)) {
        const std::size_t d = prior_.mean.size();
        if (z.values.size() != d)
            throw DataError("GaussianDenoiser: z size != prior dimension");
        Mat m(d, d);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                m(i, j) = a_[i] * prior_.covariance(i, j) * a_[j];
        for (std::size_t i = 0; i < d; ++i) m(i, i) += b[i] * b[i];
        chol_m_ = cholesky(m);

        std::vector<double> resid(d);
        for (std::size_t i = 0; i < d; ++i) resid[i] = z.values[i] - a_[i] * prior_.mean[i];
        const auto w = chol_solve(chol_m_, resid);
        xhat_ = FieldSequence::zeros(z.grid, z.channels, z.frames, z.stride_hours);
        xhat_.values = apply_sigma_a(w);
        for (std::size_t i = 0; i < d; ++i) xhat_.values[i] += prior_.mean[i];
    }

    const FieldSequence& value() const override { return xhat_; }

    // J u = Sigma A M^{-1} u
    FieldSequence jvp(const FieldSequence& u) const override {
        auto w = chol_solve(chol_m_, u.values);
        FieldSequence out = like_xhat();
        out.values = apply_sigma_a(w);
        return out;
    }

    // J^T v = M^{-1} A Sigma v
    FieldSequence vjp(const FieldSequence& v) const override {
        const std::size_t d = prior_.mean.size();
        std::vector<double> sv(d, 0.0);
        for (std::size_t i = 0; i < d; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += prior_.covariance(i, j) * v.values[j];
            sv[i] = a_[i] * s;
        }
        FieldSequence out = like_xhat();
        out.values = chol_solve(chol_m_, sv);
        return out;
    }

private:
    FieldSequence like_xhat() const {
        return FieldSequence::zeros(xhat_.grid, xhat_.channels, xhat_.frames, xhat_.stride_hours);
    }

    std::vector<double> apply_sigma_a(std::span<const double> w) const {
        const std::size_t d = prior_.mean.size();
        std::vector<double> out(d, 0.0);
        for (std::size_t i = 0; i < d; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += prior_.covariance(i, j) * a_[j] * w[j];
            out[i] = s;
        }
        return out;
    }

    GaussianPrior prior_;
    std::vector<double> a_;
    Mat chol_m_;
    FieldSequence xhat_;
};

}  // namespace detail

/// Closed-form posterior-mean denoiser for a Gaussian prior. With per-frame
/// diagonal A = diag(alpha(k^t)) and B = diag(beta(k^t)) expanded per element,
///   xhat(z) = mu + Sigma A M^{-1} (z - A mu),   M = A Sigma A + B^2,
/// and the Jacobian d xhat / d z = Sigma A M^{-1}.
class GaussianDenoiser final : public Denoiser {
public:
    GaussianDenoiser(GaussianPrior prior, FieldSequence shape, ScheduleParams sched = {})
        : prior_(std::move(prior)), shape_(std::move(shape)), sched_(sched) {
        if (prior_.mean.size() != shape_.size())
            throw DataError("GaussianDenoiser: prior dimension != sequence size");
        prior_.validate();
    }

    const GaussianPrior& prior() const { return prior_; }

    FieldSequence denoise(const FieldSequence& z, const NoiseLevels& k) const override {
        return linearize(z, k)->value();
    }

    std::unique_ptr<DenoiserLinearization> linearize(const FieldSequence& z,
                                                     const NoiseLevels& k) const override {
        auto [a, b] = per_element_coeffs(k);
        return std::make_unique<detail::GaussianLinearization>(prior_, z, std::move(a),
                                                               std::move(b));
    }

    /// Marginal distribution of z at noise levels k: N(A mu, A Sigma A + B^2).
    std::pair<std::vector<double>, Mat> marginal(const NoiseLevels& k) const {
        const auto [a, b] = per_element_coeffs(k);
        const std::size_t d = prior_.mean.size();
        std::vector<double> mean(d);
        for (std::size_t i = 0; i < d; ++i) mean[i] = a[i] * prior_.mean[i];
        Mat cov(d, d);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                cov(i, j) = a[i] * prior_.covariance(i, j) * a[j];
        for (std::size_t i = 0; i < d; ++i) cov(i, i) += b[i] * b[i];
        return {std::move(mean), std::move(cov)};
    }

    std::pair<std::vector<double>, std::vector<double>> per_element_coeffs(
        const NoiseLevels& k) const {
        if (k.k.size() != shape_.frames)
            throw DataError("GaussianDenoiser: noise level count != frames");
        const std::size_t fs = shape_.frame_size(), d = shape_.size();
        std::vector<double> a(d), b(d);
        for (std::size_t t = 0; t < shape_.frames; ++t) {
            const double at = alpha(k.k[t], sched_), bt = beta(k.k[t], sched_);
            for (std::size_t i = 0; i < fs; ++i) {
                a[t * fs + i] = at;
                b[t * fs + i] = bt;
            }
        }
        return {std::move(a), std::move(b)};
    }

private:
    GaussianPrior prior_;
    FieldSequence shape_;
    ScheduleParams sched_;
};

}  // namespace windkit
