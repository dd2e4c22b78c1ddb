#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "windkit/errors.hpp"
#include "windkit/field.hpp"
#include "windkit/grid.hpp"

namespace windkit {

/// Fair CRPS over an ensemble, one frame-channel at a time:
///   (1/M) sum_m |x_m - x|  -  1/(2M(M-1)) sum_m sum_m' |x_m - x_m'|,
/// area-weighted mean over pixels.
inline double crps(const std::vector<std::span<const double>>& members,
                   std::span<const double> truth, std::span<const double> area) {
    const std::size_t m_count = members.size();
    if (m_count < 2) throw DataError("crps: need at least 2 ensemble members");
    const std::size_t px = truth.size();
    if (area.size() != px) throw DataError("crps: area weight size mismatch");
    for (const auto& m : members)
        if (m.size() != px) throw DataError("crps: member size mismatch");

    const double inv_m = 1.0 / static_cast<double>(m_count);
    const double pair_norm = 1.0 / (2.0 * static_cast<double>(m_count) *
                                    static_cast<double>(m_count - 1));
    double acc = 0.0;
    for (std::size_t p = 0; p < px; ++p) {
        double term1 = 0.0;
        for (const auto& m : members) term1 += std::abs(m[p] - truth[p]);
        term1 *= inv_m;
        double term2 = 0.0;
        for (std::size_t i = 0; i < m_count; ++i)
            for (std::size_t j = 0; j < m_count; ++j)
                term2 += std::abs(members[i][p] - members[j][p]);
        term2 *= pair_norm;
        acc += area[p] * (term1 - term2);
    }
    return acc / static_cast<double>(px);
}

/// Area-weighted root-mean of the unbiased per-pixel ensemble variance.
inline double spread(const std::vector<std::span<const double>>& members,
                     std::span<const double> area) {
    const std::size_t m_count = members.size();
    if (m_count < 2) throw DataError("spread: need at least 2 ensemble members");
    const std::size_t px = area.size();
    double acc = 0.0;
    for (std::size_t p = 0; p < px; ++p) {
        double mean = 0.0;
        for (const auto& m : members) mean += m[p];
        mean /= static_cast<double>(m_count);
        double var = 0.0;
        for (const auto& m : members) var += (m[p] - mean) * (m[p] - mean);
        var /= static_cast<double>(m_count - 1);
        acc += area[p] * var;
    }
    return std::sqrt(acc / static_cast<double>(px));
}

/// Area-weighted RMSE of the ensemble mean against truth.
inline double skill(const std::vector<std::span<const double>>& members,
                    std::span<const double> truth, std::span<const double> area) {
    const std::size_t m_count = members.size();
    if (m_count < 2) throw DataError("skill: need at least 2 ensemble members");
    const std::size_t px = truth.size();
    double acc = 0.0;
    for (std::size_t p = 0; p < px; ++p) {
        double mean = 0.0;
        for (const auto& m : members) mean += m[p];
        mean /= static_cast<double>(m_count);
        acc += area[p] * (mean - truth[p]) * (mean - truth[p]);
    }
    return std::sqrt(acc / static_cast<double>(px));
}

/// Spread-skill ratio with the sqrt((M+1)/M) inflation. Zero skill with
/// nonzero spread reports +infinity.
inline double ssr(const std::vector<std::span<const double>>& members,
                  std::span<const double> truth, std::span<const double> area) {
    const double sp = spread(members, area);
    const double sk = skill(members, truth, area);
    const double m_count = static_cast<double>(members.size());
    if (sk == 0.0)
        return sp == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return std::sqrt((m_count + 1.0) / m_count) * sp / sk;
}

/// Area-weighted RMSE of a single prediction.
inline double rmse_weighted(std::span<const double> pred, std::span<const double> truth,
                            std::span<const double> area) {
    if (pred.size() != truth.size() || pred.size() != area.size())
        throw DataError("rmse_weighted: size mismatch");
    double acc = 0.0;
    for (std::size_t p = 0; p < pred.size(); ++p)
        acc += area[p] * (pred[p] - truth[p]) * (pred[p] - truth[p]);
    return std::sqrt(acc / static_cast<double>(pred.size()));
}

/// Zonal power spectrum: DFT along longitude per latitude row, one-sided
/// power per integer wavenumber 0..W/2, area-weighted average over rows.
/// Normalized so the total power equals the weighted mean of the row-wise
/// sum of squares (Parseval).
inline std::vector<double> zonal_psd(std::span<const double> field, const GridSpec& grid,
                                     std::span<const double> area) {
    const std::size_t h = grid.n_lat(), w = grid.n_lon();
    if (w < 4) throw DataError("zonal_psd: need at least 4 longitudes");
    if (field.size() != h * w || area.size() != h * w)
        throw DataError("zonal_psd: field size mismatch");
    constexpr double two_pi = 2.0 * 3.14159265358979323846;
    const std::size_t n_wave = w / 2 + 1;

    // Precomputed twiddles; W is small at desk scale so a direct transform
    // is plenty.
    std::vector<double> cs(w * w), sn(w * w);
    for (std::size_t k = 0; k < w; ++k)
        for (std::size_t j = 0; j < w; ++j) {
            const double phase = two_pi * static_cast<double>(k * j % w) /
                                 static_cast<double>(w);
            cs[k * w + j] = std::cos(phase);
            sn[k * w + j] = std::sin(phase);
        }

    std::vector<double> power(n_wave, 0.0);
    double weight_sum = 0.0;
    for (std::size_t i = 0; i < h; ++i) {
        const double row_w = area[i * w];  // all cells in a row share the weight
        weight_sum += row_w;
        for (std::size_t k = 0; k < w; ++k) {
            double re = 0.0, im = 0.0;
            for (std::size_t j = 0; j < w; ++j) {
                re += field[i * w + j] * cs[k * w + j];
                im -= field[i * w + j] * sn[k * w + j];
            }
            const double p = (re * re + im * im) / static_cast<double>(w);
            const std::size_t bin = k <= w / 2 ? k : w - k;
            power[bin] += row_w * p;
        }
    }
    for (double& p : power) p /= weight_sum;
    return power;
}

struct HistogramCounts {
    std::size_t underflow = 0;
    std::vector<std::size_t> counts;  // per [edges[i], edges[i+1]) bin
    std::size_t overflow = 0;

    std::size_t total() const {
        std::size_t t = underflow + overflow;
        for (auto c : counts) t += c;
        return t;
    }
};

/// Left-closed binning over sorted edges; out-of-range values land in the
/// underflow/overflow slots.
inline HistogramCounts histogram_counts(std::span<const double> values,
                                        std::span<const double> edges) {
    if (edges.size() < 2) throw DataError("histogram_counts: need at least 2 edges");
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1]))
            throw DataError("histogram_counts: edges must be strictly increasing");
    HistogramCounts h;
    h.counts.assign(edges.size() - 1, 0);
    for (double v : values) {
        if (v < edges.front()) {
            ++h.underflow;
        } else if (v >= edges.back()) {
            ++h.overflow;
        } else {
            // binary search for the bin with edges[b] <= v < edges[b+1]
            std::size_t lo = 0, hi = edges.size() - 1;
            while (hi - lo > 1) {
                const std::size_t mid = (lo + hi) / 2;
                if (v >= edges[mid])
                    lo = mid;
                else
                    hi = mid;
            }
            ++h.counts[lo];
        }
    }
    return h;
}

/// Named scalar metrics per channel and lead time, with provenance.
struct MetricReport {
    struct Row {
        std::string channel;
        double lead_hours = 0.0;
        std::string metric;
        double value = 0.0;
    };
    std::vector<Row> rows;
    std::string config_hash;
    std::uint64_t seed = 0;

    void add(std::string channel, double lead_hours, std::string metric, double value) {
        if (!std::isfinite(value))
            throw NumericError("MetricReport: non-finite value for metric '" + metric + "'");
        rows.push_back({std::move(channel), lead_hours, std::move(metric), value});
    }

    void write_csv(std::ostream& os) const {
        os << "channel,lead_hours,metric,value\n";
        os.precision(17);
        for (const auto& r : rows)
            os << r.channel << "," << r.lead_hours << "," << r.metric << "," << r.value << "\n";
    }

    nlohmann::json provenance() const {
        nlohmann::json j;
        j["config_hash"] = config_hash;
        j["seed"] = seed;
        return j;
    }
};

}  // namespace windkit
