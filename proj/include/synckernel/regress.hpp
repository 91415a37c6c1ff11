#ifndef SYNCKERNEL_REGRESS_HPP
#define SYNCKERNEL_REGRESS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "synckernel/metric.hpp"
#include "synckernel/parallel.hpp"
#include "synckernel/rng.hpp"

namespace synckernel {

namespace detail {

/// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            c_ += (sum_ - t) + x;
        else
            c_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + c_; }

private:
    double sum_ = 0.0;
    double c_ = 0.0;
};

}  // namespace detail

/// Nadaraya-Watson estimate sum(w_i y_i) / sum(w_i) with w_i = exp(-gamma d_i).
///
/// Weights are evaluated relative to the smallest distance; the common factor
/// cancels in the ratio and keeps large gamma from underflowing every weight.
/// NaN distances are ignored.
inline double nw_predict(std::span<const double> distances, std::span<const double> y, double gamma) {
    if (distances.empty()) throw DataError("nw_predict: empty training set");
    if (distances.size() != y.size())
        throw DimensionError("nw_predict: " + std::to_string(distances.size()) + " distances vs " +
                             std::to_string(y.size()) + " scores");
    detail::require_gamma(gamma);
    double d_min = std::numeric_limits<double>::infinity();
    for (double d : distances)
        if (!std::isnan(d)) d_min = std::min(d_min, d);
    if (std::isinf(d_min)) throw DataError("nw_predict: all distances are NaN");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < distances.size(); ++i) {
        if (std::isnan(distances[i])) continue;
        const double w = std::exp(-gamma * (distances[i] - d_min));
        num += w * y[i];
        den += w;
    }
    return num / den;
}

/// Leave-one-out residuals r_i = y_i - sum_{j != i} K_ij y_j / sum_{j != i} K_ij.
/// A row whose off-diagonal weights sum to zero yields NaN for that subject.
inline Vector loo_residuals(const KernelMatrix& kernel, const Vector& y) {
    const auto n = kernel.weights.rows();
    if (n < 2) throw DataError("loo_residuals: need N >= 2, got N=" + std::to_string(n));
    if (kernel.weights.cols() != n || y.size() != n)
        throw DimensionError("loo_residuals: kernel is " + std::to_string(n) + "x" +
                             std::to_string(kernel.weights.cols()) + ", scores length " + std::to_string(y.size()));
    Vector r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double num = 0.0, den = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            num += kernel.weights(i, j) * y[j];
            den += kernel.weights(i, j);
        }
        r[i] = den > 0.0 ? y[i] - num / den : std::numeric_limits<double>::quiet_NaN();
    }
    return r;
}

/// Ascending bandwidth values with the LOO error of each and the selected one.
struct BandwidthGrid {
    std::vector<double> values;
    std::vector<double> loo_mse;
    std::optional<double> selected;

    /// n log-spaced values in [low, high].
    static BandwidthGrid log_spaced(double low, double high, std::size_t n) {
        if (n == 0 || !(low > 0.0) || !(high >= low)) throw UsageError("bandwidth grid needs n >= 1 and 0 < low <= high");
        BandwidthGrid g;
        if (n == 1) {
            g.values = {low};
            return g;
        }
        const double step = std::log(high / low) / static_cast<double>(n - 1);
        for (std::size_t k = 0; k < n; ++k) g.values.push_back(low * std::exp(step * static_cast<double>(k)));
        g.values.back() = high;
        return g;
    }

    static BandwidthGrid defaults() { return log_spaced(0.1, 10.0, 50); }

    void validate() const {
        if (values.empty()) throw UsageError("bandwidth grid is empty");
        for (std::size_t k = 0; k < values.size(); ++k) {
            if (!(values[k] > 0.0) || !std::isfinite(values[k])) throw UsageError("bandwidth grid values must be positive");
            if (k > 0 && !(values[k] > values[k - 1])) throw UsageError("bandwidth grid must be strictly ascending");
        }
    }
};

/// min(count, non-excluded vertices) vertices drawn without replacement, sorted.
inline std::vector<std::size_t> sample_vertices(const std::vector<bool>& excluded, std::size_t count, std::uint64_t seed) {
    std::vector<std::size_t> pool;
    for (std::size_t v = 0; v < excluded.size(); ++v)
        if (!excluded[v]) pool.push_back(v);
    if (pool.size() > count) {
        Rng rng(seed, streams::bandwidth_vertices);
        for (std::size_t k = 0; k < count; ++k) {
            const auto j = k + static_cast<std::size_t>(rng.index(pool.size() - k));
            std::swap(pool[k], pool[j]);
        }
        pool.resize(count);
        std::sort(pool.begin(), pool.end());
    }
    return pool;
}

/// LOO grid search: for each gamma, the mean squared LOO residual pooled over
/// (subject, vertex) pairs of the sampled vertices. Undefined residuals are left
/// out; a gamma with none defined scores +infinity. Ties go to the smaller gamma.
inline BandwidthGrid select_bandwidth(const DistanceTensor& d, const Vector& y, BandwidthGrid grid,
                                      const std::vector<std::size_t>& vertex_sample, Parallelism par = {}) {
    grid.validate();
    if (d.kind() != DistanceKind::geodesic) throw UsageError("select_bandwidth needs geodesic distances");
    d.require_full("select_bandwidth");
    if (static_cast<std::size_t>(y.size()) != d.n_subjects())
        throw DimensionError("select_bandwidth: scores length " + std::to_string(y.size()) + " vs N=" +
                             std::to_string(d.n_subjects()));
    if (vertex_sample.empty()) throw UsageError("select_bandwidth: empty vertex sample");
    for (auto v : vertex_sample)
        if (v >= d.n_vertices() || d.excluded(v))
            throw UsageError("select_bandwidth: vertex " + std::to_string(v) + " is out of range or excluded");

    const std::size_t n_grid = grid.values.size();
    const std::size_t n_vert = vertex_sample.size();
    // partial sums per (gamma, vertex), reduced afterwards in a fixed order
    std::vector<double> sq_sum(n_grid * n_vert);
    std::vector<std::size_t> defined(n_grid * n_vert);
    parallel_for(n_grid * n_vert, par, [&](std::size_t task) {
        const std::size_t g = task / n_vert;
        const std::size_t k = task % n_vert;
        const auto r = loo_residuals(kernel_at_vertex(d, vertex_sample[k], grid.values[g]), y);
        detail::CompensatedSum s;
        std::size_t count = 0;
        for (double ri : r)
            if (!std::isnan(ri)) {
                s.add(ri * ri);
                ++count;
            }
        sq_sum[task] = s.value();
        defined[task] = count;
    });

    grid.loo_mse.assign(n_grid, std::numeric_limits<double>::infinity());
    for (std::size_t g = 0; g < n_grid; ++g) {
        detail::CompensatedSum s;
        std::size_t count = 0;
        for (std::size_t k = 0; k < n_vert; ++k) {
            s.add(sq_sum[g * n_vert + k]);
            count += defined[g * n_vert + k];
        }
        if (count > 0) grid.loo_mse[g] = s.value() / static_cast<double>(count);
    }
    std::size_t best = 0;
    for (std::size_t g = 1; g < n_grid; ++g)
        if (grid.loo_mse[g] < grid.loo_mse[best]) best = g;
    if (std::isinf(grid.loo_mse[best])) throw SelectionError("select_bandwidth: no bandwidth yields a defined LOO residual");
    grid.selected = grid.values[best];
    return grid;
}

inline void write_bandwidth_tsv(std::ostream& out, const BandwidthGrid& grid) {
    out << "gamma\tloo_mse\n";
    for (std::size_t k = 0; k < grid.values.size(); ++k)
        out << format_float(grid.values[k]) << '\t'
            << format_float(k < grid.loo_mse.size() ? grid.loo_mse[k] : std::numeric_limits<double>::quiet_NaN()) << '\n';
    if (grid.selected) out << "selected\t" << format_float(*grid.selected) << '\n';
}

}  // namespace synckernel

#endif  // SYNCKERNEL_REGRESS_HPP
