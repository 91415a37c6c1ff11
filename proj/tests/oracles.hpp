#ifndef SYNCKERNEL_TEST_ORACLES_HPP
#define SYNCKERNEL_TEST_ORACLES_HPP

// Brute-force reference implementations used as test oracles.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "synckernel/data.hpp"

namespace oracle {

using synckernel::Matrix;
using synckernel::Vector;

/// Best 2x2 orthogonal matrix for ||X - O Y||_F by scanning rotation angles at
/// the given step, for both the rotation and the reflection branch.
inline Matrix procrustes_2x2_scan(const Matrix& x, const Matrix& y, double step = 1e-5) {
    const Matrix m = x * y.transpose();  // maximize trace(O^T M)
    double best = -std::numeric_limits<double>::infinity();
    Matrix best_o(2, 2);
    const auto n_steps = static_cast<long>(std::ceil(2.0 * std::numbers::pi / step));
    for (long k = 0; k < n_steps; ++k) {
        const double th = static_cast<double>(k) * step;
        const double c = std::cos(th), s = std::sin(th);
        // rotation [[c,-s],[s,c]] and reflection [[c,s],[s,-c]]
        const double rot = c * m(0, 0) - s * m(0, 1) + s * m(1, 0) + c * m(1, 1);
        const double ref = c * m(0, 0) + s * m(0, 1) + s * m(1, 0) - c * m(1, 1);
        if (rot > best) {
            best = rot;
            best_o << c, -s, s, c;
        }
        if (ref > best) {
            best = ref;
            best_o << c, s, s, -c;
        }
    }
    return best_o;
}

/// Step-up BH straight from the definition: q_i = min over every p_k >= p_i of
/// min(1, p_k * (m / #{p <= p_k})). O(m^2).
inline std::vector<double> bh_bruteforce(const std::vector<double>& p) {
    std::size_t m = 0;
    for (double v : p)
        if (!std::isnan(v)) ++m;
    std::vector<std::size_t> rank(p.size(), 0);
    for (std::size_t k = 0; k < p.size(); ++k)
        for (double v : p)
            if (!std::isnan(p[k]) && !std::isnan(v) && v <= p[k]) ++rank[k];
    std::vector<double> q(p.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (std::isnan(p[i])) continue;
        double best = 1.0;
        for (std::size_t k = 0; k < p.size(); ++k) {
            if (std::isnan(p[k]) || p[k] < p[i]) continue;
            best = std::min(best, p[k] * (static_cast<double>(m) / static_cast<double>(rank[k])));
        }
        q[i] = best;
    }
    return q;
}

/// Leave-one-out residuals recomputed from scratch for each held-out subject.
inline Vector loo_naive(const Matrix& dist, const Vector& y, double gamma) {
    const auto n = y.size();
    Vector r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<double> d_rest, y_rest;
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) {
                d_rest.push_back(dist(i, j));
                y_rest.push_back(y[j]);
            }
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < d_rest.size(); ++k) {
            const double w = std::exp(-gamma * d_rest[k]);
            num += w * y_rest[k];
            den += w;
        }
        r[i] = y[i] - num / den;
    }
    return r;
}

inline double sample_variance(const Vector& r) {
    const double mean = r.mean();
    return (r.array() - mean).square().sum() / static_cast<double>(r.size() - 1);
}

}  // namespace oracle

#endif
