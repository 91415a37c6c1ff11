#ifndef SYNCKERNEL_STATS_HPP
#define SYNCKERNEL_STATS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <vector>

#include <boost/math/distributions/fisher_f.hpp>

#include "synckernel/metric.hpp"
#include "synckernel/parallel.hpp"
#include "synckernel/regress.hpp"
#include "synckernel/rng.hpp"

namespace synckernel {

/// Sample Pearson correlation. Throws DegenerateError when either input is constant.
inline double pearson_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("pearson_correlation: lengths differ");
    if (a.size() < 3) throw DataError("pearson_correlation: need at least 3 observations");
    const auto n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) throw DegenerateError("pearson_correlation: constant input vector");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// Distinct unordered subject pairs with their score differences |y_i - y_j|.
struct PairSample {
    std::vector<SubjectPair> pairs;
    std::uint64_t seed = 0;
    std::vector<double> d_t;
};

inline std::size_t pair_count(std::size_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }

/// Uniform sample of n_pairs distinct unordered pairs without replacement,
/// returned in lexicographic order.
inline PairSample sample_pairs(std::size_t n_subjects, std::size_t n_pairs, const Vector& y, std::uint64_t seed) {
    const std::size_t total = pair_count(n_subjects);
    if (n_pairs > total)
        throw UsageError("cannot sample " + std::to_string(n_pairs) + " distinct pairs from N=" +
                         std::to_string(n_subjects) + " (at most " + std::to_string(total) + ")");
    if (static_cast<std::size_t>(y.size()) != n_subjects) throw DimensionError("sample_pairs: scores length differs from N");
    auto pool = detail::all_pairs(n_subjects);
    Rng rng(seed, streams::pair_sample);
    for (std::size_t k = 0; k < n_pairs; ++k) {
        const auto j = k + static_cast<std::size_t>(rng.index(total - k));
        std::swap(pool[k], pool[j]);
    }
    pool.resize(n_pairs);
    std::sort(pool.begin(), pool.end());
    PairSample s{std::move(pool), seed, {}};
    for (const auto& [i, j] : s.pairs)
        s.d_t.push_back(std::abs(y[static_cast<Eigen::Index>(i)] - y[static_cast<Eigen::Index>(j)]));
    return s;
}

struct TestConfig {
    std::size_t n_permutations = 2000;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    double gamma = 2.6;
    bool parametric_f = false;
    Parallelism parallelism{};

    void validate() const {
        if (n_permutations < 1) throw UsageError("number of permutations must be >= 1");
        if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0, 1)");
        detail::require_gamma(gamma);
    }
};

/// B permutations of [0, n) drawn from one stream; shared by every vertex.
inline std::vector<std::vector<std::size_t>> permutation_schedule(std::size_t n, std::size_t count, std::uint64_t seed,
                                                                  std::uint64_t stream) {
    Rng rng(seed, stream);
    std::vector<std::vector<std::size_t>> out(count);
    for (auto& p : out) p = rng.permutation(n);
    return out;
}

struct FdrResult {
    std::vector<double> q;
    std::vector<bool> rejected;
};

/// Benjamini-Hochberg step-up adjustment. NaN entries pass through as NaN and do
/// not count toward m. q_(i) = min_{j >= i} min(1, p_(j) * (m / j)); the factor
/// m / j is formed first so that q >= p holds exactly in floating point.
inline FdrResult bh_fdr(std::span<const double> p, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("bh_fdr: alpha must lie in (0, 1)");
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (std::isnan(p[i])) continue;
        if (p[i] < 0.0 || p[i] > 1.0) throw DataError("bh_fdr: p-value outside [0, 1]");
        order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
    FdrResult out{std::vector<double>(p.size(), std::numeric_limits<double>::quiet_NaN()), std::vector<bool>(p.size(), false)};
    const auto m = static_cast<double>(order.size());
    double running = 1.0;
    for (std::size_t rank = order.size(); rank-- > 0;) {
        const std::size_t idx = order[rank];
        running = std::min(running, p[idx] * (m / static_cast<double>(rank + 1)));
        out.q[idx] = running;
        out.rejected[idx] = running <= alpha;
    }
    return out;
}

namespace detail {
inline void finalize_statmap(StatMap& map) {
    auto fdr = bh_fdr(map.p_value, map.alpha);
    map.q_value = std::move(fdr.q);
    map.rejected = std::move(fdr.rejected);
}

inline bool constant_vector(const Vector& y) { return y.size() == 0 || y.maxCoeff() == y.minCoeff(); }
}  // namespace detail

/// Pairwise distance-correlation test.
///
/// Per vertex the statistic is the Pearson correlation between the pair
/// distances and d_T over the sampled pairs. Each permutation relabels subject
/// scores and recomputes d_T; p = (1 + #{|r_perm| >= |r_obs|}) / (B + 1).
/// Vertices whose distances are constant across pairs get p = 1.
inline StatMap pairwise_correlation_test(const DistanceTensor& d, const PairSample& sample, const Vector& y,
                                         const TestConfig& cfg) {
    cfg.validate();
    if (!d.is_sampled() || d.pairs() != sample.pairs)
        throw UsageError("pairwise_correlation_test: tensor must cover exactly the sampled pairs");
    if (d.kind() != DistanceKind::euclidean_sq) throw UsageError("pairwise_correlation_test needs euclidean_sq distances");
    if (static_cast<std::size_t>(y.size()) != d.n_subjects()) throw DimensionError("pairwise_correlation_test: scores length differs from N");
    if (detail::constant_vector(y)) throw DegenerateError("pairwise_correlation_test: all subject scores are equal");
    const std::size_t n_pairs = sample.pairs.size();
    if (n_pairs < 3) throw DataError("pairwise_correlation_test: need at least 3 pairs");

    const std::size_t b_total = cfg.n_permutations + 1;
    const auto schedule = permutation_schedule(d.n_subjects(), cfg.n_permutations, cfg.seed, streams::pairwise_permutations);
    // centered, unit-norm d_T for the observed labels (column 0) and every permutation
    std::vector<double> dt(n_pairs * b_total);
    for (std::size_t b = 0; b < b_total; ++b) {
        std::vector<double> col(n_pairs);
        for (std::size_t k = 0; k < n_pairs; ++k) {
            auto [i, j] = sample.pairs[k];
            if (b > 0) {
                i = schedule[b - 1][i];
                j = schedule[b - 1][j];
            }
            col[k] = std::abs(y[static_cast<Eigen::Index>(i)] - y[static_cast<Eigen::Index>(j)]);
        }
        const double mean = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(n_pairs);
        double ss = 0.0;
        for (auto& c : col) {
            c -= mean;
            ss += c * c;
        }
        const double scale = ss > 0.0 ? 1.0 / std::sqrt(ss) : 0.0;
        for (std::size_t k = 0; k < n_pairs; ++k) dt[k * b_total + b] = col[k] * scale;
    }

    auto map = StatMap::sized(d.n_vertices(), cfg.alpha);
    parallel_for(d.n_vertices(), cfg.parallelism, [&](std::size_t v) {
        if (d.excluded(v)) {
            map.excluded[v] = true;
            return;
        }
        const auto df = d.pair_values(v);
        const double mean = std::accumulate(df.begin(), df.end(), 0.0) / static_cast<double>(n_pairs);
        double ss = 0.0, scale_ref = 0.0;
        std::vector<double> centered(n_pairs);
        for (std::size_t k = 0; k < n_pairs; ++k) {
            centered[k] = df[k] - mean;
            ss += centered[k] * centered[k];
            scale_ref = std::max(scale_ref, std::abs(df[k]));
        }
        // constant up to rounding
        if (ss <= static_cast<double>(n_pairs) * std::pow(1e-12 * scale_ref, 2) || ss == 0.0) {
            map.statistic[v] = 0.0;
            map.p_value[v] = 1.0;
            return;
        }
        std::vector<double> r(b_total, 0.0);
        for (std::size_t k = 0; k < n_pairs; ++k) {
            const double a = centered[k];
            const double* row = dt.data() + k * b_total;
            for (std::size_t b = 0; b < b_total; ++b) r[b] += a * row[b];
        }
        const double inv = 1.0 / std::sqrt(ss);
        const double r_obs = std::abs(r[0] * inv);
        std::size_t count = 0;
        for (std::size_t b = 1; b < b_total; ++b)
            if (std::abs(r[b] * inv) >= r_obs) ++count;
        map.statistic[v] = std::clamp(r[0] * inv, -1.0, 1.0);
        map.p_value[v] = static_cast<double>(1 + count) / static_cast<double>(b_total);
    });
    detail::finalize_statmap(map);
    return map;
}

/// Kernel-regression residual-variance test.
///
/// Per vertex, the LOO Nadaraya-Watson residual variance under the observed
/// scores is compared with the variance under each shared permutation:
/// p = (1 + #{var_perm <= var_obs}) / (B + 1), statistic = mean(var_perm / var_obs).
/// With parametric_f, p is instead the upper tail of F(N-1, N-1) at the statistic.
inline StatMap kernel_regression_test(const DistanceTensor& d, const Vector& y, const TestConfig& cfg) {
    cfg.validate();
    if (d.kind() != DistanceKind::geodesic) throw UsageError("kernel_regression_test needs geodesic distances");
    d.require_full("kernel_regression_test");
    const std::size_t n = d.n_subjects();
    if (n < 3) throw DataError("kernel_regression_test: need N >= 3, got N=" + std::to_string(n));
    if (static_cast<std::size_t>(y.size()) != n) throw DimensionError("kernel_regression_test: scores length differs from N");

    auto map = StatMap::sized(d.n_vertices(), cfg.alpha);
    const bool constant_scores = detail::constant_vector(y);
    const std::size_t b_total = cfg.n_permutations + 1;
    const auto schedule = permutation_schedule(n, cfg.n_permutations, cfg.seed, streams::kernel_permutations);
    // row-major N x (B+1): observed scores in column 0
    std::vector<double> ys(n * b_total);
    for (std::size_t i = 0; i < n; ++i) {
        ys[i * b_total] = y[static_cast<Eigen::Index>(i)];
        for (std::size_t b = 1; b < b_total; ++b) ys[i * b_total + b] = y[static_cast<Eigen::Index>(schedule[b - 1][i])];
    }
    const boost::math::fisher_f f_dist(static_cast<double>(n - 1), static_cast<double>(n - 1));

    parallel_for(d.n_vertices(), cfg.parallelism, [&](std::size_t v) {
        if (d.excluded(v)) {
            map.excluded[v] = true;
            return;
        }
        if (constant_scores) {
            map.statistic[v] = 1.0;
            map.p_value[v] = 1.0;
            return;
        }
        const auto dist = d.block(v);
        std::vector<double> residual(n * b_total);
        std::vector<double> acc(b_total);
        std::vector<char> defined(n, 0);
        std::size_t n_defined = 0;
        for (std::size_t i = 0; i < n; ++i) {
            std::fill(acc.begin(), acc.end(), 0.0);
            double den = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double w = std::exp(-cfg.gamma * dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
                den += w;
                const double* yj = ys.data() + j * b_total;
                for (std::size_t b = 0; b < b_total; ++b) acc[b] += w * yj[b];
            }
            if (!(den > 0.0)) continue;
            defined[i] = 1;
            ++n_defined;
            const double* yi = ys.data() + i * b_total;
            double* ri = residual.data() + i * b_total;
            for (std::size_t b = 0; b < b_total; ++b) ri[b] = yi[b] - acc[b] / den;
        }
        if (n_defined < 2) {
            map.statistic[v] = 1.0;
            map.p_value[v] = 1.0;
            return;
        }
        std::vector<double> mean(b_total, 0.0), var(b_total, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            if (defined[i])
                for (std::size_t b = 0; b < b_total; ++b) mean[b] += residual[i * b_total + b];
        for (auto& m : mean) m /= static_cast<double>(n_defined);
        for (std::size_t i = 0; i < n; ++i)
            if (defined[i])
                for (std::size_t b = 0; b < b_total; ++b) {
                    const double e = residual[i * b_total + b] - mean[b];
                    var[b] += e * e;
                }
        for (auto& s : var) s /= static_cast<double>(n_defined - 1);

        const double obs = var[0];
        std::size_t count = 0;
        bool all_zero = obs == 0.0;
        double f_sum = 0.0;
        for (std::size_t b = 1; b < b_total; ++b) {
            if (var[b] <= obs) ++count;
            if (var[b] != 0.0) all_zero = false;
            if (obs > 0.0) f_sum += var[b] / obs;
        }
        if (all_zero) {
            map.statistic[v] = 1.0;
            map.p_value[v] = 1.0;
            return;
        }
        // a perfect observed fit against imperfect permuted fits
        const double stat = obs > 0.0 ? f_sum / static_cast<double>(cfg.n_permutations)
                                      : std::numeric_limits<double>::infinity();
        map.statistic[v] = stat;
        if (cfg.parametric_f)
            map.p_value[v] = std::isinf(stat) ? 0.0 : boost::math::cdf(boost::math::complement(f_dist, stat));
        else
            map.p_value[v] = static_cast<double>(1 + count) / static_cast<double>(b_total);
    });
    detail::finalize_statmap(map);
    return map;
}

enum class TestMethod { pairwise, kernel };

inline TestMethod parse_method(const std::string& s) {
    if (s == "pairwise") return TestMethod::pairwise;
    if (s == "kernel") return TestMethod::kernel;
    throw UsageError("unknown method '" + s + "' (expected pairwise|kernel)");
}

inline const char* to_string(TestMethod m) { return m == TestMethod::kernel ? "kernel" : "pairwise"; }

/// Seed for the k-th derived run (bootstrap draw, repetition, ...).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t k) {
    return seed + 0x9E3779B97F4A7C15ull * (k + 1);
}

struct BootstrapReport {
    std::size_t n_boot = 0;
    Matrix p_samples;                  ///< n_boot x V, NaN at excluded vertices
    Vector p_variance;                 ///< per vertex, across draws (n_boot - 1 denominator)
    std::vector<std::vector<std::size_t>> draws;  ///< distinct subjects analysed in each draw
    std::vector<bool> excluded;
};

/// Runs the chosen test on n_boot with-replacement draws of the cohort.
///
/// Each draw is analysed on its distinct subjects (repeated subjects would sit at
/// distance zero from themselves and bias both tests). Draws with fewer than
/// three distinct subjects are redrawn, up to 100 times. Distances are taken
/// from the full-cohort tensors, which equal a per-draw recomputation because
/// each pair's sync depends only on that pair.
inline BootstrapReport bootstrap_stability(const DistanceTensors& tensors, const Vector& y, TestMethod method,
                                           std::size_t n_boot, const TestConfig& cfg, std::size_t n_pairs = 2000) {
    cfg.validate();
    if (n_boot < 2) throw UsageError("bootstrap needs n_boot >= 2");
    const std::size_t n = tensors.geodesic.n_subjects();
    const std::size_t nv = tensors.geodesic.n_vertices();
    if (static_cast<std::size_t>(y.size()) != n) throw DimensionError("bootstrap_stability: scores length differs from N");

    BootstrapReport report;
    report.n_boot = n_boot;
    report.p_samples.resize(static_cast<Eigen::Index>(n_boot), static_cast<Eigen::Index>(nv));
    report.excluded = tensors.geodesic.excluded_mask();
    Rng rng(cfg.seed, streams::bootstrap);
    for (std::size_t k = 0; k < n_boot; ++k) {
        std::vector<std::size_t> distinct;
        for (int attempt = 0;; ++attempt) {
            std::vector<std::size_t> draw(n);
            for (auto& s : draw) s = static_cast<std::size_t>(rng.index(n));
            std::sort(draw.begin(), draw.end());
            draw.erase(std::unique(draw.begin(), draw.end()), draw.end());
            if (draw.size() >= 3) {
                distinct = std::move(draw);
                break;
            }
            if (attempt >= 100) throw DegenerateError("bootstrap: could not draw 3 distinct subjects");
        }
        Vector y_sub(static_cast<Eigen::Index>(distinct.size()));
        for (std::size_t a = 0; a < distinct.size(); ++a)
            y_sub[static_cast<Eigen::Index>(a)] = y[static_cast<Eigen::Index>(distinct[a])];

        TestConfig sub_cfg = cfg;
        sub_cfg.seed = derive_seed(cfg.seed, k);
        StatMap map;
        if (method == TestMethod::kernel) {
            map = kernel_regression_test(tensors.geodesic.select(distinct), y_sub, sub_cfg);
        } else {
            const auto m = std::min(n_pairs, pair_count(distinct.size()));
            const auto sample = sample_pairs(distinct.size(), m, y_sub, sub_cfg.seed);
            map = pairwise_correlation_test(tensors.euclidean_sq.select(distinct).restrict_to_pairs(sample.pairs), sample,
                                            y_sub, sub_cfg);
        }
        for (std::size_t v = 0; v < nv; ++v)
            report.p_samples(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(v)) = map.p_value[v];
        report.draws.push_back(std::move(distinct));
    }
    report.p_variance.resize(static_cast<Eigen::Index>(nv));
    for (Eigen::Index v = 0; v < static_cast<Eigen::Index>(nv); ++v) {
        const auto col = report.p_samples.col(v);
        const double mean = col.mean();
        report.p_variance[v] = (col.array() - mean).square().sum() / static_cast<double>(n_boot - 1);
    }
    return report;
}

inline BootstrapReport bootstrap_stability(const Cohort& cohort, TestMethod method, std::size_t n_boot,
                                           const TestConfig& cfg, std::size_t n_pairs = 2000) {
    return bootstrap_stability(build_distance_tensors(cohort, cfg.parallelism), cohort.scores(), method, n_boot, cfg,
                               n_pairs);
}

inline void write_bootstrap_tsv(std::ostream& out, const BootstrapReport& report) {
    out << "vertex\tp_var";
    for (std::size_t k = 0; k < report.n_boot; ++k) out << "\tboot" << k << "_p";
    out << '\n';
    for (std::size_t v = 0; v < report.excluded.size(); ++v) {
        if (report.excluded[v]) continue;
        const auto vi = static_cast<Eigen::Index>(v);
        out << v << '\t' << format_float(report.p_variance[vi]);
        for (std::size_t k = 0; k < report.n_boot; ++k)
            out << '\t' << format_float(report.p_samples(static_cast<Eigen::Index>(k), vi));
        out << '\n';
    }
}

}  // namespace synckernel

#endif  // SYNCKERNEL_STATS_HPP
