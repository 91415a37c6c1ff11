#ifndef SYNCKERNEL_SIM_HPP
#define SYNCKERNEL_SIM_HPP

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/QR>
#include <nlohmann/json.hpp>

#include "synckernel/data.hpp"
#include "synckernel/metric.hpp"
#include "synckernel/parallel.hpp"
#include "synckernel/rng.hpp"
#include "synckernel/stats.hpp"

namespace synckernel {

/// Synthetic-cohort and noise-injection parameters.
///
/// Noise levels (sigma_max, background_noise) are in units of the per-sample
/// standard deviation of a normalized column, i.e. 1/sqrt(T) on the unit-norm scale.
struct SimulationConfig {
    std::size_t n_subjects = 50;
    std::size_t n_timepoints = 100;
    std::size_t n_vertices = 500;
    std::vector<std::size_t> roi;  ///< empty means the first n_vertices/10 vertices
    double sigma_max = 0.3;
    double score_low = 0.0;
    double score_high = 100.0;
    std::uint64_t seed = 0;
    std::size_t latent_rank = 10;
    double background_noise = 0.3;

    std::vector<std::size_t> resolved_roi() const {
        if (!roi.empty()) return roi;
        std::vector<std::size_t> out(n_vertices / 10);
        for (std::size_t v = 0; v < out.size(); ++v) out[v] = v;
        return out;
    }

    void validate() const {
        if (n_subjects < 3) throw UsageError("simulation needs at least 3 subjects");
        if (n_timepoints < 2) throw UsageError("simulation needs at least 2 time points");
        if (n_vertices < 1) throw UsageError("simulation needs at least 1 vertex");
        for (auto v : roi)
            if (v >= n_vertices) throw UsageError("ROI vertex " + std::to_string(v) + " out of range");
        if (!(sigma_max >= 0.0) || !std::isfinite(sigma_max)) throw UsageError("sigma_max must be non-negative");
        if (!(background_noise >= 0.0) || !std::isfinite(background_noise))
            throw UsageError("background_noise must be non-negative");
        if (!(score_low < score_high)) throw UsageError("score range needs low < high");
        if (latent_rank < 1) throw UsageError("latent rank must be >= 1");
    }
};

inline SimulationConfig simulation_config_from_json(const nlohmann::json& j, SimulationConfig cfg = {}) {
    try {
        if (j.contains("n_subjects")) cfg.n_subjects = j.at("n_subjects").get<std::size_t>();
        if (j.contains("n_timepoints")) cfg.n_timepoints = j.at("n_timepoints").get<std::size_t>();
        if (j.contains("n_vertices")) cfg.n_vertices = j.at("n_vertices").get<std::size_t>();
        if (j.contains("roi")) cfg.roi = j.at("roi").get<std::vector<std::size_t>>();
        if (j.contains("roi_size")) {
            const auto k = j.at("roi_size").get<std::size_t>();
            cfg.roi.resize(k);
            for (std::size_t v = 0; v < k; ++v) cfg.roi[v] = v;
        }
        if (j.contains("sigma_max")) cfg.sigma_max = j.at("sigma_max").get<double>();
        if (j.contains("score_range")) {
            const auto r = j.at("score_range").get<std::vector<double>>();
            if (r.size() != 2) throw UsageError("score_range must have two entries");
            cfg.score_low = r[0];
            cfg.score_high = r[1];
        }
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("latent_rank")) cfg.latent_rank = j.at("latent_rank").get<std::size_t>();
        if (j.contains("background_noise")) cfg.background_noise = j.at("background_noise").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("simulation config: ") + e.what());
    }
    return cfg;
}

namespace detail {

// Orthonormal basis of the complement of the constant vector (Helmert contrasts).
inline Matrix helmert_basis(std::size_t t) {
    const auto n = static_cast<Eigen::Index>(t);
    Matrix u = Matrix::Zero(n, n - 1);
    for (Eigen::Index j = 0; j < n - 1; ++j) {
        const double k = static_cast<double>(j + 1);
        const double s = 1.0 / std::sqrt(k * (k + 1.0));
        u.col(j).head(j + 1).setConstant(s);
        u(j + 1, j) = -k * s;
    }
    return u;
}

inline Matrix gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.normal();
    return m;
}

// Haar-distributed orthogonal matrix acting on the zero-mean subspace and fixing
// the constant vector, so rotated zero-mean columns stay zero-mean.
inline Matrix mean_preserving_rotation(Rng& rng, const Matrix& helmert) {
    const auto n = helmert.rows();
    Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(rng, n - 1, n - 1));
    Matrix q = qr.householderQ();
    const Matrix r = qr.matrixQR().template triangularView<Eigen::Upper>();
    for (Eigen::Index k = 0; k < n - 1; ++k)
        if (r(k, k) < 0.0) q.col(k) *= -1.0;
    return helmert * q * helmert.transpose() + Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
}

}  // namespace detail

/// Cohort whose subjects share a low-rank smooth latent signal (Fourier basis of
/// latent_rank components mixed per vertex), each seen through its own random
/// mean-preserving temporal rotation, plus i.i.d. background noise. Scores are
/// uniform in [score_low, score_high] and then shuffled.
inline Cohort generate_synthetic_cohort(const SimulationConfig& cfg, Parallelism par = {}) {
    cfg.validate();
    const std::size_t t_count = cfg.n_timepoints;
    const std::size_t max_freq = (cfg.latent_rank + 1) / 2;
    if (2 * max_freq >= t_count)
        throw DataError("n_timepoints=" + std::to_string(t_count) + " is too small for a rank-" +
                        std::to_string(cfg.latent_rank) + " temporal basis (need T > " + std::to_string(2 * max_freq) + ")");
    const auto T = static_cast<Eigen::Index>(t_count);
    const auto V = static_cast<Eigen::Index>(cfg.n_vertices);
    const auto K = static_cast<Eigen::Index>(cfg.latent_rank);

    Matrix basis(T, K);
    for (Eigen::Index c = 0; c < K; ++c) {
        const double f = static_cast<double>(c / 2 + 1);
        for (Eigen::Index t = 0; t < T; ++t) {
            const double phase = 2.0 * std::numbers::pi * f * static_cast<double>(t) / static_cast<double>(T);
            basis(t, c) = c % 2 == 0 ? std::cos(phase) : std::sin(phase);
        }
    }
    Rng latent_rng(cfg.seed, streams::latent);
    const auto latent =
        normalize_columns(TimeSeriesMatrix(basis * detail::gaussian_matrix(latent_rng, K, V)), NormalizeMode::permissive)
            .matrix.values();
    const Matrix helmert = detail::helmert_basis(t_count);
    const double noise_scale = cfg.background_noise / std::sqrt(static_cast<double>(T));

    std::vector<Subject> subjects(cfg.n_subjects);
    std::vector<std::vector<std::size_t>> zero(cfg.n_subjects);
    parallel_for(cfg.n_subjects, par, [&](std::size_t i) {
        Rng rng(cfg.seed, streams::subject_base + i);
        const Matrix rotation = detail::mean_preserving_rotation(rng, helmert);
        Matrix x = rotation * latent;
        if (noise_scale > 0.0) x += noise_scale * detail::gaussian_matrix(rng, T, V);
        auto norm = normalize_columns(TimeSeriesMatrix(std::move(x)), NormalizeMode::permissive);
        char id[32];
        std::snprintf(id, sizeof id, "sub-%03zu", i);
        subjects[i] = {id, std::move(norm.matrix)};
        zero[i] = std::move(norm.zero_variance);
    });
    std::vector<std::size_t> excluded;
    for (const auto& z : zero) excluded.insert(excluded.end(), z.begin(), z.end());

    Rng score_rng(cfg.seed, streams::scores);
    std::vector<double> scores(cfg.n_subjects);
    for (auto& s : scores) s = score_rng.uniform(cfg.score_low, cfg.score_high);
    Rng shuffle_rng(cfg.seed, streams::score_shuffle);
    shuffle_rng.shuffle(scores);
    Vector y = Eigen::Map<Vector>(scores.data(), static_cast<Eigen::Index>(scores.size()));
    return Cohort(std::move(subjects), std::move(y), std::move(excluded));
}

/// Adds N(0, sigma_i^2) noise to every ROI column of subject i, where
/// sigma_i = sigma_max * (y_i - min y) / (max y - min y), then re-normalizes those
/// columns. Subjects with sigma_i = 0 and all non-ROI columns are left untouched.
inline Cohort inject_roi_noise(const Cohort& cohort, const SimulationConfig& cfg, Parallelism par = {}) {
    const auto roi = cfg.resolved_roi();
    for (auto v : roi)
        if (v >= cohort.n_vertices()) throw UsageError("ROI vertex " + std::to_string(v) + " out of range");
    const Vector& y = cohort.scores();
    if (cohort.empty() || y.maxCoeff() == y.minCoeff())
        throw DegenerateError("inject_roi_noise: scores are constant, normalized score is undefined");
    const double lo = y.minCoeff();
    const double span = y.maxCoeff() - lo;
    const auto mask = cohort.excluded_mask();
    const double unit = 1.0 / std::sqrt(static_cast<double>(cohort.n_timepoints()));

    std::vector<Subject> subjects(cohort.size());
    parallel_for(cohort.size(), par, [&](std::size_t i) {
        const auto& src = cohort.subject(i);
        const double sigma = cfg.sigma_max * (y[static_cast<Eigen::Index>(i)] - lo) / span;
        if (!(sigma > 0.0)) {
            subjects[i] = src;
            return;
        }
        Rng rng(cfg.seed, streams::roi_noise_base + i);
        Matrix x = src.data.values();
        for (auto v : roi) {
            if (mask[v]) continue;
            auto col = x.col(static_cast<Eigen::Index>(v));
            for (Eigen::Index t = 0; t < col.size(); ++t) col[t] += sigma * unit * rng.normal();
            col.array() -= col.mean();
            col /= col.norm();
        }
        subjects[i] = {src.id, TimeSeriesMatrix(std::move(x), true)};
    });
    return Cohort(std::move(subjects), y, cohort.excluded_vertices());
}

struct MethodOutcome {
    StatMap map;
    double roi_detection_rate = 0.0;
    double false_positive_rate = 0.0;
};

struct SimulationReport {
    MethodOutcome pairwise;
    MethodOutcome kernel;
    std::vector<std::size_t> roi;
    std::size_t n_pairs = 0;
};

/// Fractions of ROI / non-ROI vertices rejected (excluded vertices are ignored).
inline MethodOutcome summarize(StatMap map, const std::vector<std::size_t>& roi) {
    std::vector<bool> in_roi(map.n_vertices(), false);
    for (auto v : roi) in_roi[v] = true;
    std::size_t roi_n = 0, roi_hit = 0, out_n = 0, out_hit = 0;
    for (std::size_t v = 0; v < map.n_vertices(); ++v) {
        if (map.excluded[v]) continue;
        if (in_roi[v]) {
            ++roi_n;
            roi_hit += map.rejected[v];
        } else {
            ++out_n;
            out_hit += map.rejected[v];
        }
    }
    MethodOutcome out{std::move(map), 0.0, 0.0};
    out.roi_detection_rate = roi_n ? static_cast<double>(roi_hit) / static_cast<double>(roi_n) : 0.0;
    out.false_positive_rate = out_n ? static_cast<double>(out_hit) / static_cast<double>(out_n) : 0.0;
    return out;
}

/// Both tests on an already prepared cohort; n_pairs is clamped to C(N, 2).
inline SimulationReport run_both_tests(const Cohort& cohort, const std::vector<std::size_t>& roi, const TestConfig& test_cfg,
                                       std::size_t n_pairs, const DistanceTensors* precomputed = nullptr) {
    DistanceTensors local;
    if (!precomputed) {
        local = build_distance_tensors(cohort, test_cfg.parallelism);
        precomputed = &local;
    }
    const auto m = std::min(n_pairs, pair_count(cohort.size()));
    const auto sample = sample_pairs(cohort.size(), m, cohort.scores(), test_cfg.seed);
    SimulationReport report;
    report.roi = roi;
    report.n_pairs = m;
    report.pairwise = summarize(pairwise_correlation_test(precomputed->euclidean_sq.restrict_to_pairs(sample.pairs), sample,
                                                          cohort.scores(), test_cfg),
                                roi);
    report.kernel = summarize(kernel_regression_test(precomputed->geodesic, cohort.scores(), test_cfg), roi);
    return report;
}

/// Generate, inject ROI noise, then run the pairwise and kernel tests.
inline SimulationReport run_simulation_study(const SimulationConfig& cfg, const TestConfig& test_cfg,
                                             std::size_t n_pairs = 2000) {
    test_cfg.validate();
    const auto cohort = inject_roi_noise(generate_synthetic_cohort(cfg, test_cfg.parallelism), cfg, test_cfg.parallelism);
    return run_both_tests(cohort, cfg.resolved_roi(), test_cfg, n_pairs);
}

inline void write_simulation_tsv(std::ostream& out, const SimulationReport& r) {
    out << "method\troi_detection_rate\tfalse_positive_rate\n";
    out << "pairwise\t" << format_float(r.pairwise.roi_detection_rate) << '\t'
        << format_float(r.pairwise.false_positive_rate) << '\n';
    out << "kernel\t" << format_float(r.kernel.roi_detection_rate) << '\t' << format_float(r.kernel.false_positive_rate)
        << '\n';
}

}  // namespace synckernel

#endif  // SYNCKERNEL_SIM_HPP
