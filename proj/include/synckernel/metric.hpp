#ifndef SYNCKERNEL_METRIC_HPP
#define SYNCKERNEL_METRIC_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "synckernel/data.hpp"
#include "synckernel/parallel.hpp"
#include "synckernel/sync.hpp"

namespace synckernel {

enum class DistanceKind : std::uint8_t { euclidean_sq = 0, geodesic = 1 };

inline const char* to_string(DistanceKind k) { return k == DistanceKind::geodesic ? "geodesic" : "euclidean_sq"; }

using SubjectPair = std::pair<std::size_t, std::size_t>;

/// Per-vertex distances among N subjects.
///
/// Full mode keeps one contiguous symmetric N x N block per vertex. Sampled mode
/// keeps, per vertex, one value for each listed pair. Excluded vertices hold NaN.
class DistanceTensor {
public:
    DistanceTensor() = default;

    static DistanceTensor full(DistanceKind kind, std::size_t n_subjects, std::size_t n_vertices) {
        DistanceTensor d;
        d.kind_ = kind;
        d.n_subjects_ = n_subjects;
        d.n_vertices_ = n_vertices;
        d.values_.assign(n_vertices * n_subjects * n_subjects, 0.0);
        d.excluded_.assign(n_vertices, false);
        return d;
    }

    static DistanceTensor sampled(DistanceKind kind, std::size_t n_subjects, std::size_t n_vertices,
                                  std::vector<SubjectPair> pairs) {
        DistanceTensor d;
        d.kind_ = kind;
        d.n_subjects_ = n_subjects;
        d.n_vertices_ = n_vertices;
        d.pairs_ = std::move(pairs);
        d.values_.assign(n_vertices * d.pairs_->size(), 0.0);
        d.excluded_.assign(n_vertices, false);
        return d;
    }

    DistanceKind kind() const { return kind_; }
    std::size_t n_subjects() const { return n_subjects_; }
    std::size_t n_vertices() const { return n_vertices_; }
    bool is_sampled() const { return pairs_.has_value(); }
    const std::vector<SubjectPair>& pairs() const { return *pairs_; }
    std::size_t n_pairs() const { return pairs_ ? pairs_->size() : 0; }

    bool excluded(std::size_t v) const { return excluded_[v]; }
    const std::vector<bool>& excluded_mask() const { return excluded_; }

    /// Full mode: distance between subjects i and j at vertex v.
    double at(std::size_t v, std::size_t i, std::size_t j) const { return values_[block_offset(v) + i * n_subjects_ + j]; }

    /// Full mode: the N x N block for vertex v.
    Eigen::Map<const Matrix> block(std::size_t v) const {
        const auto n = static_cast<Eigen::Index>(n_subjects_);
        return {values_.data() + block_offset(v), n, n};
    }

    /// Sampled mode: values for every listed pair at vertex v.
    std::span<const double> pair_values(std::size_t v) const {
        return {values_.data() + v * n_pairs(), n_pairs()};
    }

    // writers used by the builders
    void set_symmetric(std::size_t v, std::size_t i, std::size_t j, double value) {
        values_[block_offset(v) + i * n_subjects_ + j] = value;
        values_[block_offset(v) + j * n_subjects_ + i] = value;
    }
    void set(std::size_t v, std::size_t i, std::size_t j, double value) {
        values_[block_offset(v) + i * n_subjects_ + j] = value;
    }
    void set_pair(std::size_t v, std::size_t k, double value) { values_[v * n_pairs() + k] = value; }

    void mark_excluded(std::size_t v) {
        excluded_[v] = true;
        const std::size_t width = is_sampled() ? n_pairs() : n_subjects_ * n_subjects_;
        std::fill_n(values_.begin() + static_cast<std::ptrdiff_t>(v * width), width,
                    std::numeric_limits<double>::quiet_NaN());
    }

    /// Full mode: tensor restricted to the given subjects, in that order.
    DistanceTensor select(const std::vector<std::size_t>& subjects) const {
        require_full("select");
        auto out = full(kind_, subjects.size(), n_vertices_);
        for (std::size_t v = 0; v < n_vertices_; ++v) {
            if (excluded_[v]) {
                out.mark_excluded(v);
                continue;
            }
            for (std::size_t a = 0; a < subjects.size(); ++a)
                for (std::size_t b = 0; b < subjects.size(); ++b)
                    out.values_[out.block_offset(v) + a * subjects.size() + b] = at(v, subjects.at(a), subjects.at(b));
        }
        return out;
    }

    /// Full mode: sampled-mode view over the listed pairs.
    DistanceTensor restrict_to_pairs(const std::vector<SubjectPair>& pairs) const {
        require_full("restrict_to_pairs");
        auto out = sampled(kind_, n_subjects_, n_vertices_, pairs);
        for (std::size_t v = 0; v < n_vertices_; ++v) {
            if (excluded_[v]) {
                out.mark_excluded(v);
                continue;
            }
            for (std::size_t k = 0; k < pairs.size(); ++k) out.set_pair(v, k, at(v, pairs[k].first, pairs[k].second));
        }
        return out;
    }

    void require_full(const char* op) const {
        if (is_sampled()) throw UsageError(std::string(op) + ": needs a full (all pairs) distance tensor");
    }

    const std::vector<double>& raw() const { return values_; }

private:
    std::size_t block_offset(std::size_t v) const { return v * n_subjects_ * n_subjects_; }

    DistanceKind kind_ = DistanceKind::geodesic;
    std::size_t n_subjects_ = 0;
    std::size_t n_vertices_ = 0;
    std::optional<std::vector<SubjectPair>> pairs_;
    std::vector<double> values_;
    std::vector<bool> excluded_;
};

/// Per-vertex squared Euclidean distance between x and an already-synced y.
inline Vector euclidean_distance_map(const TimeSeriesMatrix& x, const TimeSeriesMatrix& y_synced) {
    detail::require_same_shape(x, y_synced, "euclidean_distance_map");
    return (x.values() - y_synced.values()).colwise().squaredNorm().transpose();
}

namespace detail {
inline double clamped_arccos(double inner) { return std::acos(std::clamp(inner, -1.0, 1.0)); }
}  // namespace detail

/// Per-vertex arc length between x's column and the synced y column, where o
/// syncs y onto x. The inner product is clamped to [-1, 1].
inline Vector geodesic_distance_map(const TimeSeriesMatrix& x, const TimeSeriesMatrix& y, const OrthogonalTransform& o) {
    detail::require_same_shape(x, y, "geodesic_distance_map");
    detail::require_transform_fits(o, y, "geodesic_distance_map");
    const Matrix synced = o.matrix * y.values();
    Vector out(x.values().cols());
    for (Eigen::Index v = 0; v < out.size(); ++v) out[v] = detail::clamped_arccos(x.values().col(v).dot(synced.col(v)));
    return out;
}

namespace detail {

inline std::vector<SubjectPair> all_pairs(std::size_t n) {
    std::vector<SubjectPair> pairs;
    pairs.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    return pairs;
}

inline void validate_pairs(const std::vector<SubjectPair>& pairs, std::size_t n) {
    for (const auto& [i, j] : pairs) {
        if (i >= n || j >= n)
            throw UsageError("pair (" + std::to_string(i) + "," + std::to_string(j) + ") out of range for N=" +
                             std::to_string(n));
        if (i == j) throw UsageError("pair (" + std::to_string(i) + "," + std::to_string(i) + ") is not distinct");
    }
}

// One sync per pair, then per-vertex distances of the requested kinds.
struct PairDistances {
    Vector euclidean_sq;
    Vector geodesic;
};

inline PairDistances pair_distances(const TimeSeriesMatrix& x, const TimeSeriesMatrix& y, bool want_euclid,
                                    bool want_geo) {
    const auto o = compute_sync_transform(x, y);
    const Matrix synced = o.matrix * y.values();
    const auto& xv = x.values();
    PairDistances out;
    if (want_euclid) out.euclidean_sq = (xv - synced).colwise().squaredNorm().transpose();
    if (want_geo) {
        out.geodesic.resize(xv.cols());
        for (Eigen::Index v = 0; v < xv.cols(); ++v) out.geodesic[v] = clamped_arccos(xv.col(v).dot(synced.col(v)));
    }
    return out;
}

}  // namespace detail

/// Syncs each unordered pair once (y = subject j onto x = subject i) and fills
/// every vertex. Full tensors are mirrored so they are symmetric by construction.
inline DistanceTensor build_distance_tensor(const Cohort& cohort, DistanceKind kind,
                                            std::optional<std::vector<SubjectPair>> sampled_pairs = std::nullopt,
                                            Parallelism par = {}) {
    if (cohort.empty()) throw DataError("build_distance_tensor: empty cohort");
    const std::size_t n = cohort.size();
    const std::size_t nv = cohort.n_vertices();
    if (sampled_pairs) detail::validate_pairs(*sampled_pairs, n);
    const auto pairs = sampled_pairs ? *sampled_pairs : detail::all_pairs(n);

    std::vector<Vector> per_pair(pairs.size());
    parallel_for(pairs.size(), par, [&](std::size_t k) {
        auto d = detail::pair_distances(cohort.subject(pairs[k].first).data, cohort.subject(pairs[k].second).data,
                                        kind == DistanceKind::euclidean_sq, kind == DistanceKind::geodesic);
        per_pair[k] = std::move(kind == DistanceKind::geodesic ? d.geodesic : d.euclidean_sq);
    });

    auto out = sampled_pairs ? DistanceTensor::sampled(kind, n, nv, pairs) : DistanceTensor::full(kind, n, nv);
    const auto mask = cohort.excluded_mask();
    parallel_for(nv, par, [&](std::size_t v) {
        if (mask[v]) return;
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            const double value = per_pair[k][static_cast<Eigen::Index>(v)];
            if (sampled_pairs)
                out.set_pair(v, k, value);
            else
                out.set_symmetric(v, pairs[k].first, pairs[k].second, value);
        }
    });
    for (std::size_t v = 0; v < nv; ++v)
        if (mask[v]) out.mark_excluded(v);
    return out;
}

struct DistanceTensors {
    DistanceTensor euclidean_sq;
    DistanceTensor geodesic;
};

/// Both full tensors from a single sync per pair.
inline DistanceTensors build_distance_tensors(const Cohort& cohort, Parallelism par = {}) {
    if (cohort.empty()) throw DataError("build_distance_tensors: empty cohort");
    const std::size_t n = cohort.size();
    const std::size_t nv = cohort.n_vertices();
    const auto pairs = detail::all_pairs(n);
    std::vector<detail::PairDistances> per_pair(pairs.size());
    parallel_for(pairs.size(), par, [&](std::size_t k) {
        per_pair[k] = detail::pair_distances(cohort.subject(pairs[k].first).data,
                                             cohort.subject(pairs[k].second).data, true, true);
    });
    DistanceTensors out{DistanceTensor::full(DistanceKind::euclidean_sq, n, nv),
                        DistanceTensor::full(DistanceKind::geodesic, n, nv)};
    const auto mask = cohort.excluded_mask();
    for (std::size_t v = 0; v < nv; ++v) {
        if (mask[v]) {
            out.euclidean_sq.mark_excluded(v);
            out.geodesic.mark_excluded(v);
            continue;
        }
        const auto vi = static_cast<Eigen::Index>(v);
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            out.euclidean_sq.set_symmetric(v, pairs[k].first, pairs[k].second, per_pair[k].euclidean_sq[vi]);
            out.geodesic.set_symmetric(v, pairs[k].first, pairs[k].second, per_pair[k].geodesic[vi]);
        }
    }
    return out;
}

/// RBF weights exp(-gamma * d) at one vertex (a normalizing constant would cancel
/// in every ratio these weights feed, so none is applied).
struct KernelMatrix {
    std::size_t vertex = 0;
    double gamma = 0.0;
    Matrix weights;
};

namespace detail {
inline void require_gamma(double gamma) {
    if (!(gamma > 0.0) || !std::isfinite(gamma))
        throw UsageError("kernel bandwidth gamma must be positive and finite, got " + format_float(gamma));
}
}  // namespace detail

inline KernelMatrix kernel_at_vertex(const DistanceTensor& d, std::size_t vertex, double gamma) {
    if (d.kind() != DistanceKind::geodesic) throw UsageError("kernel needs geodesic distances, got euclidean_sq");
    d.require_full("kernel_at_vertex");
    detail::require_gamma(gamma);
    return {vertex, gamma, (-gamma * d.block(vertex).array()).exp().matrix()};
}

/// Kernel matrices for every non-excluded vertex (excluded vertices get an empty matrix).
inline std::vector<KernelMatrix> kernel_from_distances(const DistanceTensor& d, double gamma) {
    if (d.kind() != DistanceKind::geodesic) throw UsageError("kernel needs geodesic distances, got euclidean_sq");
    d.require_full("kernel_from_distances");
    detail::require_gamma(gamma);
    std::vector<KernelMatrix> out(d.n_vertices());
    for (std::size_t v = 0; v < d.n_vertices(); ++v) {
        if (d.excluded(v))
            out[v] = {v, gamma, Matrix()};
        else
            out[v] = kernel_at_vertex(d, v, gamma);
    }
    return out;
}

inline constexpr char kDistanceMagic[] = "SKDT";

/// "SKDT", u32 version, u8 kind, u64 N, u64 V, then V blocks of N*N float64.
inline void store_distance_tensor(const DistanceTensor& d, const std::filesystem::path& path) {
    d.require_full("store_distance_tensor");
    detail::ByteWriter w;
    w.magic(kDistanceMagic);
    w.u32(kFormatVersion);
    w.u8(static_cast<std::uint8_t>(d.kind()));
    w.u64(d.n_subjects());
    w.u64(d.n_vertices());
    for (double x : d.raw()) w.f64(x);
    w.write_file(path);
}

inline DistanceTensor load_distance_tensor(const std::filesystem::path& path) {
    auto r = detail::ByteReader::from_file(path);
    r.expect_magic(kDistanceMagic);
    r.expect_version(kFormatVersion);
    const auto kind_byte = r.u8();
    if (kind_byte > 1) throw FormatError(r.source() + ": unknown distance kind " + std::to_string(kind_byte));
    const auto n = r.u64();
    const auto nv = r.u64();
    r.expect_payload(detail::checked_product(detail::checked_product(n, n, r.source()), nv, r.source()));
    auto d = DistanceTensor::full(static_cast<DistanceKind>(kind_byte), n, nv);
    for (std::size_t v = 0; v < nv; ++v) {
        bool all_nan = true;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double x = r.f64();
                if (!std::isnan(x)) all_nan = false;
                d.set(v, i, j, x);
            }
        if (all_nan && n > 0) d.mark_excluded(v);
    }
    return d;
}

}  // namespace synckernel

#endif  // SYNCKERNEL_METRIC_HPP
