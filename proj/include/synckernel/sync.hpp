#ifndef SYNCKERNEL_SYNC_HPP
#define SYNCKERNEL_SYNC_HPP

#include <filesystem>
#include <string>

#include <Eigen/SVD>

#include "synckernel/binary_io.hpp"
#include "synckernel/data.hpp"

namespace synckernel {

/// T x T orthogonal matrix mapping the source subject's time axis onto the target's.
struct OrthogonalTransform {
    Matrix matrix;
    std::string source_id;
    std::string target_id;

    std::size_t size() const { return static_cast<std::size_t>(matrix.rows()); }

    /// max |O^T O - I|
    double orthogonality_error() const {
        return (matrix.transpose() * matrix - Matrix::Identity(matrix.rows(), matrix.cols())).cwiseAbs().maxCoeff();
    }

    OrthogonalTransform inverse() const { return {matrix.transpose(), target_id, source_id}; }
};

namespace detail {
inline void require_same_shape(const TimeSeriesMatrix& x, const TimeSeriesMatrix& y, const char* op) {
    if (x.n_timepoints() != y.n_timepoints() || x.n_vertices() != y.n_vertices())
        throw DimensionError(std::string(op) + ": shape mismatch " + std::to_string(x.n_timepoints()) + "x" +
                             std::to_string(x.n_vertices()) + " vs " + std::to_string(y.n_timepoints()) + "x" +
                             std::to_string(y.n_vertices()));
}

inline void require_transform_fits(const OrthogonalTransform& o, const TimeSeriesMatrix& y, const char* op) {
    if (o.matrix.rows() != o.matrix.cols() || o.size() != y.n_timepoints())
        throw DimensionError(std::string(op) + ": transform is " + std::to_string(o.matrix.rows()) + "x" +
                             std::to_string(o.matrix.cols()) + " but data has T=" + std::to_string(y.n_timepoints()));
}
}  // namespace detail

/// Orthogonal O minimizing ||X - O Y||_F^2.
///
/// With X Y^T = U S W^T, the minimizer is O = U W^T (orthogonal Procrustes).
/// Reflections are allowed. When singular values repeat, any minimizer the
/// decomposition yields is returned; they all attain the same residual.
inline OrthogonalTransform compute_sync_transform(const TimeSeriesMatrix& x, const TimeSeriesMatrix& y,
                                                  std::string target_id = {}, std::string source_id = {}) {
    detail::require_same_shape(x, y, "compute_sync_transform");
    const Matrix cross = x.values() * y.values().transpose();
    if (!cross.allFinite()) throw SvdError("compute_sync_transform: non-finite cross product");
    Eigen::JacobiSVD<Matrix> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.info() != Eigen::Success) throw SvdError("compute_sync_transform: SVD did not converge");
    return {svd.matrixU() * svd.matrixV().transpose(), std::move(source_id), std::move(target_id)};
}

/// Returns O Y. The result keeps the normalized flag of y: norms are preserved
/// exactly, zero means only when O maps the constant vector to itself.
inline TimeSeriesMatrix apply_transform(const OrthogonalTransform& o, const TimeSeriesMatrix& y) {
    detail::require_transform_fits(o, y, "apply_transform");
    return TimeSeriesMatrix(o.matrix * y.values(), y.normalized());
}

inline double sync_error(const TimeSeriesMatrix& x, const TimeSeriesMatrix& y, const OrthogonalTransform& o) {
    detail::require_same_shape(x, y, "sync_error");
    detail::require_transform_fits(o, y, "sync_error");
    return (x.values() - o.matrix * y.values()).squaredNorm();
}

inline constexpr char kTransformMagic[] = "SKOT";

/// "SKOT", u32 version, u64 T, then T*T float64 row-major.
inline void store_transform(const OrthogonalTransform& o, const std::filesystem::path& path) {
    detail::ByteWriter w;
    w.magic(kTransformMagic);
    w.u32(kFormatVersion);
    w.u64(o.size());
    for (Eigen::Index r = 0; r < o.matrix.rows(); ++r)
        for (Eigen::Index c = 0; c < o.matrix.cols(); ++c) w.f64(o.matrix(r, c));
    w.write_file(path);
}

inline OrthogonalTransform load_transform(const std::filesystem::path& path) {
    auto r = detail::ByteReader::from_file(path);
    r.expect_magic(kTransformMagic);
    r.expect_version(kFormatVersion);
    const auto t_count = r.u64();
    if (t_count == 0) throw FormatError(r.source() + ": T must be positive");
    r.expect_payload(detail::checked_product(t_count, t_count, r.source()));
    const auto n = static_cast<Eigen::Index>(t_count);
    Matrix m(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) m(i, j) = r.f64();
    if (!m.allFinite()) throw NonFiniteError(r.source() + ": non-finite transform entry");
    return {std::move(m), {}, {}};
}

}  // namespace synckernel

#endif  // SYNCKERNEL_SYNC_HPP
