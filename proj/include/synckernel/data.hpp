#ifndef SYNCKERNEL_DATA_HPP
#define SYNCKERNEL_DATA_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "synckernel/binary_io.hpp"
#include "synckernel/error.hpp"

namespace synckernel {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class NormalizeMode { strict, permissive };

inline NormalizeMode parse_normalize_mode(const std::string& s) {
    if (s == "strict") return NormalizeMode::strict;
    if (s == "permissive") return NormalizeMode::permissive;
    throw UsageError("unknown mode '" + s + "' (expected strict|permissive)");
}

inline std::string format_vertex_list(const std::vector<std::size_t>& v, std::size_t limit = 10) {
    std::string out;
    for (std::size_t i = 0; i < v.size() && i < limit; ++i) out += (i ? "," : "") + std::to_string(v[i]);
    if (v.size() > limit) out += ",... (" + std::to_string(v.size()) + " total)";
    return out;
}

/// One subject's signal: T time points (rows) by V vertices (columns).
/// Column-major storage keeps each vertex's time series contiguous.
class TimeSeriesMatrix {
public:
    TimeSeriesMatrix() = default;

    explicit TimeSeriesMatrix(Matrix values, bool normalized = false)
        : values_(std::move(values)), normalized_(normalized) {
        if (values_.rows() < 1 || values_.cols() < 1) throw DimensionError("time series must have T >= 1 and V >= 1");
        if (!values_.allFinite()) {
            for (Eigen::Index v = 0; v < values_.cols(); ++v)
                for (Eigen::Index t = 0; t < values_.rows(); ++t)
                    if (!std::isfinite(values_(t, v)))
                        throw NonFiniteError("non-finite value at (t=" + std::to_string(t) +
                                             ", v=" + std::to_string(v) + ")");
        }
    }

    std::size_t n_timepoints() const { return static_cast<std::size_t>(values_.rows()); }
    std::size_t n_vertices() const { return static_cast<std::size_t>(values_.cols()); }
    const Matrix& values() const { return values_; }
    auto column(std::size_t v) const { return values_.col(static_cast<Eigen::Index>(v)); }
    bool normalized() const { return normalized_; }

private:
    Matrix values_;
    bool normalized_ = false;
};

struct NormalizedColumns {
    TimeSeriesMatrix matrix;
    std::vector<std::size_t> zero_variance;  ///< only populated in permissive mode
};

/// Centers each column and scales it to unit Euclidean norm.
///
/// A column is zero-variance when its centered norm is below 1e-12 of its raw
/// norm (constant up to rounding, or identically zero). Strict mode rejects such
/// columns; permissive mode sets them to zero and reports their indices.
inline NormalizedColumns normalize_columns(const TimeSeriesMatrix& m, NormalizeMode mode) {
    if (m.n_timepoints() < 2) throw DimensionError("normalization needs T >= 2, got T=" + std::to_string(m.n_timepoints()));
    Matrix out = m.values();
    std::vector<std::size_t> zero;
    for (Eigen::Index v = 0; v < out.cols(); ++v) {
        auto col = out.col(v);
        const double raw_norm = col.norm();
        col.array() -= col.mean();
        const double norm = col.norm();
        if (norm <= 1e-12 * raw_norm || norm == 0.0) {
            zero.push_back(static_cast<std::size_t>(v));
            col.setZero();
        } else {
            col /= norm;
        }
    }
    if (mode == NormalizeMode::strict && !zero.empty())
        throw ZeroVarianceError("zero-variance columns at vertices " + format_vertex_list(zero));
    return {TimeSeriesMatrix(std::move(out), true), std::move(zero)};
}

inline constexpr char kTimeSeriesMagic[] = "SKTS";
inline constexpr std::uint32_t kFormatVersion = 1;

/// Binary layout: "SKTS", u32 version, u64 T, u64 V, then value(t,v) at t*V+v.
inline void store_timeseries(const TimeSeriesMatrix& m, const std::filesystem::path& path) {
    detail::ByteWriter w;
    w.magic(kTimeSeriesMagic);
    w.u32(kFormatVersion);
    w.u64(m.n_timepoints());
    w.u64(m.n_vertices());
    const auto& x = m.values();
    for (Eigen::Index t = 0; t < x.rows(); ++t)
        for (Eigen::Index v = 0; v < x.cols(); ++v) w.f64(x(t, v));
    w.write_file(path);
}

inline TimeSeriesMatrix load_timeseries(const std::filesystem::path& path) {
    auto r = detail::ByteReader::from_file(path);
    r.expect_magic(kTimeSeriesMagic);
    r.expect_version(kFormatVersion);
    const auto t_count = r.u64();
    const auto v_count = r.u64();
    if (t_count == 0 || v_count == 0) throw FormatError(r.source() + ": T and V must be positive");
    r.expect_payload(detail::checked_product(t_count, v_count, r.source()));
    Matrix x(static_cast<Eigen::Index>(t_count), static_cast<Eigen::Index>(v_count));
    for (Eigen::Index t = 0; t < x.rows(); ++t)
        for (Eigen::Index v = 0; v < x.cols(); ++v) {
            const double value = r.f64();
            if (!std::isfinite(value))
                throw NonFiniteError(r.source() + ": non-finite value at (t=" + std::to_string(t) +
                                     ", v=" + std::to_string(v) + ")");
            x(t, v) = value;
        }
    return TimeSeriesMatrix(std::move(x));
}

struct Subject {
    std::string id;
    TimeSeriesMatrix data;
};

/// N subjects sharing T and V, with one clinical score each.
class Cohort {
public:
    Cohort() = default;

    Cohort(std::vector<Subject> subjects, Vector scores, std::vector<std::size_t> excluded = {})
        : subjects_(std::move(subjects)), scores_(std::move(scores)), excluded_(std::move(excluded)) {
        if (static_cast<std::size_t>(scores_.size()) != subjects_.size())
            throw MissingScoreError("cohort has " + std::to_string(subjects_.size()) + " subjects but " +
                                    std::to_string(scores_.size()) + " scores");
        std::unordered_set<std::string> ids;
        for (std::size_t i = 0; i < subjects_.size(); ++i) {
            const auto& s = subjects_[i];
            if (!ids.insert(s.id).second) throw DuplicateSubjectError("duplicate subject id '" + s.id + "'");
            if (!std::isfinite(scores_[static_cast<Eigen::Index>(i)]))
                throw NonFiniteError("non-finite score for subject '" + s.id + "'");
            const auto& first = subjects_.front().data;
            if (s.data.n_timepoints() != first.n_timepoints() || s.data.n_vertices() != first.n_vertices())
                throw DimensionError("subject '" + s.id + "' is " + std::to_string(s.data.n_timepoints()) + "x" +
                                     std::to_string(s.data.n_vertices()) + ", expected " +
                                     std::to_string(first.n_timepoints()) + "x" + std::to_string(first.n_vertices()));
        }
        std::sort(excluded_.begin(), excluded_.end());
        excluded_.erase(std::unique(excluded_.begin(), excluded_.end()), excluded_.end());
        if (!excluded_.empty() && !subjects_.empty() && excluded_.back() >= n_vertices())
            throw DimensionError("excluded vertex " + std::to_string(excluded_.back()) + " out of range");
    }

    std::size_t size() const { return subjects_.size(); }
    bool empty() const { return subjects_.empty(); }
    std::size_t n_timepoints() const { return empty() ? 0 : subjects_.front().data.n_timepoints(); }
    std::size_t n_vertices() const { return empty() ? 0 : subjects_.front().data.n_vertices(); }

    const std::vector<Subject>& subjects() const { return subjects_; }
    const Subject& subject(std::size_t i) const { return subjects_.at(i); }
    const Vector& scores() const { return scores_; }
    const std::vector<std::size_t>& excluded_vertices() const { return excluded_; }

    std::vector<bool> excluded_mask() const {
        std::vector<bool> mask(n_vertices(), false);
        for (auto v : excluded_) mask[v] = true;
        return mask;
    }

    /// Subset in the given order (indices may not repeat).
    Cohort select(const std::vector<std::size_t>& indices) const {
        std::vector<Subject> subs;
        Vector y(static_cast<Eigen::Index>(indices.size()));
        for (std::size_t k = 0; k < indices.size(); ++k) {
            subs.push_back(subjects_.at(indices[k]));
            y[static_cast<Eigen::Index>(k)] = scores_[static_cast<Eigen::Index>(indices[k])];
        }
        return Cohort(std::move(subs), std::move(y), excluded_);
    }

    Cohort with_scores(Vector scores) const { return Cohort(subjects_, std::move(scores), excluded_); }

private:
    std::vector<Subject> subjects_;
    Vector scores_;
    std::vector<std::size_t> excluded_;
};

/// Reads a JSON manifest:
///   { "subjects": [ { "id": "...", "timeseries": "rel/path.skts", "score": 1.5 }, ... ] }
/// Paths are relative to the manifest's directory. Subject order follows the file.
inline Cohort load_cohort(const std::filesystem::path& manifest_path, NormalizeMode mode) {
    std::ifstream in(manifest_path);
    if (!in) throw UnreadableFileError("cannot open manifest: " + manifest_path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(manifest_path.string() + ": invalid JSON: " + e.what());
    }
    if (!doc.is_object() || !doc.contains("subjects") || !doc["subjects"].is_array())
        throw FormatError(manifest_path.string() + ": expected an object with a \"subjects\" array");

    const auto base = manifest_path.parent_path();
    std::vector<Subject> subjects;
    std::vector<double> scores;
    std::set<std::size_t> excluded;
    std::unordered_set<std::string> ids;
    for (const auto& entry : doc["subjects"]) {
        if (!entry.is_object() || !entry.contains("id") || !entry["id"].is_string())
            throw FormatError(manifest_path.string() + ": subject entry without a string \"id\"");
        const auto id = entry["id"].get<std::string>();
        if (!ids.insert(id).second) throw DuplicateSubjectError("duplicate subject id '" + id + "'");
        if (!entry.contains("score") || !entry["score"].is_number())
            throw MissingScoreError("subject '" + id + "' has no numeric score");
        if (!entry.contains("timeseries") || !entry["timeseries"].is_string())
            throw FormatError("subject '" + id + "' has no \"timeseries\" path");

        auto raw = load_timeseries(base / entry["timeseries"].get<std::string>());
        if (!subjects.empty()) {
            const auto& first = subjects.front().data;
            if (raw.n_timepoints() != first.n_timepoints() || raw.n_vertices() != first.n_vertices())
                throw DimensionError("subject '" + id + "' is " + std::to_string(raw.n_timepoints()) + "x" +
                                     std::to_string(raw.n_vertices()) + ", expected " +
                                     std::to_string(first.n_timepoints()) + "x" +
                                     std::to_string(first.n_vertices()));
        }
        NormalizedColumns norm;
        try {
            norm = normalize_columns(raw, mode);
        } catch (const ZeroVarianceError& e) {
            throw ZeroVarianceError("subject '" + id + "': " + e.what());
        }
        excluded.insert(norm.zero_variance.begin(), norm.zero_variance.end());
        subjects.push_back({id, std::move(norm.matrix)});
        scores.push_back(entry["score"].get<double>());
    }
    Vector y = Eigen::Map<Vector>(scores.data(), static_cast<Eigen::Index>(scores.size()));
    return Cohort(std::move(subjects), std::move(y), {excluded.begin(), excluded.end()});
}

/// Writes a cohort as SKTS files plus a manifest next to them.
inline void write_cohort(const Cohort& cohort, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json doc;
    doc["subjects"] = nlohmann::json::array();
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        const auto& s = cohort.subject(i);
        const auto file = s.id + ".skts";
        store_timeseries(s.data, dir / file);
        doc["subjects"].push_back({{"id", s.id}, {"timeseries", file}, {"score", cohort.scores()[static_cast<Eigen::Index>(i)]}});
    }
    std::ofstream out(dir / "manifest.json");
    out << doc.dump(2) << '\n';
}

/// Per-vertex test result. Excluded vertices carry NaN and are not written.
struct StatMap {
    std::vector<double> statistic;
    std::vector<double> p_value;
    std::vector<double> q_value;
    std::vector<bool> rejected;
    std::vector<bool> excluded;
    double alpha = 0.05;

    std::size_t n_vertices() const { return p_value.size(); }

    static StatMap sized(std::size_t n_vertices, double alpha) {
        constexpr double nan = std::numeric_limits<double>::quiet_NaN();
        StatMap m;
        m.statistic.assign(n_vertices, nan);
        m.p_value.assign(n_vertices, nan);
        m.q_value.assign(n_vertices, nan);
        m.rejected.assign(n_vertices, false);
        m.excluded.assign(n_vertices, false);
        m.alpha = alpha;
        return m;
    }
};

inline std::string format_float(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return buf;
}

inline void write_statmap_tsv(std::ostream& out, const StatMap& map) {
    out << "vertex\tstatistic\tp\tq\trejected\n";
    for (std::size_t v = 0; v < map.n_vertices(); ++v) {
        if (map.excluded[v]) continue;
        out << v << '\t' << format_float(map.statistic[v]) << '\t' << format_float(map.p_value[v]) << '\t'
            << format_float(map.q_value[v]) << '\t' << (map.rejected[v] ? 1 : 0) << '\n';
    }
}

}  // namespace synckernel

#endif  // SYNCKERNEL_DATA_HPP
