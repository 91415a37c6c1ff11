#ifndef SYNCKERNEL_TEST_HELPERS_HPP
#define SYNCKERNEL_TEST_HELPERS_HPP

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "synckernel/data.hpp"

namespace testutil {

using synckernel::Matrix;
using synckernel::Vector;

inline Matrix random_matrix(std::mt19937_64& gen, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = n(gen);
    return m;
}

inline synckernel::TimeSeriesMatrix random_normalized(std::mt19937_64& gen, Eigen::Index t, Eigen::Index v) {
    return synckernel::normalize_columns(synckernel::TimeSeriesMatrix(random_matrix(gen, t, v)),
                                         synckernel::NormalizeMode::strict)
        .matrix;
}

/// Haar-distributed orthogonal matrix from QR of a Gaussian matrix with sign fix.
inline Matrix random_orthogonal(std::mt19937_64& gen, Eigen::Index n) {
    Eigen::HouseholderQR<Matrix> qr(random_matrix(gen, n, n));
    Matrix q = qr.householderQ();
    const Matrix r = qr.matrixQR();
    for (Eigen::Index i = 0; i < n; ++i)
        if (r(i, i) < 0) q.col(i) *= -1.0;
    return q;
}

inline synckernel::Cohort random_cohort(std::mt19937_64& gen, std::size_t n, Eigen::Index t, Eigen::Index v) {
    std::vector<synckernel::Subject> subjects;
    Vector y(static_cast<Eigen::Index>(n));
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (std::size_t i = 0; i < n; ++i) {
        subjects.push_back({"s" + std::to_string(i), random_normalized(gen, t, v)});
        y[static_cast<Eigen::Index>(i)] = u(gen);
    }
    return synckernel::Cohort(std::move(subjects), y);
}

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("synckernel_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
}

}  // namespace testutil

#endif
