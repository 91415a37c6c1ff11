#include <gtest/gtest.h>

#include "helpers.hpp"
#include "oracles.hpp"
#include "synckernel/sync.hpp"

using namespace synckernel;

namespace {
double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }
}  // namespace

TEST(Sync, SelfSyncIsIdentity) {
    std::mt19937_64 gen(1);
    // raw Gaussian data: X X^T has distinct, nonzero singular values almost surely
    const TimeSeriesMatrix x(testutil::random_matrix(gen, 6, 20));
    const auto o = compute_sync_transform(x, x);
    EXPECT_LT(max_abs(o.matrix - Matrix::Identity(6, 6)), 1e-8);
}

TEST(Sync, RecoversKnownRotation) {
    std::mt19937_64 gen(2);
    for (int rep = 0; rep < 20; ++rep) {
        const auto y = testutil::random_normalized(gen, 12, 40);
        const Matrix r = testutil::random_orthogonal(gen, 12);
        const TimeSeriesMatrix x(r * y.values());
        const auto o = compute_sync_transform(x, y);
        EXPECT_LT(sync_error(x, y, o), 1e-10);
        EXPECT_LT(o.orthogonality_error(), 1e-12);
    }
}

TEST(Sync, TwoTimepointsMatchesExhaustiveScan) {
    std::mt19937_64 gen(3);
    for (int rep = 0; rep < 5; ++rep) {
        const TimeSeriesMatrix x(testutil::random_matrix(gen, 2, 7));
        const TimeSeriesMatrix y(testutil::random_matrix(gen, 2, 7));
        const auto o = compute_sync_transform(x, y);
        EXPECT_LT(max_abs(o.matrix - oracle::procrustes_2x2_scan(x.values(), y.values())), 1e-4);
    }
}

TEST(Sync, ResidualBeatsRandomOrthogonalMatrices) {
    std::mt19937_64 gen(4);
    const auto x = testutil::random_normalized(gen, 10, 30);
    const auto y = testutil::random_normalized(gen, 10, 30);
    const double best = sync_error(x, y, compute_sync_transform(x, y));
    for (int k = 0; k < 1000; ++k)
        EXPECT_LE(best, sync_error(x, y, OrthogonalTransform{testutil::random_orthogonal(gen, 10), {}, {}}) + 1e-12);
}

TEST(Sync, ReverseDirectionIsTranspose) {
    std::mt19937_64 gen(5);
    const auto x = testutil::random_normalized(gen, 8, 50);
    const auto y = testutil::random_normalized(gen, 8, 50);
    const auto xy = compute_sync_transform(x, y);
    const auto yx = compute_sync_transform(y, x);
    EXPECT_NEAR(sync_error(x, y, xy), sync_error(y, x, yx), 1e-10);
}

TEST(Sync, ShapeMismatchThrows) {
    std::mt19937_64 gen(6);
    EXPECT_THROW(compute_sync_transform(testutil::random_normalized(gen, 5, 4), testutil::random_normalized(gen, 5, 3)),
                 DimensionError);
    EXPECT_THROW(compute_sync_transform(testutil::random_normalized(gen, 5, 4), testutil::random_normalized(gen, 6, 4)),
                 DimensionError);
}

TEST(Apply, IdentityLeavesDataUnchanged) {
    std::mt19937_64 gen(7);
    const auto y = testutil::random_normalized(gen, 5, 9);
    const auto out = apply_transform({Matrix::Identity(5, 5), {}, {}}, y);
    EXPECT_EQ(out.values(), y.values());
}

TEST(Apply, TransposeUndoesTransform) {
    std::mt19937_64 gen(8);
    const auto y = testutil::random_normalized(gen, 9, 15);
    const OrthogonalTransform o{testutil::random_orthogonal(gen, 9), "a", "b"};
    const auto back = apply_transform(o.inverse(), apply_transform(o, y));
    EXPECT_LT(max_abs(back.values() - y.values()), 1e-10);
    EXPECT_EQ(o.inverse().source_id, "b");
}

TEST(Apply, PreservesColumnNorms) {
    std::mt19937_64 gen(9);
    const TimeSeriesMatrix y(testutil::random_matrix(gen, 9, 15));
    const OrthogonalTransform o{testutil::random_orthogonal(gen, 9), {}, {}};
    const auto out = apply_transform(o, y);
    for (Eigen::Index c = 0; c < 15; ++c) EXPECT_NEAR(out.values().col(c).norm(), y.values().col(c).norm(), 1e-10);
}

TEST(Apply, WrongSizeThrows) {
    std::mt19937_64 gen(10);
    EXPECT_THROW(apply_transform({Matrix::Identity(4, 4), {}, {}}, testutil::random_normalized(gen, 5, 3)), DimensionError);
}

TEST(SyncError, TrivialCases) {
    std::mt19937_64 gen(11);
    const auto x = testutil::random_normalized(gen, 6, 8);
    EXPECT_EQ(sync_error(x, x, {Matrix::Identity(6, 6), {}, {}}), 0.0);
    const TimeSeriesMatrix neg(-x.values());
    EXPECT_EQ(sync_error(x, neg, {-Matrix::Identity(6, 6), {}, {}}), 0.0);
}

TEST(TransformFormat, RoundTrip) {
    testutil::TempDir dir;
    std::mt19937_64 gen(12);
    const OrthogonalTransform o{testutil::random_orthogonal(gen, 7), {}, {}};
    store_transform(o, dir / "o.skot");
    EXPECT_EQ(load_transform(dir / "o.skot").matrix, o.matrix);
    auto bytes = testutil::slurp(dir / "o.skot");
    bytes.resize(bytes.size() - 3);
    testutil::spit(dir / "t.skot", bytes);
    EXPECT_THROW(load_transform(dir / "t.skot"), TruncatedError);
    bytes[1] = 'Z';
    testutil::spit(dir / "m.skot", bytes);
    EXPECT_THROW(load_transform(dir / "m.skot"), BadMagicError);
}
