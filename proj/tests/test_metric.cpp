#include <gtest/gtest.h>

#include <numbers>

#include "helpers.hpp"
#include "synckernel/metric.hpp"

using namespace synckernel;

namespace {
const OrthogonalTransform identity(Eigen::Index t) { return {Matrix::Identity(t, t), {}, {}}; }
}  // namespace

TEST(Euclidean, IdenticalColumnsAreZero) {
    std::mt19937_64 gen(1);
    const auto x = testutil::random_normalized(gen, 5, 6);
    EXPECT_EQ(euclidean_distance_map(x, x), Vector::Zero(6));
}

TEST(Euclidean, AntipodalIsFour) {
    std::mt19937_64 gen(2);
    const auto x = testutil::random_normalized(gen, 5, 6);
    const auto d = euclidean_distance_map(x, TimeSeriesMatrix(-x.values()));
    for (Eigen::Index v = 0; v < 6; ++v) EXPECT_NEAR(d[v], 4.0, 1e-12);
}

TEST(Geodesic, SpecialAngles) {
    Matrix x(2, 2), y(2, 2);
    x << 1, 1, 0, 0;
    y << 0, -1, 1, 0;  // orthogonal in column 0, antipodal in column 1
    const auto d = geodesic_distance_map(TimeSeriesMatrix(x), TimeSeriesMatrix(y), identity(2));
    EXPECT_NEAR(d[0], std::numbers::pi / 2, 1e-15);
    EXPECT_NEAR(d[1], std::numbers::pi, 1e-15);
    const auto same = geodesic_distance_map(TimeSeriesMatrix(x), TimeSeriesMatrix(x), identity(2));
    EXPECT_EQ(same[0], 0.0);
}

TEST(Geodesic, InnerProductAboveOneIsClamped) {
    Matrix x(2, 1), y(2, 1);
    x << 1.0 + 1e-16, 0.0;
    y << 1.0 + 1e-15, 0.0;  // inner product rounds above 1
    ASSERT_GT(x.col(0).dot(y.col(0)), 1.0);
    const auto d = geodesic_distance_map(TimeSeriesMatrix(x), TimeSeriesMatrix(y), identity(2));
    EXPECT_FALSE(std::isnan(d[0]));
    EXPECT_EQ(d[0], 0.0);
}

TEST(Geodesic, EuclideanIdentityOnSyncedPairs) {
    std::mt19937_64 gen(3);
    for (int rep = 0; rep < 20; ++rep) {
        const auto x = testutil::random_normalized(gen, 12, 40);
        const auto y = testutil::random_normalized(gen, 12, 40);
        const auto o = compute_sync_transform(x, y);
        const auto de = euclidean_distance_map(x, apply_transform(o, y));
        const auto dg = geodesic_distance_map(x, y, o);
        for (Eigen::Index v = 0; v < 40; ++v) EXPECT_NEAR(de[v], 2.0 * (1.0 - std::cos(dg[v])), 1e-8);
    }
}

TEST(Tensor, TwoSubjects) {
    std::mt19937_64 gen(4);
    const auto c = testutil::random_cohort(gen, 2, 6, 5);
    const auto d = build_distance_tensor(c, DistanceKind::geodesic);
    const auto o = compute_sync_transform(c.subject(0).data, c.subject(1).data);
    const auto expected = geodesic_distance_map(c.subject(0).data, c.subject(1).data, o);
    for (std::size_t v = 0; v < 5; ++v) {
        EXPECT_EQ(d.at(v, 0, 0), 0.0);
        EXPECT_EQ(d.at(v, 1, 1), 0.0);
        EXPECT_EQ(d.at(v, 0, 1), d.at(v, 1, 0));
        EXPECT_NEAR(d.at(v, 0, 1), expected[static_cast<Eigen::Index>(v)], 1e-15);
    }
}

TEST(Tensor, PairOrderDoesNotMatter) {
    std::mt19937_64 gen(5);
    for (int rep = 0; rep < 10; ++rep) {
        const auto x = testutil::random_normalized(gen, 10, 30);
        const auto y = testutil::random_normalized(gen, 10, 30);
        const auto ij = detail::pair_distances(x, y, true, true);
        const auto ji = detail::pair_distances(y, x, true, true);
        EXPECT_LT((ij.geodesic - ji.geodesic).cwiseAbs().maxCoeff(), 1e-8);
        EXPECT_LT((ij.euclidean_sq - ji.euclidean_sq).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(Tensor, GeodesicRangeAndAgreementBetweenBuilders) {
    std::mt19937_64 gen(6);
    const auto c = testutil::random_cohort(gen, 6, 8, 20);
    const auto both = build_distance_tensors(c);
    const auto geo = build_distance_tensor(c, DistanceKind::geodesic);
    EXPECT_EQ(both.geodesic.raw(), geo.raw());
    EXPECT_EQ(both.euclidean_sq.raw(), build_distance_tensor(c, DistanceKind::euclidean_sq).raw());
    for (double x : geo.raw()) {
        EXPECT_GE(x, 0.0);
        EXPECT_LE(x, std::numbers::pi);
    }
}

TEST(Tensor, SampledMatchesFull) {
    std::mt19937_64 gen(7);
    const auto c = testutil::random_cohort(gen, 5, 6, 9);
    const std::vector<SubjectPair> pairs{{0, 3}, {1, 2}, {2, 4}};
    const auto s = build_distance_tensor(c, DistanceKind::euclidean_sq, pairs);
    const auto f = build_distance_tensor(c, DistanceKind::euclidean_sq);
    ASSERT_TRUE(s.is_sampled());
    for (std::size_t v = 0; v < 9; ++v)
        for (std::size_t k = 0; k < pairs.size(); ++k)
            EXPECT_EQ(s.pair_values(v)[k], f.at(v, pairs[k].first, pairs[k].second));
    EXPECT_EQ(f.restrict_to_pairs(pairs).raw(), s.raw());
}

TEST(Tensor, InvalidPairsRejected) {
    std::mt19937_64 gen(8);
    const auto c = testutil::random_cohort(gen, 3, 5, 4);
    EXPECT_THROW(build_distance_tensor(c, DistanceKind::euclidean_sq, std::vector<SubjectPair>{{0, 3}}), UsageError);
    EXPECT_THROW(build_distance_tensor(c, DistanceKind::euclidean_sq, std::vector<SubjectPair>{{1, 1}}), UsageError);
}

TEST(Tensor, ThreadCountDoesNotChangeValues) {
    std::mt19937_64 gen(9);
    const auto c = testutil::random_cohort(gen, 7, 8, 15);
    const auto one = build_distance_tensors(c, {1});
    const auto many = build_distance_tensors(c, {5});
    EXPECT_EQ(one.geodesic.raw(), many.geodesic.raw());
    EXPECT_EQ(one.euclidean_sq.raw(), many.euclidean_sq.raw());
}

TEST(Tensor, SelectSubsetsBlocks) {
    std::mt19937_64 gen(10);
    const auto c = testutil::random_cohort(gen, 5, 6, 3);
    const auto d = build_distance_tensor(c, DistanceKind::geodesic);
    const auto s = d.select({4, 1, 2});
    for (std::size_t v = 0; v < 3; ++v) {
        EXPECT_EQ(s.at(v, 0, 1), d.at(v, 4, 1));
        EXPECT_EQ(s.at(v, 2, 0), d.at(v, 2, 4));
    }
}

TEST(Tensor, ExcludedVerticesAreNaN) {
    std::mt19937_64 gen(11);
    std::vector<Subject> subjects;
    for (int i = 0; i < 3; ++i) {
        Matrix m = testutil::random_matrix(gen, 6, 4);
        m.col(2).setZero();
        subjects.push_back({"s" + std::to_string(i), normalize_columns(TimeSeriesMatrix(m), NormalizeMode::permissive).matrix});
    }
    const Cohort c(subjects, Vector::LinSpaced(3, 0, 2), {2});
    const auto d = build_distance_tensor(c, DistanceKind::geodesic);
    EXPECT_TRUE(d.excluded(2));
    EXPECT_TRUE(std::isnan(d.at(2, 0, 1)));
    EXPECT_FALSE(std::isnan(d.at(1, 0, 1)));
}

TEST(Kernel, WeightsFromDistances) {
    auto d = DistanceTensor::full(DistanceKind::geodesic, 2, 1);
    d.set_symmetric(0, 0, 1, 1.0);
    const auto k = kernel_at_vertex(d, 0, 2.6);
    EXPECT_EQ(k.weights(0, 0), 1.0);
    EXPECT_NEAR(k.weights(0, 1), 0.07427, 1e-5);
    EXPECT_NEAR(k.weights(0, 1), std::exp(-2.6), 1e-15);
}

TEST(Kernel, StrictlyDecreasingInDistance) {
    const int n = 200;
    auto d = DistanceTensor::full(DistanceKind::geodesic, 2, n);
    for (int v = 0; v < n; ++v) d.set_symmetric(v, 0, 1, std::numbers::pi * v / (n - 1));
    const auto all = kernel_from_distances(d, 2.6);
    for (int v = 1; v < n; ++v) EXPECT_LT(all[v].weights(0, 1), all[v - 1].weights(0, 1));
}

TEST(Kernel, InvalidInputs) {
    auto geo = DistanceTensor::full(DistanceKind::geodesic, 2, 1);
    EXPECT_THROW(kernel_at_vertex(geo, 0, 0.0), UsageError);
    EXPECT_THROW(kernel_at_vertex(geo, 0, -1.0), UsageError);
    auto euc = DistanceTensor::full(DistanceKind::euclidean_sq, 2, 1);
    EXPECT_THROW(kernel_at_vertex(euc, 0, 1.0), UsageError);
}

TEST(DistanceFormat, RoundTripKeepsExclusion) {
    testutil::TempDir dir;
    std::mt19937_64 gen(12);
    const auto c = testutil::random_cohort(gen, 4, 6, 5);
    auto d = build_distance_tensor(c, DistanceKind::geodesic);
    d.mark_excluded(3);
    store_distance_tensor(d, dir / "d.skdt");
    const auto back = load_distance_tensor(dir / "d.skdt");
    EXPECT_EQ(back.kind(), DistanceKind::geodesic);
    EXPECT_TRUE(back.excluded(3));
    EXPECT_FALSE(back.excluded(2));
    for (std::size_t v = 0; v < 5; ++v) {
        if (v == 3) continue;
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(back.at(v, i, j), d.at(v, i, j));
    }
    auto bytes = testutil::slurp(dir / "d.skdt");
    bytes.pop_back();
    testutil::spit(dir / "bad.skdt", bytes);
    EXPECT_THROW(load_distance_tensor(dir / "bad.skdt"), TruncatedError);
}
