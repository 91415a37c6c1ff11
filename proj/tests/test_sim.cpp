#include <gtest/gtest.h>

#include "helpers.hpp"
#include "synckernel/sim.hpp"

using namespace synckernel;

namespace {
SimulationConfig small_config(std::uint64_t seed) {
    SimulationConfig cfg;
    cfg.n_subjects = 12;
    cfg.n_timepoints = 30;
    cfg.n_vertices = 40;
    cfg.seed = seed;
    return cfg;
}
}  // namespace

TEST(Generator, ColumnsAreNormalized) {
    const auto c = generate_synthetic_cohort(small_config(1));
    ASSERT_EQ(c.size(), 12u);
    EXPECT_EQ(c.n_timepoints(), 30u);
    EXPECT_EQ(c.n_vertices(), 40u);
    for (const auto& s : c.subjects())
        for (Eigen::Index v = 0; v < 40; ++v) {
            EXPECT_NEAR(s.data.values().col(v).sum(), 0.0, 1e-12);
            EXPECT_NEAR(s.data.values().col(v).norm(), 1.0, 1e-12);
        }
}

TEST(Generator, SameSeedSameCohort) {
    const auto a = generate_synthetic_cohort(small_config(2));
    const auto b = generate_synthetic_cohort(small_config(2), {4});
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.subject(i).data.values(), b.subject(i).data.values());
    EXPECT_EQ(a.scores(), b.scores());
    const auto c = generate_synthetic_cohort(small_config(3));
    EXPECT_NE(a.scores(), c.scores());
}

TEST(Generator, ScoresWithinRange) {
    auto cfg = small_config(4);
    cfg.n_subjects = 200;
    cfg.score_low = -3.0;
    cfg.score_high = 2.0;
    const auto c = generate_synthetic_cohort(cfg);
    EXPECT_GE(c.scores().minCoeff(), -3.0);
    EXPECT_LE(c.scores().maxCoeff(), 2.0);
}

TEST(Generator, SubjectsDifferByTemporalRotation) {
    auto cfg = small_config(5);
    cfg.background_noise = 0.0;
    const auto c = generate_synthetic_cohort(cfg);
    // without background noise every pair syncs exactly
    const auto& x = c.subject(0).data;
    const auto& y = c.subject(1).data;
    EXPECT_GT((x.values() - y.values()).norm(), 0.5);
    EXPECT_LT(sync_error(x, y, compute_sync_transform(x, y)), 1e-10);
}

TEST(Generator, TooFewTimepointsForRank) {
    auto cfg = small_config(6);
    cfg.n_timepoints = 10;
    EXPECT_THROW(generate_synthetic_cohort(cfg), DataError);
}

TEST(Generator, InvalidConfig) {
    auto cfg = small_config(7);
    cfg.roi = {40};
    EXPECT_THROW(cfg.validate(), UsageError);
    cfg = small_config(7);
    cfg.sigma_max = -0.1;
    EXPECT_THROW(cfg.validate(), UsageError);
    cfg = small_config(7);
    cfg.score_low = cfg.score_high;
    EXPECT_THROW(cfg.validate(), UsageError);
}

TEST(Generator, DefaultRoiIsFirstTenth) {
    SimulationConfig cfg;
    const auto roi = cfg.resolved_roi();
    ASSERT_EQ(roi.size(), 50u);
    EXPECT_EQ(roi.front(), 0u);
    EXPECT_EQ(roi.back(), 49u);
}

TEST(Generator, PaperDefaults) {
    SimulationConfig cfg;
    EXPECT_EQ(cfg.n_subjects, 50u);
    EXPECT_EQ(cfg.sigma_max, 0.3);
}

TEST(RoiNoise, NonRoiBitIdenticalAndMinimumScoreUntouched) {
    const auto cfg = small_config(8);
    const auto base = generate_synthetic_cohort(cfg);
    const auto noisy = inject_roi_noise(base, cfg);
    const auto roi = cfg.resolved_roi();
    Eigen::Index argmin = 0;
    base.scores().minCoeff(&argmin);
    for (std::size_t i = 0; i < base.size(); ++i) {
        const auto& a = base.subject(i).data.values();
        const auto& b = noisy.subject(i).data.values();
        for (Eigen::Index v = static_cast<Eigen::Index>(roi.size()); v < 40; ++v) EXPECT_EQ(a.col(v), b.col(v));
        if (static_cast<Eigen::Index>(i) == argmin) {
            EXPECT_EQ(a, b);
        } else {
            EXPECT_GT((a.leftCols(4) - b.leftCols(4)).norm(), 0.0);
            for (auto v : roi) EXPECT_NEAR(b.col(static_cast<Eigen::Index>(v)).norm(), 1.0, 1e-12);
        }
    }
}

TEST(RoiNoise, ZeroSigmaChangesNothing) {
    auto cfg = small_config(9);
    cfg.sigma_max = 0.0;
    const auto base = generate_synthetic_cohort(cfg);
    const auto noisy = inject_roi_noise(base, cfg);
    for (std::size_t i = 0; i < base.size(); ++i) EXPECT_EQ(base.subject(i).data.values(), noisy.subject(i).data.values());
}

TEST(RoiNoise, ConstantScoresAreDegenerate) {
    const auto cfg = small_config(10);
    const auto base = generate_synthetic_cohort(cfg);
    EXPECT_THROW(inject_roi_noise(base.with_scores(Vector::Constant(12, 1.0)), cfg), DegenerateError);
}

TEST(Study, SmallRunIsDeterministicAndRatesAreFractions) {
    auto cfg = small_config(11);
    TestConfig test;
    test.n_permutations = 60;
    test.seed = 11;
    const auto a = run_simulation_study(cfg, test, 2000);
    test.parallelism.threads = 3;
    const auto b = run_simulation_study(cfg, test, 2000);
    EXPECT_EQ(a.n_pairs, pair_count(12));
    EXPECT_EQ(a.kernel.map.p_value, b.kernel.map.p_value);
    EXPECT_EQ(a.pairwise.map.p_value, b.pairwise.map.p_value);
    for (const auto* m : {&a.kernel, &a.pairwise}) {
        EXPECT_GE(m->roi_detection_rate, 0.0);
        EXPECT_LE(m->roi_detection_rate, 1.0);
        EXPECT_GE(m->false_positive_rate, 0.0);
        EXPECT_LE(m->false_positive_rate, 1.0);
    }
}

TEST(Study, Summarize) {
    auto map = StatMap::sized(4, 0.05);
    map.rejected = {true, false, true, false};
    map.excluded = {false, false, false, true};
    const auto s = summarize(map, {0, 1});
    EXPECT_DOUBLE_EQ(s.roi_detection_rate, 0.5);
    EXPECT_DOUBLE_EQ(s.false_positive_rate, 1.0);
}

TEST(Study, ConfigFromJson) {
    const auto j = nlohmann::json::parse(R"({"n_subjects": 20, "roi_size": 3, "score_range": [1, 2], "seed": 5})");
    const auto cfg = simulation_config_from_json(j);
    EXPECT_EQ(cfg.n_subjects, 20u);
    EXPECT_EQ(cfg.roi, (std::vector<std::size_t>{0, 1, 2}));
    EXPECT_EQ(cfg.score_low, 1.0);
    EXPECT_EQ(cfg.seed, 5u);
    EXPECT_THROW(simulation_config_from_json(nlohmann::json::parse(R"({"n_subjects": "x"})")), UsageError);
}
