#include "rsmerton/ctmc.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace rsmerton;

namespace {

constexpr std::uint64_t kSeed = 20261016;

const RegimeGenerator kFig1{{{-6.04, 6.04}, {10.9, -10.9}}};

std::vector<RegimeGenerator> fixture_generators() {
    return {kFig1,
            RegimeGenerator{{{-1, 1}, {1, -1}}},
            RegimeGenerator{{{-2, 2}, {1, -1}}},
            RegimeGenerator{{{-0.3, 0.3}, {4.0, -4.0}}},
            RegimeGenerator{{{-3, 1, 2}, {0.5, -1, 0.5}, {2, 2, -4}}}};
}

oracle::Mat2 as_mat(const RegimeGenerator& g) {
    return {{{g(0, 0), g(0, 1)}, {g(1, 0), g(1, 1)}}};
}

} // namespace

TEST(SamplePath, ZeroGeneratorNeverJumps) {
    const auto p = sample_path(RegimeGenerator::zero(2), 1, 5.0, RngSpec{3, 0});
    EXPECT_TRUE(p.jump_times.empty());
    for (double t : {0.0, 1.0, 4.99, 5.0}) EXPECT_EQ(p.state_at(t), 1u);
}

TEST(SamplePath, AbsorbingStateStopsTheChain) {
    const RegimeGenerator gen{{{0, 0}, {2, -2}}};
    for (std::uint64_t s = 0; s < 200; ++s) {
        const auto p = sample_path(gen, 1, 10.0, RngSpec{s, 0});
        ASSERT_LE(p.jump_times.size(), 1u);
        if (!p.jump_times.empty()) {
            EXPECT_EQ(p.jump_targets[0], 0u);
        }
        EXPECT_TRUE(sample_path(gen, 0, 10.0, RngSpec{s, 0}).jump_times.empty());
    }
}

TEST(SamplePath, StructuralInvariantsOnRandomGenerators) {
    std::mt19937_64 eng(11);
    std::uniform_real_distribution<double> rate(0.0, 8.0);
    for (int k = 0; k < 200; ++k) {
        const std::size_t n = 2 + k % 3;
        RegimeGenerator gen = RegimeGenerator::zero(n);
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0;
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) sum += gen.rates[i][j] = rate(eng);
            gen.rates[i][i] = -sum;
        }
        const double horizon = 0.5 + k * 0.01;
        const auto p = sample_path(gen, k % n, horizon, RngSpec{static_cast<std::uint64_t>(k), 1});
        std::size_t prev = p.initial_state;
        for (std::size_t m = 0; m < p.jump_times.size(); ++m) {
            EXPECT_GT(p.jump_times[m], m ? p.jump_times[m - 1] : 0.0);
            EXPECT_LE(p.jump_times[m], horizon);
            EXPECT_NE(p.jump_targets[m], prev);
            // right-continuity
            EXPECT_EQ(p.state_at(p.jump_times[m]), p.jump_targets[m]);
            prev = p.jump_targets[m];
        }
    }
}

TEST(SamplePath, Reproducible) {
    const RngSpec rng{123456789, 42};
    EXPECT_EQ(sample_path(kFig1, 0, 3.0, rng), sample_path(kFig1, 0, 3.0, rng));
    EXPECT_NE(sample_path(kFig1, 0, 3.0, rng), sample_path(kFig1, 0, 3.0, RngSpec{123456789, 43}));

    std::ostringstream a, b;
    write_path_csv(a, sample_path(kFig1, 0, 3.0, rng));
    write_path_csv(b, sample_path(kFig1, 0, 3.0, rng));
    EXPECT_EQ(a.str(), b.str());
}

TEST(SamplePath, FirstHoldingTimeIsExponential) {
    Engine eng = make_engine(RngSpec{2024, 0});
    RunningStats stats;
    for (int p = 0; p < 100000; ++p) {
        const auto path = sample_path(kFig1, 0, 0.0, 50.0, eng);
        ASSERT_FALSE(path.jump_times.empty());
        stats.add(path.jump_times[0]);
    }
    const double expected = 1.0 / 6.04;
    EXPECT_NEAR(expected, 0.16556, 1e-5);
    EXPECT_LE(std::abs(stats.mean() - expected), 3.0 * stats.std_error());
}

TEST(SamplePath, MarginalsMatchMatrixExponential) {
    const double horizon = 1.0;
    for (const auto& gen : {kFig1, RegimeGenerator{{{-2, 2}, {1, -1}}}}) {
        for (std::size_t start = 0; start < 2; ++start) {
            for (double t : {horizon / 4, horizon / 2, horizon}) {
                const auto p = oracle::expm2(oracle::scale(as_mat(gen), t));
                Engine eng = make_engine(RngSpec{99, start});
                const int n = 100000;
                int in1 = 0;
                for (int k = 0; k < n; ++k) in1 += sample_path(gen, start, 0.0, t, eng).final_state() == 1;
                const double phat = static_cast<double>(in1) / n;
                const double se = std::sqrt(p[start][1] * (1 - p[start][1]) / n);
                EXPECT_LE(std::abs(phat - p[start][1]), 3 * se) << "start " << start << " t " << t;
            }
        }
    }
}

TEST(StationaryDistribution, Examples) {
    auto pi = stationary_distribution(RegimeGenerator{{{-1, 1}, {1, -1}}});
    EXPECT_NEAR(pi[0], 0.5, 1e-15);
    EXPECT_NEAR(pi[1], 0.5, 1e-15);

    pi = stationary_distribution(RegimeGenerator{{{-2, 2}, {1, -1}}});
    EXPECT_NEAR(pi[0], 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(pi[1], 2.0 / 3.0, 1e-12);

    pi = stationary_distribution(kFig1);
    EXPECT_NEAR(pi[0], 10.9 / 16.94, 1e-10);
    EXPECT_NEAR(pi[1], 6.04 / 16.94, 1e-10);
    EXPECT_NEAR(pi[0], 0.6435, 1e-4);
}

TEST(StationaryDistribution, SolvesBalanceForFixtures) {
    for (const auto& gen : fixture_generators()) {
        const auto pi = stationary_distribution(gen);
        double sum = 0;
        for (double v : pi) {
            EXPECT_GE(v, 0.0);
            sum += v;
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
        for (std::size_t j = 0; j < gen.size(); ++j) {
            double flow = 0;
            for (std::size_t i = 0; i < gen.size(); ++i) flow += pi[i] * gen(i, j);
            EXPECT_NEAR(flow, 0.0, 1e-10);
        }
    }
}

TEST(StationaryDistribution, ReducibleGeneratorNamesClosedClass) {
    try {
        stationary_distribution(RegimeGenerator{{{0, 0, 0}, {1, -2, 1}, {0, 1, -1}}});
        FAIL();
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("closed class {0}"), std::string::npos) << e.what();
    }
}

TEST(DynkinCheck, ZeroGeneratorIsExactlyZero) {
    const auto rep = dynkin_check(RegimeGenerator::zero(2), {3.0, -1.0}, 2.0, 1000, RngSpec{1, 0});
    EXPECT_EQ(rep.estimate, 0.0);
    EXPECT_EQ(rep.std_error, 0.0);
    EXPECT_EQ(*rep.z_score(), 0.0);
}

TEST(DynkinCheck, MartingaleMeanIsZero) {
    const auto rep = dynkin_check(kFig1, {0.0, 1.0}, 1.0, 100000, RngSpec{5, 0});
    EXPECT_LE(std::abs(rep.estimate), 3 * rep.std_error);
    EXPECT_GT(rep.std_error, 0.0);
    EXPECT_EQ(rep.n_paths, 100000u);
    EXPECT_EQ(rep.rng.algorithm, kRngAlgorithm);
}

TEST(DynkinCheck, FixtureGeneratorsPassZTest) {
    std::uint64_t stream = 0;
    for (const auto& gen : fixture_generators()) {
        std::vector<double> g(gen.size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::sin(1.0 + 2.0 * i);
        const auto rep = dynkin_check(gen, g, 1.0, 100000, RngSpec{kSeed, stream++});
        EXPECT_LT(std::abs(*rep.z_score()), 3.0);
    }
}

TEST(DynkinCheck, ZScoresAreStandardNormalAcrossReplications) {
    // 40 independent replications per generator: mean z ~ N(0, 1/40), rms z ~ 1
    for (const auto& gen : fixture_generators()) {
        std::vector<double> g(gen.size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::sin(1.0 + 2.0 * i);
        double sum = 0, sum2 = 0;
        const int reps = 40;
        for (int k = 0; k < reps; ++k) {
            const double z = *dynkin_check(gen, g, 1.0, 20000, RngSpec{kSeed, 1000u + k}).z_score();
            sum += z;
            sum2 += z * z;
        }
        EXPECT_LT(std::abs(sum / reps), 4.0 / std::sqrt(reps));
        EXPECT_GT(std::sqrt(sum2 / reps), 0.6);
        EXPECT_LT(std::sqrt(sum2 / reps), 1.4);
    }
}

TEST(DynkinCheck, RejectsTooFewPaths) {
    EXPECT_THROW(dynkin_check(kFig1, {0, 1}, 1.0, 999, RngSpec{}), DomainError);
}

TEST(ChainExpectation, MatchesMatrixExponential) {
    // E[G(J_t) | J_0 = 0] for G = (0, 1) is P_01(t)
    const double t = 0.3;
    const auto p = oracle::expm2(oracle::scale(as_mat(kFig1), t));
    Engine eng = make_engine(RngSpec{77, 0});
    RunningStats stats;
    for (int k = 0; k < 100000; ++k) stats.add(sample_path(kFig1, 0, 0.0, t, eng).final_state() == 1 ? 1.0 : 0.0);
    EXPECT_LE(std::abs(stats.mean() - p[0][1]), 3 * stats.std_error());
}

TEST(PathCsv, Format) {
    JumpPath p{0, {0.25, 0.5}, {1, 0}, 1.0, 0.0};
    std::ostringstream out;
    write_path_csv(out, p);
    EXPECT_EQ(out.str(), "t_jump,new_state\n0,0\n0.25,1\n0.5,0\n");
}
