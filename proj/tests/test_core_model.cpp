#include "rsmerton/core_model.hpp"
#include "rsmerton/spec_io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <string>

using namespace rsmerton;

namespace {

bool mentions(const std::vector<std::string>& v, const std::string& needle) {
    for (const auto& s : v)
        if (s.find(needle) != std::string::npos) return true;
    return false;
}

} // namespace

TEST(ValidateSpec, AcceptsPublishedExperiment) {
    for (double g : {0.7, 0.0, -0.5, -1.0}) EXPECT_TRUE(spec_violations(fig1_market(g)).empty());
    EXPECT_NO_THROW(validate_spec(fig1_market(-1.0)));
}

TEST(ValidateSpec, GeneratorExamples) {
    EXPECT_TRUE(generator_violations(RegimeGenerator{{{-6.04, 6.04}, {10.9, -10.9}}}).empty());
    EXPECT_TRUE(generator_violations(RegimeGenerator{{{-1, 1}, {1, -1}}}).empty());
    auto bad = generator_violations(RegimeGenerator{{{-1, 2}, {1, -1}}});
    ASSERT_EQ(bad.size(), 1u);
    EXPECT_EQ(bad[0], "row 0 sums to 1");
}

TEST(ValidateSpec, RejectsEverySingleFieldCorruption) {
    using Mut = void (*)(MarketSpec&);
    const std::vector<std::pair<Mut, std::string>> cases = {
        {[](MarketSpec& s) { s.sigma[0] = 0.0; }, "sigma[0]"},
        {[](MarketSpec& s) { s.sigma[1] = -0.25; }, "sigma[1]"},
        {[](MarketSpec& s) { s.rho[1] = 0.0; }, "rho[1]"},
        {[](MarketSpec& s) { s.horizon = 0.0; }, "horizon"},
        {[](MarketSpec& s) { s.gamma = 1.0; }, "gamma"},
        {[](MarketSpec& s) { s.gamma = 1.5; }, "gamma"},
        {[](MarketSpec& s) { s.generator.rates[0][1] = 7.0; }, "row 0 sums"},
        {[](MarketSpec& s) { s.generator.rates[1][0] = -10.9; s.generator.rates[1][1] = 10.9; }, "negative off-diagonal"},
        {[](MarketSpec& s) { s.r.pop_back(); }, "r has 1 entries"},
        {[](MarketSpec& s) { s.states = 3; }, "expected 3"},
        {[](MarketSpec& s) { s.alpha[0] = NAN; }, "alpha[0]"},
    };
    for (const auto& [mutate, needle] : cases) {
        MarketSpec s = fig1_market(-1.0);
        mutate(s);
        const auto v = spec_violations(s);
        EXPECT_FALSE(v.empty()) << needle;
        EXPECT_TRUE(mentions(v, needle)) << needle;
        EXPECT_THROW(validate_spec(s), SpecError);
    }
}

TEST(ValidateSpec, ReportsAllViolationsAtOnce) {
    MarketSpec s = fig1_market(2.0);
    s.sigma[0] = 0.0;
    s.rho[0] = -1.0;
    try {
        validate_spec(s);
        FAIL();
    } catch (const SpecError& e) {
        EXPECT_EQ(e.violations().size(), 3u);
    }
}

TEST(Utility, Examples) {
    EXPECT_DOUBLE_EQ(utility(1.0, Preferences::from_gamma(0.5)), 2.0);
    EXPECT_DOUBLE_EQ(utility(1.0, Preferences::from_gamma(0.0)), 0.0);
    EXPECT_DOUBLE_EQ(utility(2.0, Preferences::from_gamma(-1.0)), -0.5);
}

TEST(Utility, DomainErrors) {
    EXPECT_THROW(utility(0.0, Preferences::from_gamma(0.0)), DomainError);
    EXPECT_THROW(utility(0.0, Preferences::from_gamma(-1.0)), DomainError);
    EXPECT_THROW(utility(-1.0, Preferences::from_gamma(0.5)), DomainError);
    EXPECT_DOUBLE_EQ(utility(0.0, Preferences::from_gamma(0.5)), 0.0);
}

TEST(Utility, LogBranchSelectedNearZeroGamma) {
    EXPECT_TRUE(Preferences::from_gamma(5e-11).is_log);
    EXPECT_TRUE(Preferences::from_gamma(-5e-11).is_log);
    EXPECT_FALSE(Preferences::from_gamma(1e-4).is_log);
}

TEST(Utility, IncreasingAndConcaveOnGrid) {
    for (double g : {0.7, 0.5, 0.0, -0.5, -1.0, -3.0}) {
        const auto p = Preferences::from_gamma(g);
        for (double a = 0.05; a < 5.0; a *= 1.37) {
            const double b = a * 1.5;
            EXPECT_LT(utility(a, p), utility(b, p)) << g;
            EXPECT_GT(utility(0.5 * (a + b), p), 0.5 * (utility(a, p) + utility(b, p))) << g;
        }
    }
}

TEST(InverseMarginalUtility, Examples) {
    for (double g : {0.7, 0.5, -1.0, -0.5}) EXPECT_DOUBLE_EQ(inverse_marginal_utility(1.0, Preferences::from_gamma(g)), 1.0);
    EXPECT_DOUBLE_EQ(inverse_marginal_utility(1.0, Preferences::from_gamma(0.0)), 1.0);
    EXPECT_DOUBLE_EQ(inverse_marginal_utility(4.0, Preferences::from_gamma(0.5)), 0.0625);
    EXPECT_DOUBLE_EQ(inverse_marginal_utility(2.0, Preferences::from_gamma(0.0)), 0.5);
    EXPECT_THROW(inverse_marginal_utility(0.0, Preferences::from_gamma(0.5)), DomainError);
    EXPECT_THROW(inverse_marginal_utility(-1.0, Preferences::from_gamma(0.0)), DomainError);
}

TEST(InverseMarginalUtility, InvertsDerivativeProperty) {
    std::mt19937_64 eng(7);
    std::uniform_real_distribution<double> cdist(0.01, 20.0), gdist(-4.0, 0.95);
    for (int k = 0; k < 2000; ++k) {
        const double c = cdist(eng);
        const auto p = Preferences::from_gamma(k % 10 == 0 ? 0.0 : gdist(eng));
        const double y = p.is_log ? 1.0 / c : std::pow(c, p.gamma - 1.0);
        EXPECT_NEAR(inverse_marginal_utility(y, p), c, 1e-12 * std::max(1.0, c));
    }
}

TEST(ExcessReturn, Examples) {
    MarketSpec s = fig1_market(-1.0);
    s.alpha = {0.20, 0.05};
    s.r = {0.05, 0.05};
    EXPECT_NEAR(excess_return(s, 0), 0.15, 1e-15);
    EXPECT_EQ(excess_return(s, 1), 0.0);
    s.alpha[1] = 0.03;
    EXPECT_NEAR(excess_return(s, 1), -0.02, 1e-15);
    EXPECT_THROW(excess_return(s, 2), std::out_of_range);
}

TEST(Schedule, PiecewiseConstantOverride) {
    MarketSpec s = fig1_market(-1.0);
    s.schedule.push_back({0.5, {0.01, 0.02}, {0.11, 0.12}, {0.3, 0.4}});
    EXPECT_TRUE(spec_violations(s).empty());
    EXPECT_DOUBLE_EQ(s.rate(0.49, 0), 0.05);
    EXPECT_DOUBLE_EQ(s.rate(0.5, 1), 0.02);
    EXPECT_DOUBLE_EQ(s.vol(0.9, 1), 0.4);
    EXPECT_NEAR(s.excess(0.7, 0), 0.10, 1e-15);
    EXPECT_EQ(s.breakpoints(), std::vector<double>{0.5});
    s.schedule[0].sigma[0] = 0.0;
    EXPECT_TRUE(mentions(spec_violations(s), "schedule[0].sigma[0]"));
}

TEST(SpecJson, RoundTripAndHash) {
    const MarketSpec s = fig1_market(-0.5);
    const MarketSpec back = market_spec_from_json(to_json(s));
    EXPECT_EQ(to_json(back), to_json(s));
    EXPECT_EQ(spec_hash(back), spec_hash(s));
    EXPECT_NE(spec_hash(fig1_market(-1.0)), spec_hash(s));
    EXPECT_EQ(spec_hash(s).size(), 16u);
}

TEST(SpecJson, RejectsUnknownKeysWithFieldPaths) {
    auto j = to_json(fig1_market(-1.0));
    j["beta"] = 1.0;
    j["sigma"][1] = "x";
    try {
        market_spec_from_json(j, "spec");
        FAIL();
    } catch (const SpecError& e) {
        EXPECT_TRUE(mentions(e.violations(), "spec.beta: unknown key"));
        EXPECT_TRUE(mentions(e.violations(), "spec.sigma[1]: expected a number"));
    }
}

TEST(SpecJson, ValidationErrorsCarryPath) {
    auto j = to_json(fig1_market(-1.0));
    j["generator"] = {{-1, 2}, {1, -1}};
    try {
        market_spec_from_json(j, "spec");
        FAIL();
    } catch (const SpecError& e) {
        EXPECT_TRUE(mentions(e.violations(), "spec: row 0 sums to 1"));
    }
}
