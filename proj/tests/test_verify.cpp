#include "cvak/verify.hpp"

#include <gtest/gtest.h>

using namespace cvak;
using namespace cvak::verify;

TEST(FiniteDiff, AnalyticTargets)
{
    const CTensor x = CTensor::scalar({1, 1});
    const auto g = finite_diff_wirtinger([](const CTensor& z) { return std::norm(z[0]); }, x, 1e-5).dzbar()[0];
    EXPECT_NEAR(g.real(), 1.0, 1e-8);
    EXPECT_NEAR(g.imag(), 1.0, 1e-8);
    const auto r = finite_diff_wirtinger([](const CTensor& z) { return z[0].real(); }, CTensor::scalar({-2, 7}), 1e-5)
                       .dzbar()[0];
    EXPECT_NEAR(r.real(), 0.5, 1e-10);
    EXPECT_NEAR(r.imag(), 0.0, 1e-10);
    EXPECT_THROW((void)finite_diff_wirtinger([](const CTensor&) { return 0.0; }, x, 0.0), ConfigError);
}

TEST(FiniteDiff, RichardsonConsistency)
{
    // Central differences are O(h²): shrinking h by 10 shrinks the error ~100x.
    const cscalar z0{0.4, -0.3};
    const auto f = [](const CTensor& z) { return std::exp(z[0]).real() * std::abs(z[0]); };
    const CTensor x = CTensor::scalar(z0);
    const cscalar g1 = finite_diff_wirtinger(f, x, 1e-3).dzbar()[0];
    const cscalar g2 = finite_diff_wirtinger(f, x, 1e-4).dzbar()[0];
    Tape t;
    const Var v = t.leaf(x);
    const Var l = ad::mul(t, ad::real_part(t, ad::exp(t, v)), ad::magnitude(t, v));
    const cscalar exact = backward(t, l).wrt(v).dzbar()[0];
    const double e1 = std::abs(g1 - exact);
    const double e2 = std::abs(g2 - exact);
    EXPECT_LT(e2, e1 / 50.0 + 100.0 * std::numeric_limits<double>::epsilon() / 1e-4);
}

TEST(FiniteDiff, TrainedModelLossMatchesAutodiff)
{
    const auto report = check_model_gradients(30, 77);
    EXPECT_EQ(report.violations, 0u) << report.to_text();
    EXPECT_EQ(report.checks, 30u);
}

TEST(KinkDistance, DetectsReluAndMagnitudeKinks)
{
    Tape t;
    const Var x = t.leaf(CTensor({2}, {cscalar{1e-4, 2.0}, cscalar{-3.0, 0.5}}));
    (void)ad::split_relu(t, x);
    EXPECT_NEAR(kink_distance(t), 1e-4, 1e-18);
    Tape u;
    (void)ad::magnitude(u, u.leaf(CTensor::scalar({3e-5, 4e-5})));
    EXPECT_NEAR(kink_distance(u), 5e-5, 1e-18);
    Tape w;
    (void)ad::phase(w, w.leaf(CTensor::scalar({-2.0, 1e-6})));
    EXPECT_NEAR(kink_distance(w), 1e-6, 1e-18);
}

TEST(SetEquivalence, NoViolationsAcrossCases)
{
    for (const double eps : {0.01, 0.7, 2.5}) {
        const auto r = check_set_equivalence(eps, 200000, 3);
        EXPECT_EQ(r.violations, 0u) << r.to_text();
        EXPECT_EQ(r.checks, 200000u);
        EXPECT_LE(r.max_abs_error, 1e-12);
    }
    EXPECT_THROW((void)check_set_equivalence(0.7, 0, 1), ConfigError);
}

TEST(SetEquivalence, CaseOneBoundaryContainsAntipode)
{
    const double eps = 0.8;
    const cscalar x = std::polar(eps / 2.0, 0.3);
    const cscalar z = -x;
    EXPECT_LE(std::abs(z - x), eps);
    EXPECT_FALSE(phase_budget(CTensor::scalar(x), eps)[0].restricted);
}

TEST(SetEquivalence, DeterministicPerSeed)
{
    const auto a = check_set_equivalence(0.7, 10000, 5);
    const auto b = check_set_equivalence(0.7, 10000, 5);
    EXPECT_EQ(a.to_json(), b.to_json());
}

TEST(GridSearch, LinearOptimaOnBallAndCircle)
{
    const ScalarFn re = [](const CTensor& z) { return z[0].real(); };
    const auto ball = grid_search_attack(re, CTensor::scalar(0.0), Constraint::ball, 1.0, 64);
    EXPECT_NEAR(ball.best_loss, 1.0, 1e-12);
    EXPECT_NEAR(std::abs(ball.best[0] - 1.0), 0.0, 1e-12);
    const auto circle = grid_search_attack(re, CTensor::scalar(std::polar(1.0, 2.0)), Constraint::circle, 3.0, 64);
    EXPECT_NEAR(circle.best_loss, 1.0, 1e-3);
    const auto ray = grid_search_attack(re, CTensor::scalar({0.5, 0.0}), Constraint::ray, 0.2, 16);
    EXPECT_NEAR(ray.best_loss, 0.7, 1e-12);
}

TEST(GridSearch, RestrictedCircleStaysInBand)
{
    const cscalar x = std::polar(1.0, 0.5);
    const auto r = grid_search_attack([](const CTensor& z) { return -z[0].imag(); }, CTensor::scalar(x),
                                      Constraint::circle, 0.5, 128);
    EXPECT_NEAR(std::abs(r.best[0] - x), 0.5, 1e-9);
}

TEST(GridSearch, MonotoneInResolution)
{
    Rng rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const cscalar a{u(rng), u(rng)};
        const cscalar b{u(rng), u(rng)};
        const ScalarFn f = [a, b](const CTensor& z) { return std::sin(3.0 * (a * z[0]).real()) + (b * z[1] * z[1]).imag(); };
        const CTensor x({2}, {cscalar{u(rng), u(rng)}, cscalar{u(rng), u(rng)}});
        for (const auto c : {Constraint::ball, Constraint::circle, Constraint::ray}) {
            double prev = -std::numeric_limits<double>::infinity();
            for (const std::size_t res : {8u, 16u, 32u}) {
                const double best = grid_search_attack(f, x, c, 0.6, res).best_loss;
                EXPECT_GE(best, prev);
                prev = best;
            }
        }
    }
}

TEST(GridSearch, RejectsBadArguments)
{
    const ScalarFn f = [](const CTensor& z) { return z[0].real(); };
    EXPECT_THROW((void)grid_search_attack(f, CTensor::scalar(0.0), Constraint::ball, 1.0, 7), ConfigError);
    EXPECT_THROW((void)grid_search_attack(f, CTensor({3}), Constraint::ball, 1.0, 8), ConfigError);
}

TEST(Optimality, ComplexFgsmIsExactOnLinearModels)
{
    const auto r = check_linear_optimality(AttackKind::unrestricted, 1000, 1);
    EXPECT_TRUE(r.passed()) << r.to_text();
}

TEST(Optimality, MagnitudeStepIsExactOnTheRay)
{
    const auto r = check_linear_optimality(AttackKind::magnitude, 500, 2);
    EXPECT_TRUE(r.passed()) << r.to_text();
}

TEST(Report, JsonLine)
{
    OracleReport r{"x", 3, 0.5, 0.25, 0, 1};
    EXPECT_EQ(r.to_json(), R"({"check":"x","passed":true,"checks":3,"violations":0,"max_abs_error":0.5,"max_rel_error":0.25,"skipped":1})");
    EXPECT_NE(r.to_text().find("ok"), std::string::npos);
}
