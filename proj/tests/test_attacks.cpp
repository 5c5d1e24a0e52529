#include "cvak/harness.hpp"
#include "cvak/verify.hpp"

#include <gtest/gtest.h>

using namespace cvak;

namespace {

CTensor one(cscalar v) { return CTensor::scalar(v); }

/// Gradient oracle of l(z) = sum Re(w conj z): dl/dz̄ = w / 2.
auto linear_oracle(cscalar w)
{
    return [w](const CTensor& z) {
        CTensor g(z.shape());
        for (auto& v : g.data()) {
            v = 0.5 * w;
        }
        return g;
    };
}

struct Trained {
    Model model;
    LabeledBatch test;
};

const Trained& trained_model()
{
    static const Trained t = [] {
        DatasetConfig dc;
        dc.samples_per_class = 250;
        dc.noise = 0.3;
        dc.seed = 5;
        auto ds = generate_synthetic(dc);
        ModelConfig mc;
        mc.seed = 5;
        TrainConfig tc;
        tc.epochs = 3;
        tc.seed = 5;
        return Trained{train(build_model(mc), ds.train, tc).model, ds.test};
    }();
    return t;
}

} // namespace

TEST(Projection, Examples)
{
    const CTensor x({1}, {cscalar{0.3, -0.2}});
    EXPECT_TRUE(bitwise_equal(project_linf_ball(x, x, 0.1), x));
    EXPECT_EQ(project_linf_ball(one(2.0), one(0.0), 1.0)[0], cscalar(1.0, 0.0));
    const cscalar p = project_linf_ball(one({1, 2}), one(1.0), 0.5)[0];
    EXPECT_NEAR(p.real(), 1.0, 1e-15);
    EXPECT_NEAR(p.imag(), 0.5, 1e-15);
    EXPECT_THROW((void)project_linf_ball(x, x, 0.0), ConfigError);
    EXPECT_THROW((void)project_linf_ball(x, CTensor({2}), 1.0), ShapeError);
}

TEST(Projection, ClosedBallKeepsBoundaryPoints)
{
    const cscalar z = 1.0 + std::polar(0.5, 0.3);
    const CTensor out = project_linf_ball(one(z), one(1.0), std::abs(z - 1.0));
    EXPECT_EQ(out[0], z);
}

TEST(UniformBall, SupportAndDeterminism)
{
    const CTensor a = sample_uniform_ball({1000}, 0.25, 9);
    const CTensor b = sample_uniform_ball({1000}, 0.25, 9);
    EXPECT_TRUE(bitwise_equal(a, b));
    EXPECT_LE(linf_norm(a), 0.25);
    EXPECT_THROW((void)sample_uniform_ball({3}, -1.0, 0), ConfigError);
}

TEST(UniformBall, MeanVanishesAndRadiusIsUniformInArea)
{
    const double eps = 2.0;
    const CTensor s = sample_uniform_ball({1000000}, eps, 123);
    cscalar mean{};
    std::size_t inner = 0;
    for (const auto v : s.data()) {
        mean += v;
        inner += std::abs(v) <= eps / std::sqrt(2.0) ? 1 : 0;
    }
    mean /= static_cast<double>(s.size());
    EXPECT_LT(std::abs(mean), 3.0 * eps / 1000.0);
    // Half of the disk area lies inside radius eps/sqrt(2).
    EXPECT_NEAR(static_cast<double>(inner) / static_cast<double>(s.size()), 0.5, 0.002);
}

TEST(AttackConfig, FamilyInvariants)
{
    for (const auto f : {Family::fgsm, Family::ffgsm, Family::ifgsm, Family::mifgsm}) {
        EXPECT_NO_THROW(AttackConfig::make(f, 0.1).validate());
    }
    AttackConfig c = AttackConfig::make(Family::fgsm, 0.1);
    c.random_start = true;
    EXPECT_THROW(c.validate(), ConfigError);
    c = AttackConfig::make(Family::ffgsm, 0.1);
    c.steps = 2;
    EXPECT_THROW(c.validate(), ConfigError);
    c = AttackConfig::make(Family::ifgsm, 0.1);
    c.beta = 0.5;
    EXPECT_THROW(c.validate(), ConfigError);
    c = AttackConfig::make(Family::mifgsm, 0.1);
    c.alpha = 0.2;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_THROW(AttackConfig::make(Family::fgsm, 0.0).validate(), ConfigError);
    EXPECT_DOUBLE_EQ(AttackConfig::make(Family::ifgsm, 0.1).alpha, 0.025);
}

TEST(GradientAttack, LinearProbeStepsAlongRealAxis)
{
    const CTensor x({2}, {cscalar{0.2, 0.1}, cscalar{-1.0, 0.0}});
    const CTensor z = run_gradient_attack(linear_oracle(1.0), x, AttackConfig::make(Family::fgsm, 0.3), 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_EQ(z[i], x[i] + 0.3);
    }
}

TEST(GradientAttack, ZeroGradientLeavesInputUnchanged)
{
    const CTensor x({3}, {cscalar{1, 2}, cscalar{0, 0}, cscalar{-3, 0.5}});
    const CTensor z = run_gradient_attack(linear_oracle(0.0), x, AttackConfig::make(Family::fgsm, 0.5), 0);
    EXPECT_TRUE(bitwise_equal(z, x));
}

TEST(GradientAttack, RejectsBadConfigAndShapes)
{
    const CTensor x({2});
    AttackConfig c = AttackConfig::make(Family::ifgsm, 0.1);
    c.steps = 0;
    EXPECT_THROW((void)run_gradient_attack(linear_oracle(1.0), x, c, 0), ConfigError);
    const auto wrong = [](const CTensor&) { return CTensor({3}); };
    EXPECT_THROW((void)run_gradient_attack(wrong, x, AttackConfig::make(Family::fgsm, 0.1), 0), ShapeError);
}

TEST(GradientAttack, TinyStepStaysNearStart)
{
    const CTensor x({4}, {cscalar{1, 0}, cscalar{0, 1}, cscalar{-1, 0}, cscalar{0, -1}});
    AttackConfig c = AttackConfig::make(Family::ifgsm, 0.5, 3);
    c.alpha = 1e-12;
    const CTensor z0 = sample_uniform_ball(x.shape(), 0.5, 8);
    const CTensor z = run_gradient_attack(linear_oracle({0.3, 0.4}), x, c, 8);
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_NEAR(std::abs(z[i] - (x[i] + z0[i])), 0.0, 1e-11);
    }
}

TEST(GradientAttack, EpsilonBoundOnRandomInputs)
{
    Rng rng(4);
    for (const auto f : {Family::fgsm, Family::ffgsm, Family::ifgsm, Family::mifgsm}) {
        for (const double eps : {1e-4, 0.05, 1.0}) {
            const CTensor x = verify::detail::random_tensor({64}, rng);
            const cscalar w{std::normal_distribution<double>()(rng), 1.0};
            auto oracle = [w](const CTensor& z) {
                CTensor g(z.shape());
                for (std::size_t i = 0; i < z.size(); ++i) {
                    g[i] = w * std::conj(z[i]) + std::exp(z[i]); // non-linear
                }
                return g;
            };
            const CTensor z = run_gradient_attack(oracle, x, AttackConfig::make(f, eps), 17);
            EXPECT_LE(linf_distance(z, x), eps + 1e-9);
        }
    }
}

TEST(GradientAttack, SpecializationsCollapseBitwise)
{
    const auto& t = trained_model();
    const LabeledBatch b = slice(t.test, 0, 16);
    const auto oracle = model_oracle(t.model, b.labels);
    const double eps = 0.05;
    const std::uint64_t seed = 99;

    AttackConfig mi = AttackConfig::make(Family::mifgsm, eps);
    mi.beta = 0.0;
    EXPECT_TRUE(bitwise_equal(run_gradient_attack(oracle, b.images, mi, seed),
                              run_gradient_attack(oracle, b.images, AttackConfig::make(Family::ifgsm, eps), seed)));

    AttackConfig one_step = AttackConfig::make(Family::ifgsm, eps, 1);
    one_step.alpha = eps;
    EXPECT_TRUE(bitwise_equal(run_gradient_attack(oracle, b.images, one_step, seed),
                              run_gradient_attack(oracle, b.images, AttackConfig::make(Family::ffgsm, eps), seed)));

    EXPECT_TRUE(bitwise_equal(
        run_gradient_attack(oracle, b.images, AttackConfig::make(Family::ffgsm, eps), seed, CTensor::zeros(b.images.shape())),
        run_gradient_attack(oracle, b.images, AttackConfig::make(Family::fgsm, eps), seed)));
}

TEST(GradientAttack, IterativeAttackRaisesLossOnTrainedModel)
{
    const auto& t = trained_model();
    ASSERT_GE(t.test.size(), 200u);
    const LabeledBatch b = slice(t.test, 0, 200);
    const double eps = 0.1;
    const CTensor z = run_gradient_attack(t.model, b.images, b.labels, AttackConfig::make(Family::ifgsm, eps), 1);
    EXPECT_LE(linf_distance(z, b.images), eps + 1e-9);
    std::size_t raised = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        const Labels y{b.labels[i]};
        raised += loss_value(t.model, z.slice(i, i + 1), y) >= loss_value(t.model, b.images.slice(i, i + 1), y) ? 1 : 0;
    }
    EXPECT_GE(static_cast<double>(raised), 0.95 * static_cast<double>(b.size()));
}

TEST(GradientAttack, EveryFamilyRaisesMeanLoss)
{
    const auto& t = trained_model();
    const double clean = loss_value(t.model, t.test.images, t.test.labels);
    for (const auto f : {Family::fgsm, Family::ffgsm, Family::ifgsm, Family::mifgsm}) {
        for (const double eps : {5e-3, 5e-2}) {
            const CTensor z = run_gradient_attack(t.model, t.test.images, t.test.labels, AttackConfig::make(f, eps), 3);
            EXPECT_GE(loss_value(t.model, z, t.test.labels), clean) << to_string(f) << " eps=" << eps;
        }
    }
}

TEST(GradientAttack, ClassicalMomentumFlagChangesDirectionOnly)
{
    const auto& t = trained_model();
    const LabeledBatch b = slice(t.test, 0, 8);
    AttackConfig c = AttackConfig::make(Family::mifgsm, 0.05);
    c.classical_momentum = true;
    const CTensor z = run_gradient_attack(t.model, b.images, b.labels, c, 2);
    EXPECT_LE(linf_distance(z, b.images), 0.05 + 1e-9);
    EXPECT_GE(loss_value(t.model, z, b.labels), loss_value(t.model, b.images, b.labels));
}

TEST(GradientAttack, SingleStepIsOptimalForLinearLoss)
{
    const auto report = verify::check_linear_optimality(AttackKind::unrestricted, 300, 8);
    EXPECT_EQ(report.violations, 0u) << report.to_text();
    EXPECT_LT(report.max_abs_error, 1e-9);
}
