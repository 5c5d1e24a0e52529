#pragma once

// Complex sign-gradient attacks on the complex L-infinity ball.
//
// All four families run through one loop:
//   Z_0     = X + U              (U = 0 unless random start)
//   M_t     = M_{t-1} + beta * sign(g_t)
//   Z_{t+1} = P_X(Z_t + alpha * sign(g_t + M_t))
// with g_t = dl/dz̄ at Z_t and P_X the radial projection onto the closed
// eps-ball around the original input.

#include "cvak/models.hpp"
#include "cvak/rng.hpp"

#include <concepts>
#include <optional>
#include <string>
#include <string_view>

namespace cvak {

enum class Family : std::uint32_t { fgsm, ffgsm, ifgsm, mifgsm };

/// Which feasible set an attack searches: the full eps-ball, the
/// magnitude-preserving circle arc (Phase Attack), or the phase-preserving
/// ray segment (Magnitude Attack).
enum class AttackKind : std::uint32_t { unrestricted, phase, magnitude };

inline std::string_view to_string(Family f)
{
    switch (f) {
    case Family::fgsm: return "fgsm";
    case Family::ffgsm: return "ffgsm";
    case Family::ifgsm: return "ifgsm";
    case Family::mifgsm: return "mifgsm";
    }
    return "?";
}

inline bool is_iterative(Family f) { return f == Family::ifgsm || f == Family::mifgsm; }

struct AttackConfig {
    Family family = Family::fgsm;
    double epsilon = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    int steps = 1;
    bool random_start = false;
    /// Normalized-gradient momentum (M = beta*M + g/|g|_1, step along sign(M))
    /// instead of the accumulated-sign form. Off by default.
    bool classical_momentum = false;

    /// Canonical configuration for a family: single-step families use
    /// alpha = eps and one step; iterative families alpha = eps/4.
    static AttackConfig make(Family family, double epsilon, int steps = 10, double beta = 1.0)
    {
        AttackConfig c;
        c.family = family;
        c.epsilon = epsilon;
        switch (family) {
        case Family::fgsm:
            c.alpha = epsilon;
            break;
        case Family::ffgsm:
            c.alpha = epsilon;
            c.random_start = true;
            break;
        case Family::ifgsm:
            c.alpha = epsilon / 4.0;
            c.steps = steps;
            c.random_start = true;
            break;
        case Family::mifgsm:
            c.alpha = epsilon / 4.0;
            c.steps = steps;
            c.random_start = true;
            c.beta = beta;
            break;
        }
        return c;
    }

    void validate() const
    {
        if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
            throw ConfigError("attack: epsilon must be > 0");
        }
        if (!(alpha > 0.0) || alpha > epsilon) {
            throw ConfigError("attack: alpha must lie in (0, epsilon]");
        }
        if (!(beta >= 0.0 && beta <= 1.0)) {
            throw ConfigError("attack: beta must lie in [0, 1]");
        }
        if (steps < 1) {
            throw ConfigError("attack: steps must be >= 1");
        }
        const std::string name(to_string(family));
        switch (family) {
        case Family::fgsm:
            if (steps != 1 || random_start || beta != 0.0 || alpha != epsilon) {
                throw ConfigError(name + ": requires steps=1, no random start, beta=0, alpha=epsilon");
            }
            break;
        case Family::ffgsm:
            if (steps != 1 || !random_start || beta != 0.0 || alpha != epsilon) {
                throw ConfigError(name + ": requires steps=1, random start, beta=0, alpha=epsilon");
            }
            break;
        case Family::ifgsm:
            if (beta != 0.0) {
                throw ConfigError(name + ": requires beta=0");
            }
            break;
        case Family::mifgsm:
            break;
        }
    }
};

/// Anything that maps an input tensor to dl/dz̄ of the attacked loss.
template <typename F>
concept GradientOracle = requires(F f, const CTensor& z) {
    { f(z) } -> std::convertible_to<CTensor>;
};

/// Wirtinger gradient of each sample's own cross-entropy loss.
inline auto model_oracle(const Model& model, std::span<const int> labels)
{
    return [&model, labels](const CTensor& z) {
        return loss_and_gradient(model, z, labels, ad::Reduction::sum).grad.dzbar();
    };
}

inline double linf_norm(const CTensor& z)
{
    double m = 0.0;
    for (const auto v : z.data()) {
        m = std::max(m, std::abs(v));
    }
    return m;
}

inline double linf_distance(const CTensor& a, const CTensor& b)
{
    require_same_shape("linf_distance", a, b);
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

/// Per-element radial projection onto {z : |z - x| <= eps}.
inline CTensor project_linf_ball(const CTensor& z, const CTensor& center, double epsilon)
{
    if (!(epsilon > 0.0)) {
        throw ConfigError("project_linf_ball: epsilon must be > 0");
    }
    require_same_shape("project_linf_ball", z, center);
    CTensor out = z;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const cscalar d = z[i] - center[i];
        const double r = std::abs(d);
        if (r > epsilon) {
            out[i] = center[i] + (epsilon / r) * d;
        }
    }
    return out;
}

/// I.i.d. uniform samples on the disk of radius eps (sqrt-radius method).
inline CTensor sample_uniform_ball(const Shape& shape, double epsilon, std::uint64_t seed)
{
    if (!(epsilon > 0.0)) {
        throw ConfigError("sample_uniform_ball: epsilon must be > 0");
    }
    Rng rng = make_rng(seed, "uniform-ball");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    CTensor out(shape);
    for (auto& v : out.data()) {
        const double r = epsilon * std::sqrt(u(rng));
        const double a = 2.0 * pi * u(rng) - pi;
        v = std::polar(r, a);
    }
    return out;
}

namespace detail {

/// Direction update shared by all families. Returns the tensor whose
/// element-wise complex sign is the step direction; `momentum` is updated.
inline CTensor momentum_direction(const AttackConfig& cfg, const CTensor& grad, CTensor& momentum)
{
    CTensor dir(grad.shape());
    if (cfg.classical_momentum) {
        double l1 = 0.0;
        for (const auto g : grad.data()) {
            l1 += std::abs(g);
        }
        for (std::size_t i = 0; i < grad.size(); ++i) {
            momentum[i] = cfg.beta * momentum[i] + (l1 > 0.0 ? grad[i] / l1 : cscalar{});
            dir[i] = momentum[i];
        }
        return dir;
    }
    for (std::size_t i = 0; i < grad.size(); ++i) {
        momentum[i] += cfg.beta * complex_sign(grad[i]);
        dir[i] = grad[i] + momentum[i];
    }
    return dir;
}

inline void require_oracle_shape(const CTensor& g, const CTensor& x)
{
    if (g.shape() != x.shape()) {
        throw ShapeError("attack: gradient shape " + shape_string(g.shape()) + " does not match input "
                         + shape_string(x.shape()));
    }
}

} // namespace detail

/// Runs the configured complex gradient attack. `start` overrides the random
/// start perturbation U (it must lie in the eps-ball); otherwise U is drawn
/// from `seed` when cfg.random_start is set.
template <GradientOracle Oracle>
CTensor run_gradient_attack(Oracle&& oracle, const CTensor& x, const AttackConfig& cfg, std::uint64_t seed,
                            const std::optional<CTensor>& start = std::nullopt)
{
    cfg.validate();
    CTensor z = x;
    if (start) {
        require_same_shape("run_gradient_attack start", *start, x);
        for (std::size_t i = 0; i < z.size(); ++i) {
            z[i] += (*start)[i];
        }
    } else if (cfg.random_start) {
        const CTensor u = sample_uniform_ball(x.shape(), cfg.epsilon, seed);
        for (std::size_t i = 0; i < z.size(); ++i) {
            z[i] += u[i];
        }
    }
    CTensor momentum = CTensor::zeros(x.shape());
    for (int t = 0; t < cfg.steps; ++t) {
        const CTensor g = oracle(z);
        detail::require_oracle_shape(g, x);
        const CTensor dir = detail::momentum_direction(cfg, g, momentum);
        for (std::size_t i = 0; i < z.size(); ++i) {
            z[i] += cfg.alpha * complex_sign(dir[i]);
        }
        z = project_linf_ball(z, x, cfg.epsilon);
    }
    return z;
}

inline CTensor run_gradient_attack(const Model& model, const CTensor& x, std::span<const int> labels,
                                   const AttackConfig& cfg, std::uint64_t seed,
                                   const std::optional<CTensor>& start = std::nullopt)
{
    return run_gradient_attack(model_oracle(model, labels), x, cfg, seed, start);
}

} // namespace cvak
