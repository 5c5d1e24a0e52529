#pragma once

// Phase Attacks keep every pixel magnitude fixed and move only its phase
// inside the eps-ball; Magnitude Attacks keep the phase fixed and move only
// the magnitude (never below zero, so the phase cannot flip).
//
// For a pixel x with 2|x| > eps, the circle |z| = |x| meets the eps-ball in
// the arc |wrap(phase(z) - phase(x))| <= 2 asin(eps / (2|x|)). Pixels with
// 2|x| <= eps may take any phase.

#include "cvak/attacks.hpp"

namespace cvak {

struct PhaseBudgetEntry {
    bool restricted = false;
    /// Maximum absolute phase deviation; pi for unrestricted pixels.
    double theta_max = pi;
};

using PhaseBudget = std::vector<PhaseBudgetEntry>;

/// Largest rotation keeping a pixel of magnitude r within `epsilon` of its start.
inline double max_phase_deviation(double r, double epsilon)
{
    if (2.0 * r <= epsilon) {
        return pi;
    }
    return 2.0 * std::asin(epsilon / (2.0 * r));
}

inline PhaseBudget phase_budget(const CTensor& x, double epsilon)
{
    if (!(epsilon > 0.0)) {
        throw ConfigError("phase_budget: epsilon must be > 0");
    }
    PhaseBudget b(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = std::abs(x[i]);
        if (2.0 * r > epsilon) {
            b[i] = {true, max_phase_deviation(r, epsilon)};
        }
    }
    return b;
}

enum class DirectionClass { outward, inward, increase, decrease };

/// Where the gradient g = dl/dx̄ points relative to the circle through x.
inline DirectionClass classify_direction(cscalar x, cscalar g, const PhaseBudgetEntry& entry)
{
    const cscalar gx = cmul_conj(x, g); // g * conj(x)
    if (!entry.restricted) {
        return gx.real() >= 0.0 ? DirectionClass::outward : DirectionClass::inward;
    }
    // Purely radial gradients (zero tangential part) rotate forward.
    return gx.imag() >= 0.0 ? DirectionClass::increase : DirectionClass::decrease;
}

/// Step length along phase(g) that lands back on the circle |z| = |x|:
/// |x + a exp(i phase(g))| = |x|  <=>  a = -2|x| cos(phase(g) - phase(x)).
/// Positive exactly when g points inward.
inline double inward_alpha(cscalar x, cscalar g)
{
    return -2.0 * std::abs(x) * std::cos(phase(g) - phase(x));
}

/// One maximal magnitude-preserving step at pixel x with gradient g.
/// `step_budget` (<= eps) sets the rotation of restricted pixels.
inline cscalar phase_step(cscalar x, cscalar g, const PhaseBudgetEntry& entry, double step_budget)
{
    const double r = std::abs(x);
    if (r == 0.0 || (g.real() == 0.0 && g.imag() == 0.0)) {
        return x;
    }
    switch (classify_direction(x, g, entry)) {
    case DirectionClass::outward:
        return r * complex_sign(x + g);
    case DirectionClass::inward: {
        const cscalar landed = x + inward_alpha(x, g) * complex_sign(g);
        return r * complex_sign(landed);
    }
    case DirectionClass::increase:
    case DirectionClass::decrease: {
        const double theta = 2.0 * std::asin(std::min(1.0, step_budget / (2.0 * r)));
        const double s = classify_direction(x, g, entry) == DirectionClass::increase ? 1.0 : -1.0;
        return std::polar(r, phase(x) + s * theta);
    }
    }
    return x;
}

inline double real_sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Single phase-preserving step: max(0, |x| + eps*sgn(Re(g conj x))) exp(i phase(x)).
inline cscalar magnitude_step(cscalar x, cscalar g, double epsilon)
{
    const double s = real_sign(cmul_conj(x, g).real());
    return std::max(0.0, std::abs(x) + epsilon * s) * complex_sign(x);
}

/// Phase attack (PFGSM / PFFGSM / PIFGSM / PMIFGSM by cfg.family). Each
/// iteration applies phase_step with step budget alpha to the momentum
/// direction, then clamps the cumulative phase deviation of restricted
/// pixels to their band around the original phase.
template <GradientOracle Oracle>
CTensor run_phase_attack(Oracle&& oracle, const CTensor& x, const AttackConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    const PhaseBudget budget = phase_budget(x, cfg.epsilon);
    CTensor z = x;
    if (cfg.random_start) {
        Rng rng = make_rng(seed, "phase-start");
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double draw = u(rng);
            const double r = std::abs(x[i]);
            if (r == 0.0) {
                continue;
            }
            z[i] = budget[i].restricted ? std::polar(r, phase(x[i]) + draw * budget[i].theta_max)
                                        : std::polar(r, draw * pi);
        }
    }
    CTensor momentum = CTensor::zeros(x.shape());
    for (int t = 0; t < cfg.steps; ++t) {
        const CTensor g = oracle(z);
        detail::require_oracle_shape(g, x);
        const CTensor dir = detail::momentum_direction(cfg, g, momentum);
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double r = std::abs(x[i]);
            if (r == 0.0) {
                continue;
            }
            const cscalar stepped = phase_step(z[i], dir[i], budget[i], cfg.alpha);
            if (budget[i].restricted) {
                const double dev = std::clamp(wrap_angle(phase(stepped) - phase(x[i])), -budget[i].theta_max,
                                              budget[i].theta_max);
                z[i] = std::polar(r, phase(x[i]) + dev);
            } else {
                z[i] = r * complex_sign(stepped);
            }
        }
    }
    return z;
}

inline CTensor run_phase_attack(const Model& model, const CTensor& x, std::span<const int> labels,
                                const AttackConfig& cfg, std::uint64_t seed)
{
    return run_phase_attack(model_oracle(model, labels), x, cfg, seed);
}

/// Magnitude attack. Magnitudes move by alpha per step along
/// sgn(Re(d conj(u))) with u the unit phase of x (u = 1 at x = 0) and stay in
/// [max(0, |x| - eps), |x| + eps].
template <GradientOracle Oracle>
CTensor run_magnitude_attack(Oracle&& oracle, const CTensor& x, const AttackConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    const std::size_t n = x.size();
    std::vector<cscalar> unit(n);
    std::vector<double> radius(n);
    std::vector<double> lo(n);
    std::vector<double> hi(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double r = std::abs(x[i]);
        unit[i] = r == 0.0 ? cscalar{1.0, 0.0} : complex_sign(x[i]);
        radius[i] = r;
        lo[i] = std::max(0.0, r - cfg.epsilon);
        hi[i] = r + cfg.epsilon;
    }
    CTensor z = x;
    if (cfg.random_start) {
        Rng rng = make_rng(seed, "magnitude-start");
        std::uniform_real_distribution<double> u(-cfg.epsilon, cfg.epsilon);
        for (std::size_t i = 0; i < n; ++i) {
            radius[i] = std::clamp(radius[i] + u(rng), lo[i], hi[i]);
            z[i] = radius[i] * unit[i];
        }
    }
    CTensor momentum = CTensor::zeros(x.shape());
    for (int t = 0; t < cfg.steps; ++t) {
        const CTensor g = oracle(z);
        detail::require_oracle_shape(g, x);
        const CTensor dir = detail::momentum_direction(cfg, g, momentum);
        for (std::size_t i = 0; i < n; ++i) {
            const double s = real_sign(cmul_conj(unit[i], dir[i]).real());
            radius[i] = std::clamp(radius[i] + cfg.alpha * s, lo[i], hi[i]);
            z[i] = radius[i] == std::abs(x[i]) ? x[i] : radius[i] * unit[i];
        }
    }
    return z;
}

inline CTensor run_magnitude_attack(const Model& model, const CTensor& x, std::span<const int> labels,
                                    const AttackConfig& cfg, std::uint64_t seed)
{
    return run_magnitude_attack(model_oracle(model, labels), x, cfg, seed);
}

/// Dispatches on the feasible set.
template <GradientOracle Oracle>
CTensor run_attack(AttackKind kind, Oracle&& oracle, const CTensor& x, const AttackConfig& cfg, std::uint64_t seed)
{
    switch (kind) {
    case AttackKind::unrestricted: return run_gradient_attack(oracle, x, cfg, seed);
    case AttackKind::phase: return run_phase_attack(oracle, x, cfg, seed);
    case AttackKind::magnitude: return run_magnitude_attack(oracle, x, cfg, seed);
    }
    throw ConfigError("unknown attack kind");
}

} // namespace cvak
