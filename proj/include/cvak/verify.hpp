#pragma once

// Independent referees for the library: central finite differences,
// Monte-Carlo membership checks, and brute-force grid searches.

#include "cvak/parallel.hpp"
#include "cvak/phase_attacks.hpp"

#include <cstdio>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

namespace cvak::verify {

struct OracleReport {
    std::string name;
    std::size_t checks = 0;
    double max_abs_error = 0.0;
    double max_rel_error = 0.0;
    std::size_t violations = 0;
    /// Samples rejected before checking (e.g. too close to a kink).
    std::size_t skipped = 0;

    [[nodiscard]] bool passed() const noexcept { return violations == 0 && checks > 0; }

    void merge(const OracleReport& o)
    {
        checks += o.checks;
        max_abs_error = std::max(max_abs_error, o.max_abs_error);
        max_rel_error = std::max(max_rel_error, o.max_rel_error);
        violations += o.violations;
        skipped += o.skipped;
    }

    [[nodiscard]] std::string to_text() const
    {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%-28s %s checks=%zu violations=%zu max_abs=%.3e max_rel=%.3e skipped=%zu",
                      name.c_str(), passed() ? "ok  " : "FAIL", checks, violations, max_abs_error, max_rel_error,
                      skipped);
        return buf;
    }

    [[nodiscard]] std::string to_json() const
    {
        char buf[320];
        std::snprintf(buf, sizeof buf,
                      R"({"check":"%s","passed":%s,"checks":%zu,"violations":%zu,"max_abs_error":%.17g,"max_rel_error":%.17g,"skipped":%zu})",
                      name.c_str(), passed() ? "true" : "false", checks, violations, max_abs_error, max_rel_error,
                      skipped);
        return buf;
    }
};

using ScalarFn = std::function<double(const CTensor&)>;

/// Central differences on the real and imaginary part of every element,
/// assembled as (d/dRe + i d/dIm) / 2.
inline WirtingerGradient finite_diff_wirtinger(const ScalarFn& f, const CTensor& x, double h)
{
    if (!(h > 0.0)) {
        throw ConfigError("finite_diff_wirtinger: h must be > 0");
    }
    CTensor g(x.shape());
    CTensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const cscalar v = x[i];
        probe[i] = v + cscalar{h, 0.0};
        const double rp = f(probe);
        probe[i] = v - cscalar{h, 0.0};
        const double rm = f(probe);
        probe[i] = v + cscalar{0.0, h};
        const double ip = f(probe);
        probe[i] = v - cscalar{0.0, h};
        const double im = f(probe);
        probe[i] = v;
        g[i] = 0.5 * cscalar{(rp - rm) / (2.0 * h), (ip - im) / (2.0 * h)};
    }
    return WirtingerGradient(std::move(g));
}

/// Distance of the recorded forward pass to the nearest non-smooth point:
/// split-ReLU at a zero component, |z| and phase at 0, the phase branch cut.
inline double kink_distance(const Tape& tape)
{
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < tape.size(); ++n) {
        const auto& node = tape.node(n);
        if (node.inputs.empty()) {
            continue;
        }
        const auto& in_node = tape.node(node.inputs[0]);
        const CTensor& x = in_node.value;
        if (node.op == "split_relu") {
            for (const auto v : x.data()) {
                d = std::min(d, std::abs(v.real()));
                if (!in_node.real) {
                    d = std::min(d, std::abs(v.imag()));
                }
            }
        } else if (node.op == "magnitude") {
            for (const auto v : x.data()) {
                d = std::min(d, std::abs(v));
            }
        } else if (node.op == "phase" || node.op == "encode_magphase") {
            for (const auto v : x.data()) {
                d = std::min(d, std::abs(v));
                if (v.real() < 0.0) {
                    d = std::min(d, std::abs(v.imag()));
                }
            }
        }
    }
    return d;
}

inline void record_error(OracleReport& r, cscalar got, cscalar want, double tolerance)
{
    const double abs_err = std::abs(got - want);
    const double rel_err = abs_err / (1.0 + std::abs(want));
    r.max_abs_error = std::max(r.max_abs_error, abs_err);
    r.max_rel_error = std::max(r.max_rel_error, rel_err);
    r.violations += rel_err < tolerance ? 0 : 1;
}

inline constexpr double gradient_tolerance = 1e-4;
inline constexpr double fd_step = 1e-5;
inline constexpr double kink_margin = 1e-3;

namespace detail {

inline CTensor random_tensor(const Shape& s, Rng& rng, double scale = 1.0)
{
    std::normal_distribution<double> n(0.0, scale);
    CTensor t(s);
    for (auto& v : t.data()) {
        const double re = n(rng);
        const double im = n(rng);
        v = {re, im};
    }
    return t;
}

/// A random composite over every differentiable primitive. Returns the
/// loss node; `x` is the leaf being checked.
inline Var composite(Tape& t, Var x, std::size_t n, int variant, Rng& rng)
{
    const Var c = t.constant(random_tensor({n}, rng, 0.7));
    const Var lin = ad::add(t, ad::mul(t, x, c), ad::conj(t, x));
    Var h;
    switch (variant % 4) {
    case 0: { // exp / split-ReLU / magnitude
        const Var e = ad::exp(t, ad::scale(t, lin, 0.3));
        h = ad::add(t, ad::magnitude(t, ad::split_relu(t, e)), ad::real_part(t, ad::mul(t, e, e)));
        break;
    }
    case 1: { // matmul against a [n/2, 2] reshape
        const Var a = ad::reshape(t, lin, {n / 2, 2});
        const Var w = t.constant(random_tensor({2, 3}, rng));
        h = ad::magnitude(t, ad::split_relu(t, ad::matmul(t, a, w)));
        break;
    }
    case 2: { // conv2d on a [1,1,2,n/2] image
        const Var img = ad::reshape(t, lin, {1, 1, 2, n / 2});
        const Var w = t.constant(random_tensor({2, 1, 3, 3}, rng));
        h = ad::real_part(t, ad::split_relu(t, ad::conv2d(t, img, w)));
        break;
    }
    default: { // phase / magnitude
        h = ad::add(t, ad::phase(t, lin), ad::scale(t, ad::magnitude(t, ad::mul(t, lin, lin)), 0.5));
        break;
    }
    }
    return ad::real_part(t, ad::sum(t, h));
}

} // namespace detail

/// Autodiff vs finite differences on random 4..16 element composites.
inline OracleReport check_primitive_gradients(std::size_t trials, std::uint64_t seed)
{
    OracleReport report{"gradients/primitives"};
    for (std::size_t trial = 0; trial < trials; ++trial) {
        Rng rng = make_rng(seed, "primitive-gradients", trial);
        const std::size_t n = 2 * std::uniform_int_distribution<std::size_t>(2, 8)(rng);
        const int variant = static_cast<int>(trial % 4);
        for (int attempt = 0;; ++attempt) {
            const CTensor x = detail::random_tensor({n}, rng);
            const std::uint64_t build_seed = rng();
            Tape tape;
            const Var xv = tape.leaf(x);
            Rng build(build_seed);
            const Var loss = detail::composite(tape, xv, n, variant, build);
            if (kink_distance(tape) < kink_margin && attempt < 50) {
                ++report.skipped;
                continue;
            }
            const auto analytic = backward(tape, loss).wrt(xv);
            const auto fd = finite_diff_wirtinger(
                [&](const CTensor& z) {
                    Tape t;
                    Rng b(build_seed);
                    const Var l = detail::composite(t, t.leaf(z, false), n, variant, b);
                    return t.value(l)[0].real();
                },
                x, fd_step);
            for (std::size_t i = 0; i < n; ++i) {
                record_error(report, analytic.dzbar()[i], fd.dzbar()[i], gradient_tolerance);
            }
            ++report.checks;
            break;
        }
    }
    return report;
}

/// A small random classifier for gradient checks.
inline ModelConfig random_model_config(Rng& rng, std::size_t index)
{
    ModelConfig c;
    c.kind = index % 2 == 0 ? ModelKind::cvnn : ModelKind::rvnn;
    c.encoding = (index / 2) % 2 == 0 ? InputEncoding::reim : InputEncoding::magphase;
    c.channels = std::uniform_int_distribution<std::size_t>(1, 2)(rng);
    c.height = 2 * std::uniform_int_distribution<std::size_t>(1, 2)(rng);
    c.width = c.height;
    c.conv_channels = {std::uniform_int_distribution<std::size_t>(1, 3)(rng)};
    c.hidden = {std::uniform_int_distribution<std::size_t>(2, 4)(rng)};
    c.classes = std::uniform_int_distribution<std::size_t>(2, 4)(rng);
    c.seed = rng();
    return c;
}

/// Input gradients of random models against finite differences of the loss.
inline OracleReport check_model_gradients(std::size_t trials, std::uint64_t seed)
{
    OracleReport report{"gradients/models"};
    std::mutex m;
    parallel_for(trials, [&](std::size_t trial) {
        OracleReport local;
        Rng rng = make_rng(seed, "model-gradients", trial);
        const ModelConfig cfg = random_model_config(rng, trial);
        const Model model = build_model(cfg);
        const std::size_t batch = 2;
        for (int attempt = 0;; ++attempt) {
            const CTensor x = detail::random_tensor({batch, cfg.channels, cfg.height, cfg.width}, rng);
            Labels y(batch);
            for (auto& v : y) {
                v = std::uniform_int_distribution<int>(0, static_cast<int>(cfg.classes) - 1)(rng);
            }
            Tape tape;
            const auto params = model.bind(tape, false);
            const Var in = tape.leaf(x);
            const Var loss = ad::softmax_cross_entropy(tape, model.forward(tape, in, params), y);
            if (kink_distance(tape) < kink_margin && attempt < 200) {
                ++local.skipped;
                continue;
            }
            const auto analytic = backward(tape, loss).wrt(in);
            const auto fd = finite_diff_wirtinger([&](const CTensor& z) { return loss_value(model, z, y); }, x, fd_step);
            for (std::size_t i = 0; i < x.size(); ++i) {
                record_error(local, analytic.dzbar()[i], fd.dzbar()[i], gradient_tolerance);
            }
            local.checks = 1;
            break;
        }
        std::lock_guard lock(m);
        report.merge(local);
    });
    return report;
}

// ---------------------------------------------------------------------------
// Circle / ball set equivalence

inline constexpr double boundary_slack = 1e-12;

/// For |z| = |x|: {|z - x| <= eps} equals {2|x| <= eps or
/// |wrap(phase(x) - phase(z))| <= 2 asin(eps / (2|x|))}. Samples span both
/// cases, the 2|x| = eps boundary, and deviations at the angular boundary.
/// Disagreements within `boundary_slack` of the chord boundary are not counted.
/// max_abs_error records |chord(theta_max) - eps| over boundary samples.
inline OracleReport check_set_equivalence(double epsilon, std::size_t trials, std::uint64_t seed)
{
    if (trials < 1) {
        throw ConfigError("check_set_equivalence: trials must be >= 1");
    }
    if (!(epsilon > 0.0)) {
        throw ConfigError("check_set_equivalence: epsilon must be > 0");
    }
    char label[64];
    std::snprintf(label, sizeof label, "sets/eps=%g", epsilon);
    OracleReport report{label};
    constexpr std::size_t block = 4096;
    const std::size_t blocks = (trials + block - 1) / block;
    std::vector<OracleReport> parts(blocks);
    parallel_for(blocks, [&](std::size_t b) {
        OracleReport& r = parts[b];
        Rng rng = make_rng(seed, "set-equivalence", b);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::uniform_real_distribution<double> angle(-pi, pi);
        const std::size_t end = std::min(trials, (b + 1) * block);
        for (std::size_t t = b * block; t < end; ++t) {
            const double mode = unit(rng);
            double radius;
            if (mode < 0.4) {
                radius = 0.5 * epsilon * unit(rng); // 2|x| <= eps
            } else if (mode < 0.5) {
                radius = 0.5 * epsilon; // boundary of the first case
            } else {
                radius = 0.5 * epsilon + 2.5 * epsilon * unit(rng);
            }
            const double px = angle(rng);
            double dev = angle(rng);
            const bool restricted = 2.0 * radius > epsilon;
            const double theta = restricted ? 2.0 * std::asin(epsilon / (2.0 * radius)) : pi;
            if (restricted && mode >= 0.8) {
                // At the angular boundary, or within a hair of it.
                const double side = unit(rng) < 0.5 ? -1.0 : 1.0;
                const double jitter = mode >= 0.9 ? (unit(rng) - 0.5) * 1e-9 : 0.0;
                dev = side * (theta + jitter);
                if (jitter == 0.0) {
                    const double chord = 2.0 * radius * std::abs(std::sin(theta / 2.0));
                    r.max_abs_error = std::max(r.max_abs_error, std::abs(chord - epsilon));
                    r.violations += std::abs(chord - epsilon) <= boundary_slack ? 0 : 1;
                }
            }
            const cscalar x = std::polar(radius, px);
            const cscalar z = std::polar(radius, px + dev);
            const double dist = std::abs(z - x);
            const bool in_ball = dist <= epsilon;
            const bool in_angular = !restricted || std::abs(wrap_angle(phase(x) - phase(z))) <= theta;
            if (in_ball != in_angular && std::abs(dist - epsilon) > boundary_slack) {
                ++r.violations;
            }
            ++r.checks;
        }
    });
    for (const auto& p : parts) {
        report.merge(p);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Grid search

enum class Constraint { ball, circle, ray };

struct GridResult {
    CTensor best;
    double best_loss = -std::numeric_limits<double>::infinity();
    std::size_t evaluations = 0;
};

/// Candidate values for one pixel. Grids are nested when `resolution`
/// doubles, so the best loss is non-decreasing in resolution.
inline std::vector<cscalar> pixel_grid(cscalar x, Constraint constraint, double epsilon, std::size_t resolution)
{
    std::vector<cscalar> out;
    const double r = std::abs(x);
    const double n = static_cast<double>(resolution);
    switch (constraint) {
    case Constraint::ball:
        out.push_back(x);
        for (std::size_t k = 1; k <= resolution; ++k) {
            for (std::size_t j = 0; j < resolution; ++j) {
                out.push_back(x + std::polar(epsilon * static_cast<double>(k) / n, 2.0 * pi * static_cast<double>(j) / n));
            }
        }
        break;
    case Constraint::circle: {
        if (r == 0.0) {
            out.push_back(x);
            break;
        }
        const double px = phase(x);
        if (2.0 * r <= epsilon) {
            for (std::size_t j = 0; j < resolution; ++j) {
                out.push_back(std::polar(r, px + 2.0 * pi * static_cast<double>(j) / n));
            }
        } else {
            const double theta = max_phase_deviation(r, epsilon);
            for (std::size_t j = 0; j <= resolution; ++j) {
                out.push_back(std::polar(r, px - theta + 2.0 * theta * static_cast<double>(j) / n));
            }
        }
        break;
    }
    case Constraint::ray: {
        const cscalar u = r == 0.0 ? cscalar{1.0, 0.0} : complex_sign(x);
        const double lo = std::max(0.0, r - epsilon);
        const double hi = r + epsilon;
        for (std::size_t j = 0; j <= resolution; ++j) {
            out.push_back((lo + (hi - lo) * static_cast<double>(j) / n) * u);
        }
        break;
    }
    }
    return out;
}

/// Exhaustive maximization of `objective` over the feasible set of a one-
/// or two-element input.
inline GridResult grid_search_attack(const ScalarFn& objective, const CTensor& x, Constraint constraint, double epsilon,
                                     std::size_t resolution)
{
    if (resolution < 8) {
        throw ConfigError("grid_search_attack: resolution must be >= 8");
    }
    if (x.size() < 1 || x.size() > 2) {
        throw ConfigError("grid_search_attack: input must have 1 or 2 elements");
    }
    if (!(epsilon > 0.0)) {
        throw ConfigError("grid_search_attack: epsilon must be > 0");
    }
    std::vector<std::vector<cscalar>> grids;
    for (std::size_t i = 0; i < x.size(); ++i) {
        grids.push_back(pixel_grid(x[i], constraint, epsilon, resolution));
    }
    GridResult res;
    CTensor z = x;
    auto visit = [&] {
        const double l = objective(z);
        ++res.evaluations;
        if (l > res.best_loss) {
            res.best_loss = l;
            res.best = z;
        }
    };
    for (const auto a : grids[0]) {
        z[0] = a;
        if (grids.size() == 1) {
            visit();
            continue;
        }
        for (const auto b : grids[1]) {
            z[1] = b;
            visit();
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Linear-model optimality

struct OptimalityOptions {
    std::size_t resolution = 512;
    /// Required fraction of the grid optimum's gain over the clean loss.
    double ratio = 0.99;
};

/// Single-pixel linear losses l(z) = Re(w conj z): checks that the
/// single-step attack of `kind` reaches at least `ratio` of the best gain
/// l(z*) - l(x) found by grid search over the same feasible set.
inline OracleReport check_linear_optimality(AttackKind kind, std::size_t trials, std::uint64_t seed,
                                            const OptimalityOptions& options = {})
{
    OracleReport report{kind == AttackKind::unrestricted ? "optimality/cfgsm"
                                                         : (kind == AttackKind::phase ? "optimality/pfgsm"
                                                                                      : "optimality/fgsm-mag")};
    const Constraint constraint = kind == AttackKind::unrestricted
                                      ? Constraint::ball
                                      : (kind == AttackKind::phase ? Constraint::circle : Constraint::ray);
    std::mutex m;
    parallel_for(trials, [&](std::size_t trial) {
        Rng rng = make_rng(seed, "linear-optimality", trial);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::uniform_real_distribution<double> angle(-pi, pi);
        const cscalar w = std::polar(0.2 + 2.0 * unit(rng), angle(rng));
        const cscalar x0 = std::polar(0.05 + 1.5 * unit(rng), angle(rng));
        const double epsilon = 0.05 + 2.0 * unit(rng);
        const ScalarFn loss = [w](const CTensor& z) { return cmul_conj(z[0], w).real(); };
        const auto oracle = [w](const CTensor& z) { return CTensor(z.shape(), {0.5 * w}); };
        const CTensor x({1}, {x0});
        const CTensor z = run_attack(kind, oracle, x, AttackConfig::make(Family::fgsm, epsilon), trial);
        const GridResult best = grid_search_attack(loss, x, constraint, epsilon, options.resolution);
        const double clean = loss(x);
        const double gain = loss(z) - clean;
        const double best_gain = std::max(best.best_loss - clean, 0.0);
        const double shortfall = std::max(0.0, best_gain - gain);
        std::lock_guard lock(m);
        ++report.checks;
        report.max_abs_error = std::max(report.max_abs_error, shortfall);
        report.max_rel_error = std::max(report.max_rel_error, best_gain > 0.0 ? shortfall / best_gain : 0.0);
        report.violations += gain >= options.ratio * best_gain ? 0 : 1;
    });
    return report;
}

} // namespace cvak::verify
