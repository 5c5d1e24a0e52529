#pragma once

#include "cvak/data.hpp"
#include "cvak/parallel.hpp"
#include "cvak/phase_attacks.hpp"

#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace cvak {

// ---------------------------------------------------------------------------
// Attack naming

/// One attack of the sweep: a family on a feasible set.
struct AttackSpec {
    AttackKind kind = AttackKind::unrestricted;
    Family family = Family::fgsm;
    int steps = 10;
    double beta = 1.0;

    /// cfgsm..cmifgsm, pfgsm..pmifgsm, fgsm-mag..mifgsm-mag
    [[nodiscard]] std::string name() const
    {
        const std::string f(to_string(family));
        switch (kind) {
        case AttackKind::unrestricted: return "c" + f;
        case AttackKind::phase: return "p" + f;
        case AttackKind::magnitude: return f + "-mag";
        }
        return f;
    }

    [[nodiscard]] AttackConfig config(double epsilon) const
    {
        return AttackConfig::make(family, epsilon, steps, family == Family::mifgsm ? beta : 0.0);
    }

    static std::optional<AttackSpec> parse(std::string_view s)
    {
        for (const auto kind : {AttackKind::unrestricted, AttackKind::phase, AttackKind::magnitude}) {
            for (const auto family : {Family::fgsm, Family::ffgsm, Family::ifgsm, Family::mifgsm}) {
                AttackSpec a{kind, family};
                if (a.name() == s) {
                    return a;
                }
            }
        }
        return std::nullopt;
    }
};

inline std::vector<std::string> attack_names()
{
    std::vector<std::string> names;
    for (const auto kind : {AttackKind::unrestricted, AttackKind::phase, AttackKind::magnitude}) {
        for (const auto family : {Family::fgsm, Family::ffgsm, Family::ifgsm, Family::mifgsm}) {
            names.push_back(AttackSpec{kind, family}.name());
        }
    }
    return names;
}

inline std::vector<AttackSpec> all_attacks(int steps = 10, double beta = 1.0)
{
    std::vector<AttackSpec> out;
    for (const auto& n : attack_names()) {
        auto a = *AttackSpec::parse(n);
        a.steps = steps;
        a.beta = beta;
        out.push_back(a);
    }
    return out;
}

inline std::vector<double> default_epsilon_grid() { return {0.0, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2}; }

// ---------------------------------------------------------------------------
// Training

enum class Optimizer { sgd, adam };

struct TrainConfig {
    int epochs = 30;
    std::size_t batch_size = 32;
    double learning_rate = 1e-2;
    Optimizer optimizer = Optimizer::adam;
    /// When set, every batch is replaced by its attacked version (unrestricted
    /// attack against the current parameters) before the update.
    std::optional<AttackConfig> adversarial;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (epochs < 0) {
            throw ConfigError("train: epochs must be >= 0");
        }
        if (batch_size == 0) {
            throw ConfigError("train: batch size must be >= 1");
        }
        if (!(learning_rate > 0.0)) {
            throw ConfigError("train: learning rate must be > 0");
        }
        if (adversarial) {
            adversarial->validate();
        }
    }
};

struct TrainResult {
    Model model;
    std::vector<double> loss_history; // mean loss per epoch
};

inline LabeledBatch gather(const LabeledBatch& data, std::span<const std::size_t> rows)
{
    const Shape& s = data.images.shape();
    const std::size_t row = data.images.size() / std::max<std::size_t>(s[0], 1);
    LabeledBatch out{CTensor({rows.size(), s[1], s[2], s[3]}), Labels(rows.size()), data.classes};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy_n(data.images.data().begin() + static_cast<std::ptrdiff_t>(rows[i] * row), row,
                    out.images.data().begin() + static_cast<std::ptrdiff_t>(i * row));
        out.labels[i] = data.labels[rows[i]];
    }
    return out;
}

/// Minibatch training on mean cross-entropy. Complex parameters are updated
/// as pairs of real coordinates; real parameters keep a zero imaginary part.
inline TrainResult train(Model model, const LabeledBatch& data, const TrainConfig& cfg)
{
    cfg.validate();
    auto params = model.parameters();
    // Adam moments per real coordinate, stored as complex (re, im) pairs.
    std::vector<std::vector<cscalar>> m1;
    std::vector<std::vector<cscalar>> m2;
    for (const auto& p : params) {
        m1.emplace_back(p.size());
        m2.emplace_back(p.size());
    }
    constexpr double b1 = 0.9;
    constexpr double b2 = 0.999;
    constexpr double adam_eps = 1e-8;
    std::size_t step = 0;

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> history;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle = make_rng(cfg.seed, "train-shuffle", static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), shuffle);
        double epoch_loss = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            LabeledBatch batch = gather(data, std::span(order).subspan(begin, end - begin));
            if (cfg.adversarial) {
                batch.images = run_gradient_attack(model, batch.images, batch.labels, *cfg.adversarial,
                                                   derive_seed(cfg.seed, "adversarial-training", step));
            }
            Tape tape;
            const auto vars = model.bind(tape, true);
            const Var in = tape.constant(batch.images);
            const Var loss = ad::softmax_cross_entropy(tape, model.forward(tape, in, vars), batch.labels);
            const double lv = tape.value(loss)[0].real();
            if (!std::isfinite(lv)) {
                throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch) + ", step "
                                      + std::to_string(step));
            }
            epoch_loss += lv * static_cast<double>(end - begin);
            const Gradients grads = backward(tape, loss);
            ++step;
            const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
            for (std::size_t p = 0; p < params.size(); ++p) {
                const Adjoint& g = grads.adjoint(vars[p]);
                if (g.empty()) {
                    continue;
                }
                const bool real = model.real_parameter(p);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double gr = g[i].real();
                    const double gi = real ? 0.0 : g[i].imag();
                    if (cfg.optimizer == Optimizer::sgd) {
                        params[p][i] -= cfg.learning_rate * cscalar{gr, gi};
                        continue;
                    }
                    m1[p][i] = b1 * m1[p][i] + (1.0 - b1) * cscalar{gr, gi};
                    m2[p][i] = b2 * m2[p][i] + (1.0 - b2) * cscalar{gr * gr, gi * gi};
                    const double ur = (m1[p][i].real() / c1) / (std::sqrt(m2[p][i].real() / c2) + adam_eps);
                    const double ui = (m1[p][i].imag() / c1) / (std::sqrt(m2[p][i].imag() / c2) + adam_eps);
                    params[p][i] -= cfg.learning_rate * cscalar{ur, real ? 0.0 : ui};
                }
            }
        }
        history.push_back(data.size() ? epoch_loss / static_cast<double>(data.size()) : 0.0);
    }
    return {std::move(model), std::move(history)};
}

// ---------------------------------------------------------------------------
// Robustness sweeps

struct CurvePoint {
    double epsilon = 0.0;
    double raw = 0.0;
    double normalized = 0.0;
};

struct RobustnessCurve {
    std::string model_id;
    ModelKind model_kind = ModelKind::cvnn;
    bool adversarially_trained = false;
    std::string attack;
    std::uint64_t seed = 0;
    std::vector<CurvePoint> points;
};

/// Called once per attacked chunk with the clean and attacked inputs.
using AttackObserver = std::function<void(const AttackSpec&, double epsilon, const CTensor& clean, const CTensor& attacked)>;

struct SweepOptions {
    /// Samples per attack job. Fixed chunking keeps results independent of
    /// the thread count.
    std::size_t chunk = 16;
    std::size_t threads = thread_count();
    AttackObserver observer;
};

/// Accuracy under attack for every epsilon in `grid`; the eps = 0 entry is
/// the clean accuracy, and scores are normalized by it.
inline RobustnessCurve evaluate_robustness(const Model& model, const LabeledBatch& test, const AttackSpec& attack,
                                           std::span<const double> grid, std::uint64_t seed,
                                           const SweepOptions& options = {})
{
    const double clean = accuracy(model, test.images, test.labels);
    if (!(clean > 0.0)) {
        throw Error("evaluate_robustness: clean accuracy is zero, normalization undefined");
    }
    const std::size_t chunk = std::max<std::size_t>(options.chunk, 1);
    const std::size_t chunks = (test.size() + chunk - 1) / chunk;
    std::vector<std::size_t> hits(grid.size() * chunks, 0);
    std::mutex observer_mutex;
    const std::string name = attack.name();

    parallel_for(
        grid.size() * chunks,
        [&](std::size_t job) {
            const std::size_t e = job / chunks;
            const std::size_t c = job % chunks;
            if (grid[e] == 0.0) {
                return;
            }
            const std::size_t begin = c * chunk;
            const std::size_t end = std::min(test.size(), begin + chunk);
            const LabeledBatch part = slice(test, begin, end);
            const AttackConfig cfg = attack.config(grid[e]);
            const std::uint64_t s = derive_seed(seed, name, (static_cast<std::uint64_t>(e) << 32) | c);
            const CTensor z = run_attack(attack.kind, model_oracle(model, part.labels), part.images, cfg, s);
            const Labels pred = model.predict(z);
            for (std::size_t i = 0; i < pred.size(); ++i) {
                hits[job] += pred[i] == part.labels[i] ? 1 : 0;
            }
            if (options.observer) {
                std::lock_guard lock(observer_mutex);
                options.observer(attack, grid[e], part.images, z);
            }
        },
        options.threads);

    RobustnessCurve curve;
    curve.model_kind = model.config().kind;
    curve.attack = name;
    curve.seed = seed;
    for (std::size_t e = 0; e < grid.size(); ++e) {
        double raw = clean;
        if (grid[e] != 0.0) {
            std::size_t total = 0;
            for (std::size_t c = 0; c < chunks; ++c) {
                total += hits[e * chunks + c];
            }
            raw = static_cast<double>(total) / static_cast<double>(test.size());
        }
        curve.points.push_back({grid[e], raw, grid[e] == 0.0 ? 1.0 : raw / clean});
    }
    return curve;
}

// ---------------------------------------------------------------------------
// Comparisons

struct RankRow {
    std::string model_id;
    double epsilon = 0.0;
    std::string attack;
    double normalized = 0.0;
    /// 1 = most effective attack (lowest score); ties share the lower rank.
    int rank = 0;
};

struct ComparisonSummary {
    std::vector<RankRow> ranks;
    std::vector<std::string> findings;

    [[nodiscard]] std::string to_text() const
    {
        std::ostringstream os;
        os << "model,epsilon,attack,normalized,rank\n";
        for (const auto& r : ranks) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%g,", r.epsilon);
            os << r.model_id << ',' << buf << r.attack << ',';
            std::snprintf(buf, sizeof buf, "%.4f,", r.normalized);
            os << buf << r.rank << '\n';
        }
        for (const auto& f : findings) {
            os << f << '\n';
        }
        return os.str();
    }
};

namespace detail {

inline std::string model_label(const RobustnessCurve& c)
{
    return std::string(to_string(c.model_kind)) + (c.adversarially_trained ? "+adv" : "");
}

/// Counts grid points where a scores strictly above / below / equal to b.
inline std::string versus(const RobustnessCurve& a, const RobustnessCurve& b, const std::string& la,
                          const std::string& lb)
{
    int above = 0;
    int below = 0;
    int tied = 0;
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        if (a.points[i].epsilon == 0.0) {
            continue;
        }
        const double d = a.points[i].normalized - b.points[i].normalized;
        (d > 0 ? above : (d < 0 ? below : tied))++;
    }
    std::ostringstream os;
    os << la << " vs " << lb << ": " << la << " more robust at " << above << ", less at " << below << ", tied at "
       << tied << " eps";
    return os.str();
}

} // namespace detail

/// Ranks attacks per (model, eps) and emits pairwise robustness comparisons:
/// RVNN vs CVNN, phase vs unrestricted vs magnitude, and with vs without
/// adversarial training.
inline ComparisonSummary compare_curves(std::span<const RobustnessCurve> curves)
{
    ComparisonSummary out;
    if (curves.empty()) {
        return out;
    }
    for (const auto& c : curves) {
        if (c.points.size() != curves[0].points.size()) {
            throw Error("compare_curves: curves do not share an epsilon grid");
        }
        for (std::size_t i = 0; i < c.points.size(); ++i) {
            if (c.points[i].epsilon != curves[0].points[i].epsilon) {
                throw Error("compare_curves: curves do not share an epsilon grid");
            }
        }
    }

    std::map<std::string, std::vector<const RobustnessCurve*>> by_model;
    for (const auto& c : curves) {
        by_model[c.model_id].push_back(&c);
    }
    for (const auto& [model_id, group] : by_model) {
        for (std::size_t e = 0; e < curves[0].points.size(); ++e) {
            for (const auto* c : group) {
                int rank = 1;
                for (const auto* other : group) {
                    rank += other->points[e].normalized < c->points[e].normalized ? 1 : 0;
                }
                out.ranks.push_back({model_id, c->points[e].epsilon, c->attack, c->points[e].normalized, rank});
            }
        }
    }

    for (const auto& a : curves) {
        for (const auto& b : curves) {
            if (&a == &b) {
                continue;
            }
            const bool same_attack = a.attack == b.attack;
            if (same_attack && a.adversarially_trained == b.adversarially_trained && a.model_kind == ModelKind::cvnn
                && b.model_kind == ModelKind::rvnn) {
                out.findings.push_back("[cvnn-vs-rvnn] " + a.attack + ": "
                                       + detail::versus(a, b, detail::model_label(a), detail::model_label(b)));
            }
            if (same_attack && a.model_kind == b.model_kind && a.adversarially_trained && !b.adversarially_trained) {
                out.findings.push_back("[adversarial-training] " + a.attack + ": "
                                       + detail::versus(a, b, detail::model_label(a), detail::model_label(b)));
            }
        }
    }
    for (const auto& [model_id, group] : by_model) {
        for (const auto family : {Family::fgsm, Family::ffgsm, Family::ifgsm, Family::mifgsm}) {
            std::map<AttackKind, const RobustnessCurve*> kinds;
            for (const auto* c : group) {
                const auto spec = AttackSpec::parse(c->attack);
                if (spec && spec->family == family) {
                    kinds[spec->kind] = c;
                }
            }
            const auto* unrestricted = kinds.count(AttackKind::unrestricted) ? kinds[AttackKind::unrestricted] : nullptr;
            for (const auto kind : {AttackKind::phase, AttackKind::magnitude}) {
                if (unrestricted && kinds.count(kind)) {
                    const auto* c = kinds[kind];
                    out.findings.push_back("[restricted-vs-unrestricted] " + model_id + ": "
                                           + detail::versus(*unrestricted, *c, "vs-" + c->attack + " " + unrestricted->attack, c->attack));
                }
            }
            if (kinds.count(AttackKind::phase) && kinds.count(AttackKind::magnitude)) {
                const auto* p = kinds[AttackKind::phase];
                const auto* m = kinds[AttackKind::magnitude];
                out.findings.push_back("[magnitude-vs-phase] " + model_id + ": "
                                       + detail::versus(*m, *p, m->attack, p->attack));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Output

inline std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string curves_csv(std::span<const RobustnessCurve> curves)
{
    std::string out = "model,attack,epsilon,raw_score,normalized_score,seed\n";
    for (const auto& c : curves) {
        for (const auto& p : c.points) {
            out += c.model_id + ',' + c.attack + ',' + format_double(p.epsilon) + ',' + format_double(p.raw) + ','
                   + format_double(p.normalized) + ',' + std::to_string(c.seed) + '\n';
        }
    }
    return out;
}

/// Line chart of normalized score against eps on a log axis; eps = 0 is
/// drawn one decade left of the smallest positive eps.
inline std::string curves_svg(const std::string& title, std::span<const RobustnessCurve> curves)
{
    constexpr double width = 720;
    constexpr double height = 440;
    constexpr double left = 70;
    constexpr double right = 180;
    constexpr double top = 40;
    constexpr double bottom = 60;
    static constexpr const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                              "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"};

    double lo = 0.0;
    double hi = 0.0;
    for (const auto& c : curves) {
        for (const auto& p : c.points) {
            if (p.epsilon > 0.0) {
                lo = lo == 0.0 ? p.epsilon : std::min(lo, p.epsilon);
                hi = std::max(hi, p.epsilon);
            }
        }
    }
    if (lo == 0.0) {
        lo = hi = 1.0;
    }
    const double xmin = std::log10(lo) - 1.0;
    const double xmax = std::max(std::log10(hi), xmin + 1.0);
    auto px = [&](double eps) {
        const double lx = eps > 0.0 ? std::log10(eps) : xmin;
        return left + (lx - xmin) / (xmax - xmin) * (width - left - right);
    };
    auto py = [&](double v) { return top + (1.0 - std::clamp(v, 0.0, 1.05) / 1.05) * (height - top - bottom); };
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        return std::string(buf);
    };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << left << "\" y=\"24\" font-size=\"15\">" << title << "</text>\n";
    const double x0 = left;
    const double x1 = width - right;
    const double y0 = top;
    const double y1 = height - bottom;
    os << "<line x1=\"" << x0 << "\" y1=\"" << y1 << "\" x2=\"" << x1 << "\" y2=\"" << y1 << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1 << "\" stroke=\"black\"/>\n";
    for (int d = static_cast<int>(std::ceil(xmin)); d <= static_cast<int>(std::floor(xmax)); ++d) {
        const double x = px(std::pow(10.0, d));
        os << "<line x1=\"" << num(x) << "\" y1=\"" << y1 << "\" x2=\"" << num(x) << "\" y2=\"" << y1 + 5
           << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << num(x) << "\" y=\"" << y1 + 20 << "\" text-anchor=\"middle\">1e" << d << "</text>\n";
    }
    os << "<text x=\"" << num(px(0.0)) << "\" y=\"" << y1 + 36 << "\" text-anchor=\"middle\">0</text>\n";
    for (int t = 0; t <= 5; ++t) {
        const double v = t / 5.0;
        os << "<line x1=\"" << x0 - 5 << "\" y1=\"" << num(py(v)) << "\" x2=\"" << x1 << "\" y2=\"" << num(py(v))
           << "\" stroke=\"#dddddd\"/>\n";
        os << "<text x=\"" << x0 - 8 << "\" y=\"" << num(py(v) + 4) << "\" text-anchor=\"end\">" << num(v)
           << "</text>\n";
    }
    os << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << height - 8 << "\" text-anchor=\"middle\">epsilon (log scale)</text>\n";
    os << "<text transform=\"translate(18," << (y0 + y1) / 2
       << ") rotate(-90)\" text-anchor=\"middle\">normalized accuracy</text>\n";
    std::size_t idx = 0;
    for (const auto& c : curves) {
        const char* color = palette[idx % std::size(palette)];
        const auto spec = AttackSpec::parse(c.attack);
        const char* dash = "";
        if (spec && spec->kind == AttackKind::phase) {
            dash = " stroke-dasharray=\"6,3\"";
        } else if (spec && spec->kind == AttackKind::magnitude) {
            dash = " stroke-dasharray=\"2,3\"";
        }
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"" << dash << " points=\"";
        for (const auto& p : c.points) {
            os << num(px(p.epsilon)) << ',' << num(py(p.normalized)) << ' ';
        }
        os << "\"/>\n";
        const double ly = top + 16.0 * static_cast<double>(idx);
        os << "<line x1=\"" << x1 + 15 << "\" y1=\"" << ly << "\" x2=\"" << x1 + 45 << "\" y2=\"" << ly
           << "\" stroke=\"" << color << "\" stroke-width=\"2\"" << dash << "/>\n";
        os << "<text x=\"" << x1 + 50 << "\" y=\"" << ly + 4 << "\">" << c.attack << "</text>\n";
        ++idx;
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace cvak
