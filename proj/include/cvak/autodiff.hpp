#pragma once

// Reverse-mode differentiation over complex tensors.
//
// Each recorded node carries an adjoint G = dl/dRe(z) + i dl/dIm(z) per
// element. Primitives propagate G through their real Jacobians, so
// non-holomorphic operations (|z|, split-ReLU, phase) need no special
// treatment. The Wirtinger derivative dl/dz̄ = G/2 is only formed when a
// gradient is read out.

#include "cvak/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace cvak {

struct Var {
    std::size_t id = 0;
};

using Adjoint = std::vector<cscalar>;

class Tape;

/// dl/dz̄ per element for a real scalar loss l. dl/dz is its conjugate.
class WirtingerGradient {
public:
    WirtingerGradient() = default;
    explicit WirtingerGradient(CTensor dzbar) : dzbar_(std::move(dzbar)) {}

    [[nodiscard]] const CTensor& dzbar() const noexcept { return dzbar_; }
    [[nodiscard]] const Shape& shape() const noexcept { return dzbar_.shape(); }

    [[nodiscard]] CTensor dz() const
    {
        CTensor out = dzbar_;
        for (auto& v : out.data()) {
            v = std::conj(v);
        }
        return out;
    }

private:
    CTensor dzbar_;
};

class Tape {
public:
    using BackwardFn = std::function<void(const Tape&, std::size_t self, std::vector<Adjoint>&)>;

    struct Node {
        std::string_view op;
        CTensor value;
        bool real = false;
        bool requires_grad = false;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
    };

    Var leaf(CTensor value, bool requires_grad = true, bool real = false)
    {
        Node n;
        n.op = "leaf";
        n.value = std::move(value);
        n.real = real;
        n.requires_grad = requires_grad;
        return push(std::move(n));
    }

    Var constant(CTensor value, bool real = false) { return leaf(std::move(value), false, real); }

    /// Appends an operation node. requires_grad is inherited from the inputs.
    Var record(std::string_view op, CTensor value, bool real, std::vector<std::size_t> inputs, BackwardFn backward)
    {
        Node n;
        n.op = op;
        n.value = std::move(value);
        n.real = real;
        for (const auto i : inputs) {
            n.requires_grad = n.requires_grad || nodes_.at(i).requires_grad;
        }
        n.inputs = std::move(inputs);
        n.backward = std::move(backward);
        return push(std::move(n));
    }

    [[nodiscard]] const CTensor& value(Var v) const { return nodes_.at(v.id).value; }
    [[nodiscard]] bool is_real(Var v) const { return nodes_.at(v.id).real; }
    [[nodiscard]] const Node& node(std::size_t i) const { return nodes_.at(i); }
    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

    /// Adjoint buffer for input node `i`, or nullptr if it needs no gradient.
    Adjoint* target(std::size_t i, std::vector<Adjoint>& adj) const
    {
        const Node& n = nodes_[i];
        if (!n.requires_grad) {
            return nullptr;
        }
        if (adj[i].empty()) {
            adj[i].assign(n.value.size(), cscalar{});
        }
        return &adj[i];
    }

private:
    Var push(Node n)
    {
        nodes_.push_back(std::move(n));
        return Var{nodes_.size() - 1};
    }

    std::vector<Node> nodes_;
};

/// Adjoints of every node after one reverse sweep.
class Gradients {
public:
    Gradients(const Tape& tape, std::vector<Adjoint> adj) : tape_(&tape), adj_(std::move(adj)) {}

    /// dl/dz̄ for `v`; zero when `v` does not influence the loss.
    [[nodiscard]] WirtingerGradient wrt(Var v) const
    {
        CTensor out = CTensor::zeros(tape_->value(v).shape());
        const Adjoint& a = adj_.at(v.id);
        for (std::size_t i = 0; i < a.size(); ++i) {
            out[i] = 0.5 * a[i];
        }
        return WirtingerGradient(std::move(out));
    }

    /// Raw adjoint (dl/dRe + i dl/dIm) for parameter updates. Empty if disconnected.
    [[nodiscard]] const Adjoint& adjoint(Var v) const { return adj_.at(v.id); }

private:
    const Tape* tape_;
    std::vector<Adjoint> adj_;
};

/// Reverse sweep from a real scalar loss node. Visits each node once, in
/// reverse recording order, which is a reverse topological order.
inline Gradients backward(const Tape& tape, Var loss)
{
    const auto& ln = tape.node(loss.id);
    if (ln.value.size() != 1) {
        throw ShapeError("backward: loss must be scalar, got shape " + shape_string(ln.value.shape()));
    }
    if (!ln.real) {
        throw Error("backward: loss node '" + std::string(ln.op) + "' is not real-valued");
    }
    std::vector<Adjoint> adj(tape.size());
    adj[loss.id] = {cscalar{1.0, 0.0}};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        const auto& n = tape.node(i);
        if (adj[i].empty() || !n.requires_grad || !n.backward) {
            continue;
        }
        n.backward(tape, i, adj);
    }
    return Gradients(tape, std::move(adj));
}

namespace ad {

namespace detail {

inline const CTensor& in(const Tape& t, std::size_t self, std::size_t k)
{
    return t.value(Var{t.node(self).inputs[k]});
}

inline std::size_t in_id(const Tape& t, std::size_t self, std::size_t k) { return t.node(self).inputs[k]; }

inline bool all_real(const Tape& t, std::initializer_list<Var> vs)
{
    for (const auto v : vs) {
        if (!t.is_real(v)) {
            return false;
        }
    }
    return true;
}

/// Elementwise holomorphic map: G_in += conj(f'(x)) * G_out.
template <typename Value, typename Deriv>
Var holomorphic_unary(Tape& t, std::string_view op, Var x, bool real_out, Value&& value, Deriv&& deriv)
{
    const CTensor& xv = t.value(x);
    CTensor out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        out[i] = value(xv[i]);
    }
    return t.record(op, std::move(out), real_out, {x.id},
                    [deriv](const Tape& tp, std::size_t self, std::vector<Adjoint>& adj) {
                        Adjoint* gx = tp.target(in_id(tp, self, 0), adj);
                        if (!gx) {
                            return;
                        }
                        const CTensor& xv = in(tp, self, 0);
                        const Adjoint& g = adj[self];
                        for (std::size_t i = 0; i < g.size(); ++i) {
                            (*gx)[i] += cmul_conj(deriv(xv[i]), g[i]);
                        }
                    });
}

} // namespace detail

inline Var add(Tape& t, Var a, Var b)
{
    const CTensor& av = t.value(a);
    const CTensor& bv = t.value(b);
    require_same_shape("add", av, bv);
    CTensor out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) {
        out[i] = av[i] + bv[i];
    }
    return t.record("add", std::move(out), detail::all_real(t, {a, b}), {a.id, b.id},
                    [](const Tape& tp, std::size_t self, std::vector<Adjoint>& adj) {
                        for (std::size_t k = 0; k < 2; ++k) {
                            if (Adjoint* g = tp.target(detail::in_id(tp, self, k), adj)) {
                                for (std::size_t i = 0; i < g->size(); ++i) {
                                    (*g)[i] += adj[self][i];
                                }
                            }
                        }
                    });
}

/// x + b broadcast over the channel/feature axis: x [B,N] with b [N], or
/// x [B,C,H,W] with b [C].
inline Var add_bias(Tape& t, Var x, Var b)
{
    const CTensor& xv = t.value(x);
    const CTensor& bv = t.value(b);
    if (xv.rank() < 2 || bv.rank() != 1 || bv.dim(0) != xv.dim(1)) {
        throw ShapeError("add_bias: shape mismatch " + shape_string(xv.shape()) + " vs " + shape_string(bv.shape()));
    }
    const std::size_t batch = xv.dim(0);
    const std::size_t channels = xv.dim(1);
    const std::size_t inner = xv.size() / std::max<std::size_t>(batch * channels, 1);
    CTensor out = xv;
    for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t c = 0; c < channels; ++c) {
            cscalar* row = out.data().data() + (n * channels + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
                row[i] += bv[c];
            }
        }
    }
    return t.record("add_bias", std::move(out), detail::all_real(t, {x, b}), {x.id, b.id},
                    [batch, channels, inner](const Tape& tp, std::size_t self, std::vector<Adjoint>& adj) {
                        const Adjoint& g = adj[self];
                        if (Adjoint* gx = tp.target(detail::in_id(tp, self, 0), adj)) {
                            for (std::size_t i = 0; i < g.size(); ++i) {
                                (*gx)[i] += g[i];
                            }
                        }
                        if (Adjoint* gb = tp.target(detail::in_id(tp, self, 1), adj)) {
                            for (std::size_t n = 0; n < batch; ++n) {
                                for (std::size_t c = 0; c < channels; ++c) {
                                    const cscalar* row = g.data() + (n * channels + c) * inner;
                                    for (std::size_t i = 0; i < inner; ++i) {
                                        (*gb)[c] += row[i];
                                    }
                                }
                            }
                        }
                    });
}

inline Var mul(Tape& t, Var a, Var b)
{
    const CTensor& av = t.value(a);
    const CTensor& bv = t.value(b);
    require_same_shape("mul", av, bv);
    CTensor out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) {
        out[i] = cmul(av[i], bv[i]);
    }
    return t.record("mul", std::move(out), detail::all_real(t, {a, b}), {a.id, b.id},
                    [](const Tape& tp, std::size_t self, std::vector<Adjoint>& adj) {
                        const Adjoint& g = adj[self];
                        const CTensor& av = detail::in(tp, self, 0);
                        const CTensor& bv = detail::in(tp, self, 1);
                        if (Adjoint* ga = tp.target(detail::in_id(tp, self, 0), adj)) {
                            for (std::size_t i = 0; i < g.size(); ++i) {
                                (*ga)[i] += cmul_conj(bv[i], g[i]);
                            }
                        }
                        if (Adjoint* gb = tp.target(detail::in_id(tp, self, 1), adj)) {
                            for (std::size_t i = 0; i < g.size(); ++i) {
                                (*gb)[i] += cmul_conj(av[i], g[i]);
                            }
                        }
                    });
}

inline Var scale(Tape& t, Var x, double s)
{
    return detail::holomorphic_unary(
        t, "scale", x, t.is_real(x), [s](cscalar z) { return s * z; }, [s](cscalar) { return cscalar{s, 0.0}; });
}

inline Var exp(Tape& t, Var x)
{
    return detail::holomorphic_unary(
        t, "exp", x, t.is_real(x), [](cscalar z) { return std::exp(z); }, [](cscalar z) { return std::exp(z); });
}

inline Var conj(Tape& t, Var x)
{
    const CTensor& xv = t.value(x);
    CTensor out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        out[i] = std::conj(xv[i]);
    }
    return t.record("conj", std::move(out), t.is_real(x), {x.id},
                    [](const Tape& tp, std::size_t self, std::vector<Adjoint>& adj) {
                        if (Adjoint* gx = tp.target(detail::in_id(tp, self, 0), adj)) {
                            for (std::size_t i = 0; i < gx->size(); ++i) {
                                (*gx)[i] += std::conj(adj[self][i]);
                            }
                        }
                    });
}

/// |z| per element (real output). Subgradient at 0 is 0.
inline Var magnitude(Tape& t, Var x)
{
    const CTensor& xv = t.value(x);
    CTensor out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        out[i] = std::abs(xv[i]);
    }
    return t.record("magnitude", std::move(out), true, {x.id},
                    [](const Tape& tp, std::size_t self, std::vector<Adjoint>& adj) {
                        Adjoint* gx = tp.target(detail::in_id(tp, self, 0), adj);
                        if (!gx) {
                            return;
                        }
                        const CTensor& xv = detail::in(tp, self, 0);
                        const CTensor& r = tp.value(Var{self});
                        for (std::size_t i = 0; i < gx->size(); ++i) {
                            const double ri = r[i].real();
                            if (ri > 0.0) {
                                (*gx)[i] += adj[self][i].real() / ri * xv[i];
                            }
                        }
                    });
}

/// Real logits read out as |z| from complex features.
inline Var magnitude_readout(Tape& t, Var x) { return magnitude(t, x); }

/// Phase in [-pi, pi) per element (real output). Gradient 0 at z = 0.
inline Var phase(Tape& t, Var x)
{
    const CTensor& xv = t.value(x);
    CTensor out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        out[i] = cvak::phase(xv[i]);
    }
    return t.record("phase", std::move(out), true, {x.id},
                    [](const Tape& tp, std::size_t self, std::vector<Adjoint>& adj) {
                        Adjoint* gx = tp.target(detail::in_id(tp, self, 0), adj);
                        if (!gx) {
                            return;
                        }
                        const CTensor& xv = detail::in(tp, self, 0);
                        for (std::size_t i = 0; i < gx->size(); ++i) {
                            const double r2 = std::norm(xv[i]);
                            if (r2 > 0.0) {
                                // dphi/dRe = -Im/r², dphi/dIm = Re/r²
                                (*gx)[i] += adj[self][i].real() / r2 * cscalar{-xv[i].imag(), xv[i].real()};
                            }
                        }
                    });
}

inline Var real_part(Tape& t, Var x)
{
    const CTensor& xv = t.value(x);
    CTensor out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        out[i] = xv[i].real();
    }
    return t.record("real_part", std::move(out), true, {x.id},
                    [](const Tape& tp, std::size_t self, std::vector<Adjoint>& adj) {
                        if (Adjoint* gx = tp.target(detail::in_id(tp, self, 0), adj)) {
                            for (std::size_t i = 0; i < gx->size(); ++i) {
                                (*gx)[i] += adj[self][i].real();
                            }
                        }
                    });
}

/// Sum of all elements into shape [1].
inline Var sum(Tape& t, Var x)
{
    const CTensor& xv = t.value(x);
    cscalar s{};
    for (const auto v : xv.data()) {
        s += v;
    }
    return t.record("sum", CTensor::scalar(s), t.is_real(x), {x.id},
                    [](const Tape& tp, std::size_t self, std::vector<Adjoint>& adj) {
                        if (Adjoint* gx = tp.target(detail::in_id(tp, self, 0), adj)) {
                            for (auto& v : *gx) {
                                v += adj[self][0];
                            }
                        }
                    });
}

/// ReLU applied independently to the real and imaginary parts.
inline Var split_relu(Tape& t, Var x)
{
    const CTensor& xv = t.value(x);
    CTensor out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        out[i] = {std::max(xv[i].real(), 0.0), std::max(xv[i].imag(), 0.0)};
    }
    return t.record("split_relu", std::move(out), t.is_real(x), {x.id},
                    [](const Tape& tp, std::size_t self, std::vector<Adjoint>& adj) {
                        Adjoint* gx = tp.target(detail::in_id(tp, self, 0), adj);
                        if (!gx) {
                            return;
                        }
                        const CTensor& xv = detail::in(tp, self, 0);
                        for (std::size_t i = 0; i < gx->size(); ++i) {
                            const cscalar g = adj[self][i];
                            (*gx)[i] += cscalar{xv[i].real() > 0.0 ? g.real() : 0.0, xv[i].imag() > 0.0 ? g.imag() : 0.0};
                        }
                    });
}

inline Var reshape(Tape& t, Var x, Shape shape)
{
    CTensor out = t.value(x).reshaped(std::move(shape));
    return t.record("reshape", std::move(out), t.is_real(x), {x.id},
                    [](const Tape& tp, std::size_t self, std::vector<Adjoint>& adj) {
                        if (Adjoint* gx = tp.target(detail::in_id(tp, self, 0), adj)) {
                            for (std::size_t i = 0; i < gx->size(); ++i) {
                                (*gx)[i] += adj[self][i];
                            }
                        }
                    });
}

/// [M,K] x [K,N] -> [M,N]
inline Var matmul(Tape& t, Var a, Var b)
{
    const CTensor& av = t.value(a);
    const CTensor& bv = t.value(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
        throw ShapeError("matmul: shape mismatch " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
    }
    const std::size_t m = av.dim(0);
    const std::size_t k = av.dim(1);
    const std::size_t n = bv.dim(1);
    CTensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        cscalar* orow = out.data().data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const cscalar aip = av[i * k + p];
            const cscalar* brow = bv.data().data() + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                orow[j] += cmul(aip, brow[j]);
            }
        }
    }
    return t.record("matmul", std::move(out), detail::all_real(t, {a, b}), {a.id, b.id},
                    [m, k, n](const Tape& tp, std::size_t self, std::vector<Adjoint>& adj) {
                        const Adjoint& g = adj[self];
                        const CTensor& av = detail::in(tp, self, 0);
                        const CTensor& bv = detail::in(tp, self, 1);
                        // G_A = G B^H, G_B = A^H G
                        if (Adjoint* ga = tp.target(detail::in_id(tp, self, 0), adj)) {
                            for (std::size_t i = 0; i < m; ++i) {
                                for (std::size_t p = 0; p < k; ++p) {
                                    cscalar acc{};
                                    for (std::size_t j = 0; j < n; ++j) {
                                        acc += cmul_conj(bv[p * n + j], g[i * n + j]);
                                    }
                                    (*ga)[i * k + p] += acc;
                                }
                            }
                        }
                        if (Adjoint* gb = tp.target(detail::in_id(tp, self, 1), adj)) {
                            for (std::size_t i = 0; i < m; ++i) {
                                for (std::size_t p = 0; p < k; ++p) {
                                    const cscalar aip = av[i * k + p];
                                    for (std::size_t j = 0; j < n; ++j) {
                                        (*gb)[p * n + j] += cmul_conj(aip, g[i * n + j]);
                                    }
                                }
                            }
                        }
                    });
}

/// 2-D cross-correlation, stride 1, zero padding k/2 (odd square kernels).
/// x [B,C,H,W], w [O,C,k,k] -> [B,O,H,W]
inline Var conv2d(Tape& t, Var x, Var w)
{
    const CTensor& xv = t.value(x);
    const CTensor& wv = t.value(w);
    if (xv.rank() != 4 || wv.rank() != 4 || wv.dim(1) != xv.dim(1) || wv.dim(2) != wv.dim(3) || wv.dim(2) % 2 == 0) {
        throw ShapeError("conv2d: shape mismatch " + shape_string(xv.shape()) + " vs " + shape_string(wv.shape()));
    }
    struct Dims {
        std::size_t b, c, h, w, o, k;
        std::ptrdiff_t pad;
    };
    const Dims d{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(0), wv.dim(2),
                 static_cast<std::ptrdiff_t>(wv.dim(2) / 2)};

    // Visits every (output, input, weight) index triple once.
    auto for_each_tap = [d](auto&& visit) {
        for (std::size_t n = 0; n < d.b; ++n) {
            for (std::size_t o = 0; o < d.o; ++o) {
                for (std::size_t c = 0; c < d.c; ++c) {
                    for (std::size_t ki = 0; ki < d.k; ++ki) {
                        for (std::size_t kj = 0; kj < d.k; ++kj) {
                            const std::size_t wi = ((o * d.c + c) * d.k + ki) * d.k + kj;
                            for (std::size_t i = 0; i < d.h; ++i) {
                                const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(i + ki) - d.pad;
                                if (si < 0 || si >= static_cast<std::ptrdiff_t>(d.h)) {
                                    continue;
                                }
                                const std::size_t obase = ((n * d.o + o) * d.h + i) * d.w;
                                const std::size_t xbase = ((n * d.c + c) * d.h + static_cast<std::size_t>(si)) * d.w;
                                const std::ptrdiff_t jlo = std::max<std::ptrdiff_t>(0, d.pad - static_cast<std::ptrdiff_t>(kj));
                                const std::ptrdiff_t jhi = std::min<std::ptrdiff_t>(
                                    static_cast<std::ptrdiff_t>(d.w),
                                    static_cast<std::ptrdiff_t>(d.w) + d.pad - static_cast<std::ptrdiff_t>(kj));
                                visit(wi, obase, xbase, static_cast<std::ptrdiff_t>(kj) - d.pad, jlo, jhi);
                            }
                        }
                    }
                }
            }
        }
    };

    CTensor out({d.b, d.o, d.h, d.w});
    for_each_tap([&](std::size_t wi, std::size_t obase, std::size_t xbase, std::ptrdiff_t shift, std::ptrdiff_t jlo,
                     std::ptrdiff_t jhi) {
        const cscalar wk = wv[wi];
        for (std::ptrdiff_t j = jlo; j < jhi; ++j) {
            out[obase + static_cast<std::size_t>(j)] += cmul(wk, xv[xbase + static_cast<std::size_t>(j + shift)]);
        }
    });
    return t.record("conv2d", std::move(out), detail::all_real(t, {x, w}), {x.id, w.id},
                    [for_each_tap](const Tape& tp, std::size_t self, std::vector<Adjoint>& adj) {
                        const Adjoint& g = adj[self];
                        const CTensor& xv = detail::in(tp, self, 0);
                        const CTensor& wv = detail::in(tp, self, 1);
                        Adjoint* gx = tp.target(detail::in_id(tp, self, 0), adj);
                        Adjoint* gw = tp.target(detail::in_id(tp, self, 1), adj);
                        for_each_tap([&](std::size_t wi, std::size_t obase, std::size_t xbase, std::ptrdiff_t shift,
                                         std::ptrdiff_t jlo, std::ptrdiff_t jhi) {
                            const cscalar wk = wv[wi];
                            cscalar acc{};
                            for (std::ptrdiff_t j = jlo; j < jhi; ++j) {
                                const std::size_t oi = obase + static_cast<std::size_t>(j);
                                const std::size_t xi = xbase + static_cast<std::size_t>(j + shift);
                                if (gx) {
                                    (*gx)[xi] += cmul_conj(wk, g[oi]);
                                }
                                acc += cmul_conj(xv[xi], g[oi]);
                            }
                            if (gw) {
                                (*gw)[wi] += acc;
                            }
                        });
                    });
}

/// 2x2 average pooling with stride 2; H and W must be even.
inline Var avg_pool2(Tape& t, Var x)
{
    const CTensor& xv = t.value(x);
    if (xv.rank() != 4 || xv.dim(2) % 2 != 0 || xv.dim(3) % 2 != 0) {
        throw ShapeError("avg_pool2: needs [B,C,H,W] with even H and W, got " + shape_string(xv.shape()));
    }
    const std::size_t planes = xv.dim(0) * xv.dim(1);
    const std::size_t h = xv.dim(2);
    const std::size_t w = xv.dim(3);
    CTensor out({xv.dim(0), xv.dim(1), h / 2, w / 2});
    for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                out[(p * (h / 2) + i / 2) * (w / 2) + j / 2] += 0.25 * xv[(p * h + i) * w + j];
            }
        }
    }
    return t.record("avg_pool2", std::move(out), t.is_real(x), {x.id},
                    [planes, h, w](const Tape& tp, std::size_t self, std::vector<Adjoint>& adj) {
                        Adjoint* gx = tp.target(detail::in_id(tp, self, 0), adj);
                        if (!gx) {
                            return;
                        }
                        for (std::size_t p = 0; p < planes; ++p) {
                            for (std::size_t i = 0; i < h; ++i) {
                                for (std::size_t j = 0; j < w; ++j) {
                                    (*gx)[(p * h + i) * w + j] += 0.25 * adj[self][(p * (h / 2) + i / 2) * (w / 2) + j / 2];
                                }
                            }
                        }
                    });
}

/// Channel encoding for real networks: [B,C,H,W] complex -> [B,2C,H,W] real,
/// real parts in channels [0,C), imaginary parts in [C,2C).
inline Var encode_reim(Tape& t, Var x)
{
    const CTensor& xv = t.value(x);
    if (xv.rank() != 4) {
        throw ShapeError("encode_reim: needs [B,C,H,W], got " + shape_string(xv.shape()));
    }
    const std::size_t b = xv.dim(0);
    const std::size_t c = xv.dim(1);
    const std::size_t plane = xv.dim(2) * xv.dim(3);
    CTensor out({b, 2 * c, xv.dim(2), xv.dim(3)});
    for (std::size_t n = 0; n < b; ++n) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t p = 0; p < plane; ++p) {
                const cscalar z = xv[(n * c + ch) * plane + p];
                out[(n * 2 * c + ch) * plane + p] = z.real();
                out[(n * 2 * c + c + ch) * plane + p] = z.imag();
            }
        }
    }
    return t.record("encode_reim", std::move(out), true, {x.id},
                    [b, c, plane](const Tape& tp, std::size_t self, std::vector<Adjoint>& adj) {
                        Adjoint* gx = tp.target(detail::in_id(tp, self, 0), adj);
                        if (!gx) {
                            return;
                        }
                        const Adjoint& g = adj[self];
                        for (std::size_t n = 0; n < b; ++n) {
                            for (std::size_t ch = 0; ch < c; ++ch) {
                                for (std::size_t p = 0; p < plane; ++p) {
                                    (*gx)[(n * c + ch) * plane + p] += cscalar{g[(n * 2 * c + ch) * plane + p].real(),
                                                                               g[(n * 2 * c + c + ch) * plane + p].real()};
                                }
                            }
                        }
                    });
}

/// Alternative real encoding: magnitudes in channels [0,C), phases in [C,2C).
inline Var encode_magphase(Tape& t, Var x)
{
    const CTensor& xv = t.value(x);
    if (xv.rank() != 4) {
        throw ShapeError("encode_magphase: needs [B,C,H,W], got " + shape_string(xv.shape()));
    }
    const std::size_t b = xv.dim(0);
    const std::size_t c = xv.dim(1);
    const std::size_t plane = xv.dim(2) * xv.dim(3);
    CTensor out({b, 2 * c, xv.dim(2), xv.dim(3)});
    for (std::size_t n = 0; n < b; ++n) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t p = 0; p < plane; ++p) {
                const cscalar z = xv[(n * c + ch) * plane + p];
                out[(n * 2 * c + ch) * plane + p] = std::abs(z);
                out[(n * 2 * c + c + ch) * plane + p] = cvak::phase(z);
            }
        }
    }
    return t.record("encode_magphase", std::move(out), true, {x.id},
                    [b, c, plane](const Tape& tp, std::size_t self, std::vector<Adjoint>& adj) {
                        Adjoint* gx = tp.target(detail::in_id(tp, self, 0), adj);
                        if (!gx) {
                            return;
                        }
                        const CTensor& xv = detail::in(tp, self, 0);
                        const Adjoint& g = adj[self];
                        for (std::size_t n = 0; n < b; ++n) {
                            for (std::size_t ch = 0; ch < c; ++ch) {
                                for (std::size_t p = 0; p < plane; ++p) {
                                    const cscalar z = xv[(n * c + ch) * plane + p];
                                    const double r2 = std::norm(z);
                                    if (r2 == 0.0) {
                                        continue;
                                    }
                                    const double r = std::sqrt(r2);
                                    const double gm = g[(n * 2 * c + ch) * plane + p].real();
                                    const double gp = g[(n * 2 * c + c + ch) * plane + p].real();
                                    (*gx)[(n * c + ch) * plane + p] += gm / r * z + gp / r2 * cscalar{-z.imag(), z.real()};
                                }
                            }
                        }
                    });
}

enum class Reduction { mean, sum };

/// Softmax cross-entropy over the real parts of logits [B,K]. Real scalar output.
inline Var softmax_cross_entropy(Tape& t, Var logits, std::span<const int> labels, Reduction reduction = Reduction::mean)
{
    const CTensor& lv = t.value(logits);
    if (lv.rank() != 2 || lv.dim(0) != labels.size()) {
        throw ShapeError("softmax_cross_entropy: logits " + shape_string(lv.shape()) + " vs "
                         + std::to_string(labels.size()) + " labels");
    }
    const std::size_t b = lv.dim(0);
    const std::size_t k = lv.dim(1);
    std::vector<double> probs(b * k);
    double total = 0.0;
    for (std::size_t n = 0; n < b; ++n) {
        const int y = labels[n];
        if (y < 0 || static_cast<std::size_t>(y) >= k) {
            throw Error("softmax_cross_entropy: label " + std::to_string(y) + " out of range [0,"
                        + std::to_string(k) + ")");
        }
        double mx = lv[n * k].real();
        for (std::size_t j = 1; j < k; ++j) {
            mx = std::max(mx, lv[n * k + j].real());
        }
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            probs[n * k + j] = std::exp(lv[n * k + j].real() - mx);
            z += probs[n * k + j];
        }
        for (std::size_t j = 0; j < k; ++j) {
            probs[n * k + j] /= z;
        }
        total += std::log(z) + mx - lv[n * k + static_cast<std::size_t>(y)].real();
    }
    const double factor = (reduction == Reduction::mean && b > 0) ? 1.0 / static_cast<double>(b) : 1.0;
    std::vector<int> y(labels.begin(), labels.end());
    return t.record("softmax_cross_entropy", CTensor::scalar(total * factor), true, {logits.id},
                    [probs = std::move(probs), y = std::move(y), k, factor](const Tape& tp, std::size_t self,
                                                                            std::vector<Adjoint>& adj) {
                        Adjoint* gl = tp.target(detail::in_id(tp, self, 0), adj);
                        if (!gl) {
                            return;
                        }
                        const double g = adj[self][0].real() * factor;
                        for (std::size_t n = 0; n < y.size(); ++n) {
                            // p_y - 1 = -sum_{j != y} p_j, without the cancellation
                            // that rounds it to zero once the softmax saturates.
                            const auto yn = static_cast<std::size_t>(y[n]);
                            double others = 0.0;
                            for (std::size_t j = 0; j < k; ++j) {
                                if (j != yn) {
                                    others += probs[n * k + j];
                                    (*gl)[n * k + j] += g * probs[n * k + j];
                                }
                            }
                            (*gl)[n * k + yn] -= g * others;
                        }
                    });
}

} // namespace ad

} // namespace cvak
