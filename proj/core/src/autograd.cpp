#include "relight/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace relight::ag {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

void require_same_tape(Var a, Var b) {
    require(a.valid() && b.valid() && a.tape == b.tape, "vars must come from one tape");
}

}  // namespace

const Tensor& Var::val() const { return tape->val(id); }

const Tensor& Var::grad() const {
    const auto& node = tape->nodes_[static_cast<std::size_t>(id)];
    return node.grad;
}

Var Tape::constant(Tensor v) {
    nodes_.push_back(Node{std::move(v), {}, false, nullptr, nullptr});
    return Var{this, size() - 1};
}

Var Tape::input(Tensor v) {
    nodes_.push_back(Node{std::move(v), {}, true, nullptr, nullptr});
    return Var{this, size() - 1};
}

Var Tape::param(const Param& p) {
    if (!grad_enabled()) return constant(p.value);
    // The trainable binding mutates p.grad in backward(); training code owns
    // its modules mutably, so shedding const here is confined to this seam.
    nodes_.push_back(Node{p.value, {}, true, const_cast<Param*>(&p), nullptr});
    return Var{this, size() - 1};
}

Var Tape::push(Tensor val, std::vector<int> parents, BackFn back) {
    bool needs = false;
    for (int pid : parents) needs = needs || nodes_[static_cast<std::size_t>(pid)].needs_grad;
    Node n;
    n.val = std::move(val);
    n.needs_grad = needs;
    if (needs) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{this, size() - 1};
}

void Tape::accum(int id, const Tensor& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) return;
    if (n.grad.empty()) n.grad = Tensor::zeros(n.val.shape());
    require(n.grad.same_shape(g), "gradient shape mismatch");
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

void Tape::backward(Var root) {
    require(root.valid() && root.tape == this, "backward: foreign var");
    require(root.val().size() == 1, "backward: root must be scalar");
    accum(root.id, Tensor::scalar(1.0));
    for (int id = root.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad || n.grad.empty()) continue;
        if (n.back) n.back(*this, n.grad);
        if (n.sink) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) n.sink->grad[i] += n.grad[i];
        }
    }
}

// ---------------------------------------------------------------- elementwise

Var add(Var a, Var b) {
    require_same_tape(a, b);
    Tensor out = relight::add(a.val(), b.val());
    const int ia = a.id, ib = b.id;
    return a.tape->push(std::move(out), {ia, ib}, [ia, ib](Tape& t, const Tensor& g) {
        t.accum(ia, g);
        t.accum(ib, g);
    });
}

Var sub(Var a, Var b) {
    require_same_tape(a, b);
    Tensor out = relight::sub(a.val(), b.val());
    const int ia = a.id, ib = b.id;
    return a.tape->push(std::move(out), {ia, ib}, [ia, ib](Tape& t, const Tensor& g) {
        t.accum(ia, g);
        Tensor gn = relight::scale(g, -1.0);
        t.accum(ib, gn);
    });
}

Var mul(Var a, Var b) {
    require_same_tape(a, b);
    Tensor out = relight::mul(a.val(), b.val());
    const int ia = a.id, ib = b.id;
    return a.tape->push(std::move(out), {ia, ib}, [ia, ib](Tape& t, const Tensor& g) {
        if (t.needs(ia)) t.accum(ia, relight::mul(g, t.val(ib)));
        if (t.needs(ib)) t.accum(ib, relight::mul(g, t.val(ia)));
    });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double c) {
    Tensor out = relight::scale(a.val(), c);
    const int ia = a.id;
    return a.tape->push(std::move(out), {ia}, [ia, c](Tape& t, const Tensor& g) {
        t.accum(ia, relight::scale(g, c));
    });
}

Var add_const(Var a, double c) {
    Tensor out = a.val();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c;
    const int ia = a.id;
    return a.tape->push(std::move(out), {ia},
                        [ia](Tape& t, const Tensor& g) { t.accum(ia, g); });
}

Var exp_of(Var a) {
    Tensor out = a.val();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
    const int ia = a.id;
    Tensor y = out;
    return a.tape->push(std::move(out), {ia}, [ia, y](Tape& t, const Tensor& g) {
        t.accum(ia, relight::mul(g, y));
    });
}

Var abs_of(Var a) {
    const Tensor& x = a.val();
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(out[i]);
    const int ia = a.id;
    return a.tape->push(std::move(out), {ia}, [ia](Tape& t, const Tensor& g) {
        const Tensor& x = t.val(ia);
        Tensor gx = g;
        for (std::size_t i = 0; i < gx.size(); ++i)
            gx[i] *= (x[i] > 0.0) ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
        t.accum(ia, gx);
    });
}

Var gelu(Var a) {
    const Tensor& x = a.val();
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = 0.5 * out[i] * (1.0 + std::erf(out[i] * kInvSqrt2));
    const int ia = a.id;
    return a.tape->push(std::move(out), {ia}, [ia](Tape& t, const Tensor& g) {
        const Tensor& x = t.val(ia);
        Tensor gx = g;
        for (std::size_t i = 0; i < gx.size(); ++i) {
            const double cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
            gx[i] *= cdf + x[i] * pdf;
        }
        t.accum(ia, gx);
    });
}

Var clamp01(Var a) {
    const Tensor& x = a.val();
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], 0.0, 1.0);
    const int ia = a.id;
    return a.tape->push(std::move(out), {ia}, [ia](Tape& t, const Tensor& g) {
        const Tensor& x = t.val(ia);
        Tensor gx = g;
        for (std::size_t i = 0; i < gx.size(); ++i)
            if (x[i] < 0.0 || x[i] > 1.0) gx[i] = 0.0;
        t.accum(ia, gx);
    });
}

Var mul_scalar(Var a, Var s) {
    require_same_tape(a, s);
    require(s.val().size() == 1, "mul_scalar: s must be scalar");
    Tensor out = relight::scale(a.val(), s.val()[0]);
    const int ia = a.id, is = s.id;
    return a.tape->push(std::move(out), {ia, is}, [ia, is](Tape& t, const Tensor& g) {
        if (t.needs(ia)) t.accum(ia, relight::scale(g, t.val(is)[0]));
        if (t.needs(is)) {
            double ds = 0.0;
            const Tensor& x = t.val(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ds += g[i] * x[i];
            t.accum(is, Tensor::scalar(ds));
        }
    });
}

Var recip(Var s) {
    require(s.val().size() == 1, "recip: scalar only");
    const double v = s.val()[0];
    const int is = s.id;
    return s.tape->push(Tensor::scalar(1.0 / v), {is}, [is](Tape& t, const Tensor& g) {
        const double v = t.val(is)[0];
        t.accum(is, Tensor::scalar(-g[0] / (v * v)));
    });
}

// ---------------------------------------------------------------- reductions

Var mean_all(Var a) {
    const Tensor& x = a.val();
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
    const double inv_n = 1.0 / static_cast<double>(x.size());
    const int ia = a.id;
    return a.tape->push(Tensor::scalar(s * inv_n), {ia},
                        [ia, inv_n](Tape& t, const Tensor& g) {
                            Tensor gx = Tensor::full(t.val(ia).shape(), g[0] * inv_n);
                            t.accum(ia, gx);
                        });
}

Var sum_all(Var a) {
    const Tensor& x = a.val();
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
    const int ia = a.id;
    return a.tape->push(Tensor::scalar(s), {ia}, [ia](Tape& t, const Tensor& g) {
        t.accum(ia, Tensor::full(t.val(ia).shape(), g[0]));
    });
}

Var channel_mean(Var a) {
    Tensor out = relight::channel_mean(a.val());
    const int ia = a.id;
    return a.tape->push(std::move(out), {ia}, [ia](Tape& t, const Tensor& g) {
        const Tensor& x = t.val(ia);
        const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
        Tensor gx = Tensor::zeros(x.shape());
        const double inv_c = 1.0 / c;
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                for (int k = 0; k < c; ++k) gx.at(i, j, k) = g.at(i, j, 0) * inv_c;
        t.accum(ia, gx);
    });
}

Var channel_bcast_mul(Var a, Var b) {
    require_same_tape(a, b);
    const Tensor& x = a.val();
    const Tensor& m = b.val();
    require(x.rank() == 3 && m.rank() == 3 && m.dim(2) == 1 && x.dim(0) == m.dim(0) &&
                x.dim(1) == m.dim(1),
            "channel_bcast_mul: want (H,W,C) by (H,W,1)");
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    Tensor out = x;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int k = 0; k < c; ++k) out.at(i, j, k) *= m.at(i, j, 0);
    const int ia = a.id, ib = b.id;
    return a.tape->push(std::move(out), {ia, ib}, [ia, ib](Tape& t, const Tensor& g) {
        const Tensor& x = t.val(ia);
        const Tensor& m = t.val(ib);
        const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
        if (t.needs(ia)) {
            Tensor gx = g;
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j)
                    for (int k = 0; k < c; ++k) gx.at(i, j, k) *= m.at(i, j, 0);
            t.accum(ia, gx);
        }
        if (t.needs(ib)) {
            Tensor gm = Tensor::zeros(m.shape());
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) {
                    double s = 0.0;
                    for (int k = 0; k < c; ++k) s += g.at(i, j, k) * x.at(i, j, k);
                    gm.at(i, j, 0) = s;
                }
            t.accum(ib, gm);
        }
    });
}

// ---------------------------------------------------------------- structure

Var concat_c(Var a, Var b) {
    require_same_tape(a, b);
    const Tensor& x = a.val();
    const Tensor& y = b.val();
    require(x.rank() == 3 && y.rank() == 3 && x.dim(0) == y.dim(0) && x.dim(1) == y.dim(1),
            "concat_c: spatial shapes must match");
    const int h = x.dim(0), w = x.dim(1), ca = x.dim(2), cb = y.dim(2);
    Tensor out = Tensor::zeros({h, w, ca + cb});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            for (int k = 0; k < ca; ++k) out.at(i, j, k) = x.at(i, j, k);
            for (int k = 0; k < cb; ++k) out.at(i, j, ca + k) = y.at(i, j, k);
        }
    const int ia = a.id, ib = b.id;
    return a.tape->push(std::move(out), {ia, ib}, [ia, ib, ca, cb](Tape& t, const Tensor& g) {
        const int h = g.dim(0), w = g.dim(1);
        if (t.needs(ia)) {
            Tensor gx = Tensor::zeros({h, w, ca});
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j)
                    for (int k = 0; k < ca; ++k) gx.at(i, j, k) = g.at(i, j, k);
            t.accum(ia, gx);
        }
        if (t.needs(ib)) {
            Tensor gy = Tensor::zeros({h, w, cb});
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j)
                    for (int k = 0; k < cb; ++k) gy.at(i, j, k) = g.at(i, j, ca + k);
            t.accum(ib, gy);
        }
    });
}

Var slice_c(Var a, int from, int count) {
    const Tensor& x = a.val();
    require(x.rank() == 3 && from >= 0 && count > 0 && from + count <= x.dim(2),
            "slice_c: channel range out of bounds");
    const int h = x.dim(0), w = x.dim(1);
    Tensor out = Tensor::zeros({h, w, count});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int k = 0; k < count; ++k) out.at(i, j, k) = x.at(i, j, from + k);
    const int ia = a.id;
    return a.tape->push(std::move(out), {ia}, [ia, from, count](Tape& t, const Tensor& g) {
        const Tensor& x = t.val(ia);
        Tensor gx = Tensor::zeros(x.shape());
        const int h = x.dim(0), w = x.dim(1);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                for (int k = 0; k < count; ++k) gx.at(i, j, from + k) = g.at(i, j, k);
        t.accum(ia, gx);
    });
}

Var tokens(Var a) {
    const Tensor& x = a.val();
    require(x.rank() == 3, "tokens: want (H,W,C)");
    Tensor out = x.reshaped({x.dim(0) * x.dim(1), x.dim(2)});
    const int ia = a.id;
    return a.tape->push(std::move(out), {ia}, [ia](Tape& t, const Tensor& g) {
        t.accum(ia, g.reshaped(t.val(ia).shape()));
    });
}

Var map_from_tokens(Var a, int h, int w) {
    const Tensor& x = a.val();
    require(x.rank() == 2 && x.dim(0) == h * w, "map_from_tokens: token count mismatch");
    Tensor out = x.reshaped({h, w, x.dim(1)});
    const int ia = a.id;
    return a.tape->push(std::move(out), {ia}, [ia](Tape& t, const Tensor& g) {
        t.accum(ia, g.reshaped(t.val(ia).shape()));
    });
}

Var fwd_diff(Var a, int axis) {
    const Tensor& x = a.val();
    require(x.rank() == 3 && (axis == 0 || axis == 1), "fwd_diff: (H,W,C), axis 0|1");
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    Tensor out = Tensor::zeros(x.shape());
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int k = 0; k < c; ++k) {
                const int ni = axis == 0 ? i + 1 : i;
                const int nj = axis == 1 ? j + 1 : j;
                if (ni < h && nj < w) out.at(i, j, k) = x.at(ni, nj, k) - x.at(i, j, k);
            }
    const int ia = a.id;
    return a.tape->push(std::move(out), {ia}, [ia, axis](Tape& t, const Tensor& g) {
        const Tensor& x = t.val(ia);
        const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
        Tensor gx = Tensor::zeros(x.shape());
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                for (int k = 0; k < c; ++k) {
                    const int ni = axis == 0 ? i + 1 : i;
                    const int nj = axis == 1 ? j + 1 : j;
                    if (ni < h && nj < w) {
                        gx.at(ni, nj, k) += g.at(i, j, k);
                        gx.at(i, j, k) -= g.at(i, j, k);
                    }
                }
        t.accum(ia, gx);
    });
}

// ---------------------------------------------------------------- linear algebra

namespace {

Tensor mm_raw(const Tensor& a, bool ta, const Tensor& b, bool tb) {
    require(a.rank() == 2 && b.rank() == 2, "matmul: 2-D only");
    const int m = ta ? a.dim(1) : a.dim(0);
    const int k = ta ? a.dim(0) : a.dim(1);
    const int kb = tb ? b.dim(1) : b.dim(0);
    const int n = tb ? b.dim(0) : b.dim(1);
    require(k == kb, "matmul: inner dims mismatch");
    Tensor out = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const double av = ta ? a.at(p, i) : a.at(i, p);
            if (av == 0.0) continue;
            for (int j = 0; j < n; ++j) out.at(i, j) += av * (tb ? b.at(j, p) : b.at(p, j));
        }
    return out;
}

}  // namespace

Var matmul(Var a, Var b, bool trans_a, bool trans_b) {
    require_same_tape(a, b);
    Tensor out = mm_raw(a.val(), trans_a, b.val(), trans_b);
    const int ia = a.id, ib = b.id;
    return a.tape->push(std::move(out), {ia, ib},
                        [ia, ib, trans_a, trans_b](Tape& t, const Tensor& g) {
                            const Tensor& av = t.val(ia);
                            const Tensor& bv = t.val(ib);
                            if (t.needs(ia)) {
                                Tensor da = trans_a ? mm_raw(bv, trans_b, g, true)
                                                    : mm_raw(g, false, bv, !trans_b);
                                t.accum(ia, da);
                            }
                            if (t.needs(ib)) {
                                Tensor db = trans_b ? mm_raw(g, true, av, trans_a)
                                                    : mm_raw(av, !trans_a, g, false);
                                t.accum(ib, db);
                            }
                        });
}

Var softmax_rows(Var a) {
    const Tensor& x = a.val();
    require(x.rank() == 2, "softmax_rows: 2-D only");
    const int m = x.dim(0), n = x.dim(1);
    Tensor out = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i) {
        double mx = x.at(i, 0);
        for (int j = 1; j < n; ++j) mx = std::max(mx, x.at(i, j));
        double s = 0.0;
        for (int j = 0; j < n; ++j) {
            const double e = std::exp(x.at(i, j) - mx);
            out.at(i, j) = e;
            s += e;
        }
        for (int j = 0; j < n; ++j) out.at(i, j) /= s;
    }
    const int ia = a.id;
    Tensor y = out;
    return a.tape->push(std::move(out), {ia}, [ia, y](Tape& t, const Tensor& g) {
        const int m = y.dim(0), n = y.dim(1);
        Tensor gx = Tensor::zeros(y.shape());
        for (int i = 0; i < m; ++i) {
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += g.at(i, j) * y.at(i, j);
            for (int j = 0; j < n; ++j) gx.at(i, j) = y.at(i, j) * (g.at(i, j) - dot);
        }
        t.accum(ia, gx);
    });
}

Var unit_columns(Var a) {
    const Tensor& x = a.val();
    require(x.rank() == 2, "unit_columns: 2-D only");
    const int m = x.dim(0), n = x.dim(1);
    Tensor out = Tensor::zeros({m, n});
    std::vector<double> norms(static_cast<std::size_t>(n), 0.0);
    for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int i = 0; i < m; ++i) s += x.at(i, j) * x.at(i, j);
        norms[static_cast<std::size_t>(j)] = std::sqrt(s + 1e-24);
        for (int i = 0; i < m; ++i) out.at(i, j) = x.at(i, j) / norms[static_cast<std::size_t>(j)];
    }
    const int ia = a.id;
    return a.tape->push(std::move(out), {ia}, [ia, norms](Tape& t, const Tensor& g) {
        const Tensor& x = t.val(ia);
        const int m = x.dim(0), n = x.dim(1);
        Tensor gx = Tensor::zeros(x.shape());
        for (int j = 0; j < n; ++j) {
            const double nj = norms[static_cast<std::size_t>(j)];
            double dot = 0.0;
            for (int i = 0; i < m; ++i) dot += x.at(i, j) * g.at(i, j);
            const double c = dot / (nj * nj * nj);
            for (int i = 0; i < m; ++i) gx.at(i, j) = g.at(i, j) / nj - x.at(i, j) * c;
        }
        t.accum(ia, gx);
    });
}

// ---------------------------------------------------------------- convolutions

Var conv2d(Var x, Var w, Var b, int stride, int pad) {
    require_same_tape(x, w);
    const Tensor& xv = x.val();
    const Tensor& wv = w.val();
    require(xv.rank() == 3 && wv.rank() == 4, "conv2d: x (H,W,Ci), w (kh,kw,Ci,Co)");
    require(xv.dim(2) == wv.dim(2), "conv2d: channel mismatch");
    const int h = xv.dim(0), wd = xv.dim(1), ci = xv.dim(2);
    const int kh = wv.dim(0), kw = wv.dim(1), co = wv.dim(3);
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (wd + 2 * pad - kw) / stride + 1;
    require(oh > 0 && ow > 0, "conv2d: output would be empty");
    Tensor out = Tensor::zeros({oh, ow, co});
    if (b.valid()) {
        const Tensor& bv = b.val();
        require(bv.size() == static_cast<std::size_t>(co), "conv2d: bias size mismatch");
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j)
                for (int c = 0; c < co; ++c) out.at(i, j, c) = bv[static_cast<std::size_t>(c)];
    }
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
            for (int ky = 0; ky < kh; ++ky) {
                const int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    const int ix = ox * stride - pad + kx;
                    if (ix < 0 || ix >= wd) continue;
                    for (int c = 0; c < ci; ++c) {
                        const double xv_ = xv.at(iy, ix, c);
                        if (xv_ == 0.0) continue;
                        for (int o = 0; o < co; ++o)
                            out.at(oy, ox, o) += xv_ * wv.at(ky, kx, c, o);
                    }
                }
            }
    const int ix_ = x.id, iw = w.id, ib = b.valid() ? b.id : -1;
    std::vector<int> parents{ix_, iw};
    if (ib >= 0) parents.push_back(ib);
    return x.tape->push(std::move(out), parents,
                        [ix_, iw, ib, stride, pad](Tape& t, const Tensor& g) {
        const Tensor& xv = t.val(ix_);
        const Tensor& wv = t.val(iw);
        const int h = xv.dim(0), wd = xv.dim(1), ci = xv.dim(2);
        const int kh = wv.dim(0), kw = wv.dim(1), co = wv.dim(3);
        const int oh = g.dim(0), ow = g.dim(1);
        const bool need_x = t.needs(ix_);
        const bool need_w = t.needs(iw);
        Tensor gx = need_x ? Tensor::zeros(xv.shape()) : Tensor();
        Tensor gw = need_w ? Tensor::zeros(wv.shape()) : Tensor();
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ixp = ox * stride - pad + kx;
                        if (ixp < 0 || ixp >= wd) continue;
                        for (int c = 0; c < ci; ++c) {
                            double acc = 0.0;
                            for (int o = 0; o < co; ++o) {
                                const double gv = g.at(oy, ox, o);
                                if (need_w) gw.at(ky, kx, c, o) += xv.at(iy, ixp, c) * gv;
                                acc += wv.at(ky, kx, c, o) * gv;
                            }
                            if (need_x) gx.at(iy, ixp, c) += acc;
                        }
                    }
                }
        if (need_x) t.accum(ix_, gx);
        if (need_w) t.accum(iw, gw);
        if (ib >= 0 && t.needs(ib)) {
            Tensor gb = Tensor::zeros(t.val(ib).shape());
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox)
                    for (int o = 0; o < co; ++o) gb[static_cast<std::size_t>(o)] += g.at(oy, ox, o);
            t.accum(ib, gb);
        }
    });
}

Var conv2d_transpose(Var x, Var w, Var b, int stride) {
    require_same_tape(x, w);
    const Tensor& xv = x.val();
    const Tensor& wv = w.val();
    require(xv.rank() == 3 && wv.rank() == 4, "conv2d_transpose: x (H,W,Ci), w (kh,kw,Ci,Co)");
    require(xv.dim(2) == wv.dim(2), "conv2d_transpose: channel mismatch");
    const int h = xv.dim(0), wd = xv.dim(1), ci = xv.dim(2);
    const int kh = wv.dim(0), kw = wv.dim(1), co = wv.dim(3);
    const int oh = (h - 1) * stride + kh;
    const int ow = (wd - 1) * stride + kw;
    Tensor out = Tensor::zeros({oh, ow, co});
    if (b.valid()) {
        const Tensor& bv = b.val();
        require(bv.size() == static_cast<std::size_t>(co), "conv2d_transpose: bias size mismatch");
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j)
                for (int c = 0; c < co; ++c) out.at(i, j, c) = bv[static_cast<std::size_t>(c)];
    }
    for (int iy = 0; iy < h; ++iy)
        for (int ix = 0; ix < wd; ++ix)
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx)
                    for (int c = 0; c < ci; ++c) {
                        const double xv_ = xv.at(iy, ix, c);
                        if (xv_ == 0.0) continue;
                        for (int o = 0; o < co; ++o)
                            out.at(iy * stride + ky, ix * stride + kx, o) +=
                                xv_ * wv.at(ky, kx, c, o);
                    }
    const int ix_ = x.id, iw = w.id, ib = b.valid() ? b.id : -1;
    std::vector<int> parents{ix_, iw};
    if (ib >= 0) parents.push_back(ib);
    return x.tape->push(std::move(out), parents, [ix_, iw, ib, stride](Tape& t, const Tensor& g) {
        const Tensor& xv = t.val(ix_);
        const Tensor& wv = t.val(iw);
        const int h = xv.dim(0), wd = xv.dim(1), ci = xv.dim(2);
        const int kh = wv.dim(0), kw = wv.dim(1), co = wv.dim(3);
        const bool need_x = t.needs(ix_);
        const bool need_w = t.needs(iw);
        Tensor gx = need_x ? Tensor::zeros(xv.shape()) : Tensor();
        Tensor gw = need_w ? Tensor::zeros(wv.shape()) : Tensor();
        for (int iy = 0; iy < h; ++iy)
            for (int ix = 0; ix < wd; ++ix)
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx)
                        for (int c = 0; c < ci; ++c) {
                            double acc = 0.0;
                            for (int o = 0; o < co; ++o) {
                                const double gv = g.at(iy * stride + ky, ix * stride + kx, o);
                                if (need_w) gw.at(ky, kx, c, o) += xv.at(iy, ix, c) * gv;
                                acc += wv.at(ky, kx, c, o) * gv;
                            }
                            if (need_x) gx.at(iy, ix, c) += acc;
                        }
        if (need_x) t.accum(ix_, gx);
        if (need_w) t.accum(iw, gw);
        if (ib >= 0 && t.needs(ib)) {
            Tensor gb = Tensor::zeros(t.val(ib).shape());
            const int oh = g.dim(0), ow = g.dim(1);
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j)
                    for (int o = 0; o < co; ++o) gb[static_cast<std::size_t>(o)] += g.at(i, j, o);
            t.accum(ib, gb);
        }
    });
}

Var dwconv3x3(Var x, Var w, Var b) {
    require_same_tape(x, w);
    const Tensor& xv = x.val();
    const Tensor& wv = w.val();
    require(xv.rank() == 3 && wv.rank() == 3 && wv.dim(0) == 3 && wv.dim(1) == 3 &&
                wv.dim(2) == xv.dim(2),
            "dwconv3x3: x (H,W,C), w (3,3,C)");
    const int h = xv.dim(0), wd = xv.dim(1), c = xv.dim(2);
    Tensor out = Tensor::zeros(xv.shape());
    if (b.valid()) {
        const Tensor& bv = b.val();
        require(bv.size() == static_cast<std::size_t>(c), "dwconv3x3: bias size mismatch");
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < wd; ++j)
                for (int k = 0; k < c; ++k) out.at(i, j, k) = bv[static_cast<std::size_t>(k)];
    }
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < wd; ++j)
            for (int ky = 0; ky < 3; ++ky) {
                const int iy = i + ky - 1;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int ix = j + kx - 1;
                    if (ix < 0 || ix >= wd) continue;
                    for (int k = 0; k < c; ++k)
                        out.at(i, j, k) += xv.at(iy, ix, k) * wv.at(ky, kx, k);
                }
            }
    const int ix_ = x.id, iw = w.id, ib = b.valid() ? b.id : -1;
    std::vector<int> parents{ix_, iw};
    if (ib >= 0) parents.push_back(ib);
    return x.tape->push(std::move(out), parents, [ix_, iw, ib](Tape& t, const Tensor& g) {
        const Tensor& xv = t.val(ix_);
        const Tensor& wv = t.val(iw);
        const int h = xv.dim(0), wd = xv.dim(1), c = xv.dim(2);
        const bool need_x = t.needs(ix_);
        const bool need_w = t.needs(iw);
        Tensor gx = need_x ? Tensor::zeros(xv.shape()) : Tensor();
        Tensor gw = need_w ? Tensor::zeros(wv.shape()) : Tensor();
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < wd; ++j)
                for (int ky = 0; ky < 3; ++ky) {
                    const int iy = i + ky - 1;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int ix = j + kx - 1;
                        if (ix < 0 || ix >= wd) continue;
                        for (int k = 0; k < c; ++k) {
                            const double gv = g.at(i, j, k);
                            if (need_w) gw.at(ky, kx, k) += xv.at(iy, ix, k) * gv;
                            if (need_x) gx.at(iy, ix, k) += wv.at(ky, kx, k) * gv;
                        }
                    }
                }
        if (need_x) t.accum(ix_, gx);
        if (need_w) t.accum(iw, gw);
        if (ib >= 0 && t.needs(ib)) {
            Tensor gb = Tensor::zeros(t.val(ib).shape());
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < wd; ++j)
                    for (int k = 0; k < c; ++k) gb[static_cast<std::size_t>(k)] += g.at(i, j, k);
            t.accum(ib, gb);
        }
    });
}

}  // namespace relight::ag
