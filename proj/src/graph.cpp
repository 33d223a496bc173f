#include "cycond/graph.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace cycond::ad {

Exec::Exec(const Graph& g) { sync(g); }

void Exec::sync(const Graph& g) {
    val = g.base_values();
    adj.assign(val.size(), 0.0);
}

Graph::Graph() {
    zero_ = constant(0.0);
    one_ = constant(1.0);
}

Var Graph::push0(Op o) {
    op_.push_back(o);
    arg_off_.push_back(static_cast<uint32_t>(args_.size()));
    arg_cnt_.push_back(0);
    base_val_.push_back(0.0);
    return Var{static_cast<uint32_t>(op_.size() - 1)};
}

Var Graph::push1(Op o, Var a) {
    assert(a.valid() && a.id < op_.size());
    op_.push_back(o);
    arg_off_.push_back(static_cast<uint32_t>(args_.size()));
    arg_cnt_.push_back(1);
    args_.push_back(a.id);
    base_val_.push_back(0.0);
    return Var{static_cast<uint32_t>(op_.size() - 1)};
}

Var Graph::push2(Op o, Var a, Var b) {
    assert(a.valid() && b.valid() && a.id < op_.size() && b.id < op_.size());
    op_.push_back(o);
    arg_off_.push_back(static_cast<uint32_t>(args_.size()));
    arg_cnt_.push_back(2);
    args_.push_back(a.id);
    args_.push_back(b.id);
    base_val_.push_back(0.0);
    return Var{static_cast<uint32_t>(op_.size() - 1)};
}

Var Graph::pushn(Op o, std::span<const uint32_t> as) {
    op_.push_back(o);
    arg_off_.push_back(static_cast<uint32_t>(args_.size()));
    arg_cnt_.push_back(static_cast<uint32_t>(as.size()));
    args_.insert(args_.end(), as.begin(), as.end());
    base_val_.push_back(0.0);
    return Var{static_cast<uint32_t>(op_.size() - 1)};
}

Var Graph::constant(double c) {
    Var v = push0(Op::Const);
    base_val_[v.id] = c;
    return v;
}

Var Graph::input(double initial) {
    Var v = push0(Op::Input);
    base_val_[v.id] = initial;
    return v;
}

std::vector<Var> Graph::inputs(size_t n, double initial) {
    std::vector<Var> vs(n);
    for (auto& v : vs) v = input(initial);
    return vs;
}

Var Graph::affine(Var bias, std::span<const Var> w, std::span<const Var> u) {
    assert(w.size() == u.size());
    if (w.empty()) return bias;
    std::vector<uint32_t> as;
    as.reserve(1 + 2 * w.size());
    as.push_back(bias.id);
    for (size_t i = 0; i < w.size(); ++i) {
        as.push_back(w[i].id);
        as.push_back(u[i].id);
    }
    return pushn(Op::Affine, as);
}

Var Graph::dot(std::span<const Var> a, std::span<const Var> b) {
    assert(a.size() == b.size() && !a.empty());
    std::vector<uint32_t> as;
    as.reserve(2 * a.size());
    for (size_t i = 0; i < a.size(); ++i) {
        as.push_back(a[i].id);
        as.push_back(b[i].id);
    }
    return pushn(Op::Dot, as);
}

Var Graph::sum(std::span<const Var> xs) {
    if (xs.empty()) return zero_;
    if (xs.size() == 1) return xs[0];
    std::vector<uint32_t> as;
    as.reserve(xs.size());
    for (Var v : xs) as.push_back(v.id);
    return pushn(Op::Sum, as);
}

Var Graph::logsumexp(std::span<const Var> xs) {
    assert(!xs.empty());
    std::vector<uint32_t> as;
    as.reserve(xs.size());
    for (Var v : xs) as.push_back(v.id);
    return pushn(Op::LogSumExp, as);
}

Var Graph::softplus(Var x) {
    const Var xs[2] = {zero_, x};
    return logsumexp(xs);
}

// ---- numeric forward -------------------------------------------------------

void Graph::forward(Exec& ex) const {
    const size_t n = op_.size();
    if (ex.val.size() != n) ex.sync(*this);
    double* v = ex.val.data();
    const uint32_t* args = args_.data();
    for (size_t i = 0; i < n; ++i) {
        const uint32_t* a = args + arg_off_[i];
        switch (op_[i]) {
        case Op::Const:
        case Op::Input: break;
        case Op::Add: v[i] = v[a[0]] + v[a[1]]; break;
        case Op::Sub: v[i] = v[a[0]] - v[a[1]]; break;
        case Op::Mul: v[i] = v[a[0]] * v[a[1]]; break;
        case Op::Div: v[i] = v[a[0]] / v[a[1]]; break;
        case Op::Neg: v[i] = -v[a[0]]; break;
        case Op::Exp: v[i] = std::exp(v[a[0]]); break;
        case Op::Log: v[i] = std::log(v[a[0]]); break;
        case Op::Log1p: v[i] = std::log1p(v[a[0]]); break;
        case Op::Tanh: v[i] = std::tanh(v[a[0]]); break;
        case Op::Sigmoid: v[i] = 1.0 / (1.0 + std::exp(-v[a[0]])); break;
        case Op::Affine: {
            double acc = v[a[0]];
            const uint32_t m = arg_cnt_[i];
            for (uint32_t k = 1; k + 1 < m + 1; k += 2) acc += v[a[k]] * v[a[k + 1]];
            v[i] = acc;
            break;
        }
        case Op::Dot: {
            double acc = 0.0;
            const uint32_t m = arg_cnt_[i];
            for (uint32_t k = 0; k < m; k += 2) acc += v[a[k]] * v[a[k + 1]];
            v[i] = acc;
            break;
        }
        case Op::Sum: {
            double acc = 0.0;
            const uint32_t m = arg_cnt_[i];
            for (uint32_t k = 0; k < m; ++k) acc += v[a[k]];
            v[i] = acc;
            break;
        }
        case Op::LogSumExp: {
            const uint32_t m = arg_cnt_[i];
            double hi = v[a[0]];
            for (uint32_t k = 1; k < m; ++k) hi = std::max(hi, v[a[k]]);
            double acc = 0.0;
            for (uint32_t k = 0; k < m; ++k) acc += std::exp(v[a[k]] - hi);
            v[i] = hi + std::log(acc);
            break;
        }
        }
    }
}

// ---- numeric backward ------------------------------------------------------

void Graph::backward(Exec& ex, std::span<const std::pair<Var, double>> seeds) const {
    const size_t n = op_.size();
    if (ex.adj.size() != n) ex.adj.assign(n, 0.0);
    else std::fill(ex.adj.begin(), ex.adj.end(), 0.0);
    for (const auto& [v, w] : seeds) ex.adj[v.id] += w;

    double* adj = ex.adj.data();
    const double* v = ex.val.data();
    const uint32_t* args = args_.data();
    for (size_t ii = n; ii-- > 0;) {
        const double g = adj[ii];
        if (g == 0.0) continue;
        const uint32_t* a = args + arg_off_[ii];
        switch (op_[ii]) {
        case Op::Const:
        case Op::Input: break;
        case Op::Add:
            adj[a[0]] += g;
            adj[a[1]] += g;
            break;
        case Op::Sub:
            adj[a[0]] += g;
            adj[a[1]] -= g;
            break;
        case Op::Mul:
            adj[a[0]] += g * v[a[1]];
            adj[a[1]] += g * v[a[0]];
            break;
        case Op::Div:
            adj[a[0]] += g / v[a[1]];
            adj[a[1]] -= g * v[ii] / v[a[1]];
            break;
        case Op::Neg: adj[a[0]] -= g; break;
        case Op::Exp: adj[a[0]] += g * v[ii]; break;
        case Op::Log: adj[a[0]] += g / v[a[0]]; break;
        case Op::Log1p: adj[a[0]] += g / (1.0 + v[a[0]]); break;
        case Op::Tanh: adj[a[0]] += g * (1.0 - v[ii] * v[ii]); break;
        case Op::Sigmoid: adj[a[0]] += g * v[ii] * (1.0 - v[ii]); break;
        case Op::Affine: {
            adj[a[0]] += g;
            const uint32_t m = arg_cnt_[ii];
            for (uint32_t k = 1; k + 1 < m + 1; k += 2) {
                adj[a[k]] += g * v[a[k + 1]];
                adj[a[k + 1]] += g * v[a[k]];
            }
            break;
        }
        case Op::Dot: {
            const uint32_t m = arg_cnt_[ii];
            for (uint32_t k = 0; k < m; k += 2) {
                adj[a[k]] += g * v[a[k + 1]];
                adj[a[k + 1]] += g * v[a[k]];
            }
            break;
        }
        case Op::Sum: {
            const uint32_t m = arg_cnt_[ii];
            for (uint32_t k = 0; k < m; ++k) adj[a[k]] += g;
            break;
        }
        case Op::LogSumExp: {
            const uint32_t m = arg_cnt_[ii];
            for (uint32_t k = 0; k < m; ++k)
                adj[a[k]] += g * std::exp(v[a[k]] - v[ii]);
            break;
        }
        }
    }
}

// ---- symbolic reverse sweep ------------------------------------------------

std::vector<Var> Graph::gradient(Var f, std::span<const Var> wrt) {
    assert(f.valid() && f.id < op_.size());
    const uint32_t n0 = f.id + 1;

    // nodes whose value depends on some wrt var
    std::vector<uint8_t> dep(n0, 0);
    for (Var w : wrt) {
        assert(w.valid() && w.id < op_.size());
        if (w.id < n0) dep[w.id] = 1;
    }
    for (uint32_t i = 0; i < n0; ++i) {
        if (dep[i]) continue;
        auto ps = parents(i);
        for (uint32_t p : ps)
            if (dep[p]) {
                dep[i] = 1;
                break;
            }
    }
    // nodes on a dep path that actually reaches f
    std::vector<uint8_t> need(n0, 0);
    need[f.id] = dep[f.id];
    for (uint32_t i = n0; i-- > 0;) {
        if (!need[i]) continue;
        for (uint32_t p : parents(i))
            if (dep[p]) need[p] = 1;
    }

    std::vector<std::vector<Var>> terms(n0);
    auto add_term = [&](uint32_t node, Var t) {
        if (node < n0 && need[node] && dep[node]) terms[node].push_back(t);
    };
    auto is_live = [&](uint32_t node) {
        return node < n0 && need[node] && dep[node];
    };

    std::vector<uint32_t> pa; // parent ids, copied out before emitting nodes
    for (uint32_t i = n0; i-- > 0;) {
        if (!need[i] || !dep[i]) continue;
        Var acc;
        if (i == f.id) {
            acc = one_;
        } else {
            if (terms[i].empty()) continue;
            acc = terms[i].size() == 1 ? terms[i][0]
                                       : sum(std::span<const Var>(terms[i]));
        }
        terms[i].clear();
        terms[i].push_back(acc); // keep finalized adjoint for the result scan

        const Var A = acc;
        // emitting nodes below reallocates args_, so work from a copy
        auto ps = parents(i);
        pa.assign(ps.begin(), ps.end());
        const uint32_t* a = pa.data();
        const uint32_t m = arg_cnt_[i];
        switch (op_[i]) {
        case Op::Const:
        case Op::Input: break;
        case Op::Add:
            add_term(a[0], A);
            add_term(a[1], A);
            break;
        case Op::Sub:
            add_term(a[0], A);
            if (is_live(a[1])) add_term(a[1], neg(A));
            break;
        case Op::Mul:
            if (is_live(a[0])) add_term(a[0], mul(A, Var{a[1]}));
            if (is_live(a[1])) add_term(a[1], mul(A, Var{a[0]}));
            break;
        case Op::Div: {
            if (is_live(a[0])) add_term(a[0], div(A, Var{a[1]}));
            if (is_live(a[1])) {
                Var q = div(Var{i}, Var{a[1]}); // result / denominator
                add_term(a[1], neg(mul(A, q)));
            }
            break;
        }
        case Op::Neg: add_term(a[0], neg(A)); break;
        case Op::Exp: add_term(a[0], mul(A, Var{i})); break;
        case Op::Log: add_term(a[0], div(A, Var{a[0]})); break;
        case Op::Log1p: add_term(a[0], div(A, add(one_, Var{a[0]}))); break;
        case Op::Tanh: {
            Var t = Var{i};
            add_term(a[0], mul(A, sub(one_, mul(t, t))));
            break;
        }
        case Op::Sigmoid: {
            Var s = Var{i};
            add_term(a[0], mul(A, mul(s, sub(one_, s))));
            break;
        }
        case Op::Affine: {
            add_term(a[0], A);
            for (uint32_t k = 1; k < m; k += 2) {
                if (is_live(a[k])) add_term(a[k], mul(A, Var{a[k + 1]}));
                if (is_live(a[k + 1])) add_term(a[k + 1], mul(A, Var{a[k]}));
            }
            break;
        }
        case Op::Dot: {
            for (uint32_t k = 0; k < m; k += 2) {
                if (is_live(a[k])) add_term(a[k], mul(A, Var{a[k + 1]}));
                if (is_live(a[k + 1])) add_term(a[k + 1], mul(A, Var{a[k]}));
            }
            break;
        }
        case Op::Sum:
            for (uint32_t k = 0; k < m; ++k) add_term(a[k], A);
            break;
        case Op::LogSumExp: {
            for (uint32_t k = 0; k < m; ++k) {
                if (!is_live(a[k])) continue;
                Var smx = exp(sub(Var{a[k]}, Var{i}));
                add_term(a[k], mul(A, smx));
            }
            break;
        }
        }
    }

    std::vector<Var> out;
    out.reserve(wrt.size());
    for (Var w : wrt) {
        if (w.id == f.id) {
            out.push_back(one_);
        } else if (w.id < n0 && need[w.id] && !terms[w.id].empty()) {
            out.push_back(terms[w.id][0]);
        } else {
            out.push_back(zero_);
        }
    }
    return out;
}

// ---- symbolic forward (tangent) sweep --------------------------------------

std::vector<Var> Graph::jvp(std::span<const Var> outputs,
                            std::span<const std::pair<Var, Var>> seeds) {
    uint32_t n0 = 0;
    for (Var o : outputs) n0 = std::max(n0, o.id + 1);

    std::vector<uint8_t> dep(n0, 0);
    std::vector<Var> tan(n0, Var{});
    for (const auto& [v, t] : seeds) {
        if (v.id < n0) {
            dep[v.id] = 1;
            tan[v.id] = t;
        }
    }
    for (uint32_t i = 0; i < n0; ++i) {
        if (dep[i]) continue;
        for (uint32_t p : parents(i))
            if (dep[p]) {
                dep[i] = 1;
                break;
            }
    }
    // restrict to ancestors of the requested outputs
    std::vector<uint8_t> need(n0, 0);
    for (Var o : outputs)
        if (dep[o.id]) need[o.id] = 1;
    for (uint32_t i = n0; i-- > 0;) {
        if (!need[i]) continue;
        for (uint32_t p : parents(i))
            if (dep[p]) need[p] = 1;
    }

    auto t_of = [&](uint32_t p) -> Var {
        return (p < n0 && dep[p]) ? tan[p] : Var{};
    };

    std::vector<uint32_t> pa; // parent ids, copied out before emitting nodes
    for (uint32_t i = 0; i < n0; ++i) {
        if (!need[i] || !dep[i] || tan[i].valid()) continue;
        auto ps = parents(i);
        pa.assign(ps.begin(), ps.end());
        const uint32_t* a = pa.data();
        const uint32_t m = arg_cnt_[i];
        Var t;
        switch (op_[i]) {
        case Op::Const:
        case Op::Input: break; // unseeded leaves have zero tangent
        case Op::Add: {
            Var da = t_of(a[0]), db = t_of(a[1]);
            t = da.valid() ? (db.valid() ? add(da, db) : da) : db;
            break;
        }
        case Op::Sub: {
            Var da = t_of(a[0]), db = t_of(a[1]);
            if (da.valid() && db.valid()) t = sub(da, db);
            else if (da.valid()) t = da;
            else t = neg(db);
            break;
        }
        case Op::Mul: {
            Var da = t_of(a[0]), db = t_of(a[1]);
            std::vector<Var> w, u;
            if (da.valid()) { w.push_back(Var{a[1]}); u.push_back(da); }
            if (db.valid()) { w.push_back(Var{a[0]}); u.push_back(db); }
            t = w.size() == 1 ? mul(w[0], u[0]) : affine(zero_, w, u);
            break;
        }
        case Op::Div: {
            Var da = t_of(a[0]), db = t_of(a[1]);
            Var num;
            if (da.valid() && db.valid()) num = sub(da, mul(Var{i}, db));
            else if (da.valid()) num = da;
            else num = neg(mul(Var{i}, db));
            t = div(num, Var{a[1]});
            break;
        }
        case Op::Neg: t = neg(t_of(a[0])); break;
        case Op::Exp: t = mul(Var{i}, t_of(a[0])); break;
        case Op::Log: t = div(t_of(a[0]), Var{a[0]}); break;
        case Op::Log1p: t = div(t_of(a[0]), add(one_, Var{a[0]})); break;
        case Op::Tanh: {
            Var tt = Var{i};
            t = mul(sub(one_, mul(tt, tt)), t_of(a[0]));
            break;
        }
        case Op::Sigmoid: {
            Var s = Var{i};
            t = mul(mul(s, sub(one_, s)), t_of(a[0]));
            break;
        }
        case Op::Affine:
        case Op::Dot: {
            const bool has_bias = op_[i] == Op::Affine;
            Var bias_t = has_bias ? t_of(a[0]) : Var{};
            std::vector<Var> w, u;
            for (uint32_t k = has_bias ? 1 : 0; k + 1 < m; k += 2) {
                Var dw = t_of(a[k]), du = t_of(a[k + 1]);
                if (du.valid()) { w.push_back(Var{a[k]}); u.push_back(du); }
                if (dw.valid()) { w.push_back(Var{a[k + 1]}); u.push_back(dw); }
            }
            Var bias = bias_t.valid() ? bias_t : zero_;
            if (w.empty()) t = bias;
            else t = affine(bias, w, u);
            break;
        }
        case Op::Sum: {
            std::vector<Var> ts;
            for (uint32_t k = 0; k < m; ++k) {
                Var dk = t_of(a[k]);
                if (dk.valid()) ts.push_back(dk);
            }
            t = sum(ts);
            break;
        }
        case Op::LogSumExp: {
            std::vector<Var> w, u;
            for (uint32_t k = 0; k < m; ++k) {
                Var dk = t_of(a[k]);
                if (!dk.valid()) continue;
                w.push_back(exp(sub(Var{a[k]}, Var{i})));
                u.push_back(dk);
            }
            t = w.empty() ? zero_ : affine(zero_, w, u);
            break;
        }
        }
        tan[i] = t;
    }

    std::vector<Var> out;
    out.reserve(outputs.size());
    for (Var o : outputs) {
        Var t = (o.id < n0 && dep[o.id] && tan[o.id].valid()) ? tan[o.id] : zero_;
        out.push_back(t);
    }
    return out;
}

// ---- cross-derivative programs ---------------------------------------------

CrossNormProgram make_cross_norm(Graph& g, Var r, std::span<const Var> x,
                                 std::span<const Var> z) {
    CrossNormProgram p;
    p.g = &g;
    p.eta = g.inputs(x.size());

    std::vector<Var> gx = g.gradient(r, x);
    Var s = g.dot(p.eta, gx);
    std::vector<Var> gz = g.gradient(s, z);
    Var acc = g.zero();
    for (Var c : gz) acc = g.add(acc, g.mul(c, c));
    p.sq_norm = acc;
    return p;
}

double eval_cross_norm(const CrossNormProgram& p, Exec& ex,
                       std::span<const double> eta) {
    ex.bind(p.eta, eta);
    p.g->forward(ex);
    return ex.value(p.sq_norm);
}

double exact_cross_frobenius(const CrossNormProgram& p, Exec& ex) {
    const size_t d = p.eta.size();
    std::vector<double> eta(d, 0.0);
    double total = 0.0;
    for (size_t i = 0; i < d; ++i) {
        eta.assign(d, 0.0);
        eta[i] = 1.0;
        total += eval_cross_norm(p, ex, eta);
    }
    return total;
}

double hutchinson_cross_norm(const CrossNormProgram& p, Exec& ex, int n_probes,
                             ProbeDist dist, Rng& rng) {
    const size_t d = p.eta.size();
    std::vector<double> eta(d);
    double acc = 0.0;
    for (int k = 0; k < n_probes; ++k) {
        for (size_t i = 0; i < d; ++i)
            eta[i] = dist == ProbeDist::Rademacher ? rademacher(rng) : gauss(rng);
        acc += eval_cross_norm(p, ex, eta);
    }
    return acc / n_probes;
}

} // namespace cycond::ad
