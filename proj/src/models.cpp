#include "cycond/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cycond/linalg.hpp"

namespace cycond::models {

namespace {

constexpr double kTwoPi = 6.283185307179586476925287;

// softplus(bias) = 1, so freshly initialized base scales start at unity
const double kUnitSigmaBias = std::log(std::exp(1.0) - 1.0);

// head-vector offsets within the flow-parameter block
struct HeadLayout {
    int d, H, tri, per;
    int sig0, layer0;
    explicit HeadLayout(const FlowSpec& s)
        : d(s.d_z), H(s.n_reflections), tri(s.tri()), per(s.layer_head_dim()),
          sig0(s.d_z), layer0(2 * s.d_z) {}
    int mu() const { return 0; }
    int v(int t, int r) const { return layer0 + t * per + r * d; }
    int rdiag(int t) const { return layer0 + t * per + H * d; }
    int rup(int t) const { return rdiag(t) + d; }
    int rtdiag(int t) const { return rup(t) + tri; }
    int rtup(int t) const { return rtdiag(t) + d; }
    int off(int t) const { return rtup(t) + tri; }
};

// row-major index of the strictly-upper entry (i, j), i < j
int upper_index(int d, int i, int j) {
    return i * d - i * (i + 1) / 2 + (j - i - 1);
}

} // namespace

// ---- MLP --------------------------------------------------------------------

int MlpSpec::param_count() const {
    int n = 0;
    for (size_t l = 0; l + 1 < widths.size(); ++l)
        n += widths[l + 1] * (widths[l] + 1);
    return n;
}

bool MlpSpec::valid() const {
    if (widths.size() < 2 || acts.size() + 1 != widths.size()) return false;
    return std::all_of(widths.begin(), widths.end(),
                       [](int w) { return w >= 1; });
}

MlpSpec make_mlp(std::vector<int> widths, Act hidden, Act out) {
    MlpSpec s;
    s.acts.assign(widths.size() >= 2 ? widths.size() - 1 : 0, hidden);
    if (!s.acts.empty()) s.acts.back() = out;
    s.widths = std::move(widths);
    return s;
}

std::vector<double> glorot_init(const MlpSpec& spec, Rng& rng, double scale) {
    if (!spec.valid()) throw std::invalid_argument("mlp spec is malformed");
    std::vector<double> p(spec.param_count(), 0.0);
    size_t off = 0;
    for (int l = 0; l < spec.n_layers(); ++l) {
        const int ni = spec.widths[l], no = spec.widths[l + 1];
        const double lim = scale * std::sqrt(6.0 / (ni + no));
        for (int k = 0; k < ni * no; ++k) p[off + k] = uniform(rng, -lim, lim);
        off += size_t(ni) * no + no; // biases stay zero
    }
    return p;
}

std::vector<Var> mlp_apply(Graph& g, const MlpSpec& spec,
                           std::span<const Var> in,
                           std::span<const Var> params) {
    if (!spec.valid()) throw std::invalid_argument("mlp spec is malformed");
    if (int(in.size()) != spec.d_in())
        throw std::invalid_argument("mlp input size mismatch");
    if (int(params.size()) != spec.param_count())
        throw std::invalid_argument("mlp parameter size mismatch");

    std::vector<Var> cur(in.begin(), in.end());
    size_t off = 0;
    for (int l = 0; l < spec.n_layers(); ++l) {
        const int ni = spec.widths[l], no = spec.widths[l + 1];
        std::vector<Var> next(no);
        for (int o = 0; o < no; ++o) {
            const auto w = params.subspan(off + size_t(o) * ni, ni);
            const Var bias = params[off + size_t(ni) * no + o];
            Var a = g.affine(bias, w, cur);
            switch (spec.acts[l]) {
            case Act::Identity: break;
            case Act::Tanh: a = g.tanh(a); break;
            case Act::Sigmoid: a = g.sigmoid(a); break;
            }
            next[o] = a;
        }
        off += size_t(ni) * no + no;
        cur = std::move(next);
    }
    return cur;
}

std::vector<ParamBlock> mlp_param_blocks(const MlpSpec& spec,
                                         const std::string& prefix) {
    std::vector<ParamBlock> out;
    size_t off = 0;
    for (int l = 0; l < spec.n_layers(); ++l) {
        const int ni = spec.widths[l], no = spec.widths[l + 1];
        out.push_back({prefix + ".w" + std::to_string(l), {no, ni}, off,
                       size_t(ni) * no});
        off += size_t(ni) * no;
        out.push_back({prefix + ".b" + std::to_string(l), {no}, off,
                       size_t(no)});
        off += no;
    }
    return out;
}

// ---- Gaussian decoder --------------------------------------------------------

GaussNodes gauss_apply(Graph& g, const GaussianConditional& spec,
                       std::span<const Var> params, std::span<const Var> x,
                       std::span<const Var> z) {
    if (spec.sigma2 <= 0.0)
        throw std::invalid_argument("decoder variance must be positive");
    GaussNodes out;
    out.mean = mlp_apply(g, spec.mean_net, z, params);
    if (x.size() != out.mean.size())
        throw std::invalid_argument("decoder output size mismatch");

    const int d = int(x.size());
    std::vector<Var> sq(d);
    for (int i = 0; i < d; ++i) sq[i] = g.square(g.sub(x[i], out.mean[i]));
    const Var s = g.sum(sq);
    const Var w[1] = {g.constant(-0.5 / spec.sigma2)};
    const Var u[1] = {s};
    out.log_density = g.affine(
        g.constant(-0.5 * d * std::log(kTwoPi * spec.sigma2)), w, u);
    return out;
}

// ---- flow encoder ------------------------------------------------------------

bool FlowSpec::valid() const {
    return cond_net.valid() && d_z >= 1 && n_layers >= 0 &&
           n_reflections >= 1 && n_reflections <= d_z;
}

std::vector<double> flow_init(const FlowSpec& spec, Rng& rng) {
    if (!spec.valid()) throw std::invalid_argument("flow spec is malformed");
    std::vector<double> p(spec.param_count(), 0.0);

    const auto cnd = glorot_init(spec.cond_net, rng);
    std::copy(cnd.begin(), cnd.end(), p.begin());

    const int feat = spec.feat_dim(), hd = spec.head_dim(), d = spec.d_z;
    const size_t w0 = cnd.size();
    const size_t b0 = w0 + size_t(hd) * feat;
    const double lim = 0.01 * std::sqrt(6.0 / (feat + hd));
    for (size_t k = 0; k < size_t(hd) * feat; ++k)
        p[w0 + k] = uniform(rng, -lim, lim);

    const HeadLayout L(spec);
    for (int i = 0; i < d; ++i) p[b0 + L.sig0 + i] = kUnitSigmaBias;
    std::vector<double> v(d);
    for (int t = 0; t < spec.n_layers; ++t)
        for (int r = 0; r < spec.n_reflections; ++r) {
            double nrm = 0.0;
            do {
                nrm = 0.0;
                for (auto& c : v) {
                    c = gauss(rng);
                    nrm += c * c;
                }
                nrm = std::sqrt(nrm);
            } while (nrm < 1e-6);
            for (int i = 0; i < d; ++i) p[b0 + L.v(t, r) + i] = v[i] / nrm;
        }
    return p;
}

std::vector<ParamBlock> flow_param_blocks(const FlowSpec& spec,
                                          const std::string& prefix) {
    auto blocks = mlp_param_blocks(spec.cond_net, prefix + ".cond");
    const size_t w0 = spec.cond_net.param_count();
    const int feat = spec.feat_dim(), hd = spec.head_dim();
    blocks.push_back(
        {prefix + ".head_w", {hd, feat}, w0, size_t(hd) * feat});
    blocks.push_back(
        {prefix + ".head_b", {hd}, w0 + size_t(hd) * feat, size_t(hd)});
    return blocks;
}

FlowTrunk flow_trunk(Graph& g, const FlowSpec& spec,
                     std::span<const Var> params, std::span<const Var> x,
                     bool with_jacobian) {
    if (!spec.valid()) throw std::invalid_argument("flow spec is malformed");
    if (int(x.size()) != spec.d_x())
        throw std::invalid_argument("flow input size mismatch");
    if (int(params.size()) != spec.param_count())
        throw std::invalid_argument("flow parameter size mismatch");

    FlowTrunk t;
    t.spec = spec;
    t.with_jacobian = with_jacobian;

    const int d = spec.d_z, feat = spec.feat_dim(), hd = spec.head_dim();
    t.feat = mlp_apply(g, spec.cond_net, x,
                       params.first(spec.cond_net.param_count()));

    const size_t w0 = size_t(spec.cond_net.param_count());
    const size_t b0 = w0 + size_t(hd) * feat;
    std::vector<Var> heads(hd);
    for (int k = 0; k < hd; ++k)
        heads[k] = g.affine(params[b0 + k],
                            params.subspan(w0 + size_t(k) * feat, feat),
                            t.feat);

    const HeadLayout L(spec);
    t.base_mu.assign(heads.begin() + L.mu(), heads.begin() + L.mu() + d);
    t.base_sigma.resize(d);
    std::vector<Var> logs(d);
    for (int i = 0; i < d; ++i) {
        t.base_sigma[i] = g.softplus(heads[L.sig0 + i]);
        logs[i] = g.log(t.base_sigma[i]);
    }
    t.sum_log_sigma = g.sum(logs);

    const Var two = g.constant(2.0);
    t.layers.resize(spec.n_layers);
    for (int lt = 0; lt < spec.n_layers; ++lt) {
        FlowLayerNodes& ly = t.layers[lt];

        // Q as an explicit matrix: fold in one reflection at a time,
        // M <- M - (2 / v.v) (M v) v^T
        std::vector<Var> M(size_t(d) * d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                M[size_t(i) * d + j] = (i == j) ? g.one() : g.zero();
        for (int r = 0; r < spec.n_reflections; ++r) {
            const auto v = std::span<const Var>(heads).subspan(L.v(lt, r), d);
            const Var scale = g.div(two, g.dot(v, v));
            std::vector<Var> Mn(size_t(d) * d);
            for (int i = 0; i < d; ++i) {
                const auto row = std::span<const Var>(M).subspan(
                    size_t(i) * d, d);
                const Var w[1] = {g.neg(g.mul(g.dot(row, v), scale))};
                for (int j = 0; j < d; ++j) {
                    const Var u[1] = {v[j]};
                    Mn[size_t(i) * d + j] =
                        g.affine(M[size_t(i) * d + j], w, u);
                }
            }
            M = std::move(Mn);
        }
        ly.Q = std::move(M);

        std::vector<Var> Rd(d), Rtd(d);
        for (int i = 0; i < d; ++i) {
            Rd[i] = g.tanh(heads[L.rdiag(lt) + i]);
            Rtd[i] = g.tanh(heads[L.rtdiag(lt) + i]);
        }
        auto r_at = [&](int i, int j) {
            return i == j ? Rd[i] : heads[L.rup(lt) + upper_index(d, i, j)];
        };
        auto rt_at = [&](int i, int j) {
            return i == j ? Rtd[i] : heads[L.rtup(lt) + upper_index(d, i, j)];
        };

        ly.A.resize(size_t(d) * d);
        ly.B.resize(size_t(d) * d);
        std::vector<Var> va, vb;
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                va.clear();
                vb.clear();
                for (int k = 0; k <= j; ++k) { // A_ij = sum_{k<=j} Q_ik R_kj
                    va.push_back(ly.Q[size_t(i) * d + k]);
                    vb.push_back(r_at(k, j));
                }
                ly.A[size_t(i) * d + j] = g.dot(va, vb);
                va.clear();
                vb.clear();
                for (int k = i; k < d; ++k) { // B_ij = sum_{k>=i} Rt_ik Q_jk
                    va.push_back(rt_at(i, k));
                    vb.push_back(ly.Q[size_t(j) * d + k]);
                }
                ly.B[size_t(i) * d + j] = g.dot(va, vb);
            }

        ly.cdiag.resize(d);
        for (int i = 0; i < d; ++i) ly.cdiag[i] = g.mul(Rd[i], Rtd[i]);

        ly.b.assign(heads.begin() + L.off(lt), heads.begin() + L.off(lt) + d);

        if (with_jacobian) {
            ly.AB.resize(size_t(d) * d * d);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j)
                    for (int k = 0; k < d; ++k)
                        ly.AB[(size_t(i) * d + j) * d + k] =
                            g.mul(ly.A[size_t(i) * d + k],
                                  ly.B[size_t(k) * d + j]);
        }
    }
    return t;
}

FlowNodes flow_call(Graph& g, const FlowTrunk& t, std::span<const Var> e,
                    bool want_jacobian) {
    const FlowSpec& spec = t.spec;
    const int d = spec.d_z;
    if (int(e.size()) != d) throw std::invalid_argument("seed size mismatch");
    if (int(t.layers.size()) != spec.n_layers)
        throw std::invalid_argument("trunk layer count mismatch");
    if (want_jacobian && !t.with_jacobian)
        throw std::logic_error("trunk was built without jacobian weights");

    FlowNodes out;
    const Var neg1 = g.constant(-1.0);
    auto row = [d](const std::vector<Var>& m, int i) {
        return std::span<const Var>(m).subspan(size_t(i) * d, d);
    };

    std::vector<Var> z(d);
    for (int i = 0; i < d; ++i) {
        const Var w[1] = {t.base_sigma[i]};
        const Var u[1] = {e[i]};
        z[i] = g.affine(t.base_mu[i], w, u);
    }

    std::vector<Var> J;
    if (want_jacobian) {
        J.assign(size_t(d) * d, g.zero());
        for (int i = 0; i < d; ++i) J[size_t(i) * d + i] = t.base_sigma[i];
    }

    std::vector<Var> logdet_terms{t.sum_log_sigma};
    for (const FlowLayerNodes& ly : t.layers) {
        std::vector<Var> h(d), hp(d);
        for (int k = 0; k < d; ++k) {
            h[k] = g.tanh(g.affine(ly.b[k], row(ly.B, k), z));
            const Var w[1] = {neg1};
            const Var u[1] = {g.square(h[k])};
            hp[k] = g.affine(g.one(), w, u); // tanh' = 1 - tanh^2
        }

        // determinant factors 1 + tanh'(pre_k) Rt_kk R_kk, folded into one log
        Var prod;
        for (int k = 0; k < d; ++k) {
            const Var w[1] = {ly.cdiag[k]};
            const Var u[1] = {hp[k]};
            const Var term = g.affine(g.one(), w, u);
            prod = (k == 0) ? term : g.mul(prod, term);
        }
        logdet_terms.push_back(g.log(prod));

        std::vector<Var> zn(d);
        for (int i = 0; i < d; ++i) zn[i] = g.affine(z[i], row(ly.A, i), h);

        if (want_jacobian) {
            // step matrix I + A diag(tanh') B, then J <- step * J
            std::vector<Var> M(size_t(d) * d);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) {
                    const auto w = std::span<const Var>(ly.AB).subspan(
                        (size_t(i) * d + j) * d, d);
                    M[size_t(i) * d + j] =
                        g.affine(i == j ? g.one() : g.zero(), w, hp);
                }
            std::vector<Var> Jn(size_t(d) * d);
            std::vector<Var> a(d), b(d);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) {
                    for (int k = 0; k < d; ++k) {
                        a[k] = M[size_t(i) * d + k];
                        b[k] = J[size_t(k) * d + j];
                    }
                    Jn[size_t(i) * d + j] = g.dot(a, b);
                }
            J = std::move(Jn);
        }
        z = std::move(zn);
    }

    out.z = std::move(z);
    out.jac = std::move(J);
    out.log_det = g.sum(logdet_terms);

    std::vector<Var> sq(d);
    for (int i = 0; i < d; ++i) sq[i] = g.square(e[i]);
    const Var se = g.sum(sq);
    const Var w[2] = {g.constant(-0.5), neg1};
    const Var u[2] = {se, out.log_det};
    out.log_q = g.affine(g.constant(-0.5 * d * std::log(kTwoPi)), w, u);
    return out;
}

FlowNodes flow_apply(Graph& g, const FlowSpec& spec,
                     std::span<const Var> params, std::span<const Var> x,
                     std::span<const Var> e, bool want_jacobian) {
    const FlowTrunk t = flow_trunk(g, spec, params, x, want_jacobian);
    return flow_call(g, t, e, want_jacobian);
}

// ---- numeric runtimes ----------------------------------------------------------

GaussRuntime::GaussRuntime(GaussianConditional spec, std::vector<double> params)
    : spec_(std::move(spec)), params_(std::move(params)), ex_(g_) {
    if (!spec_.mean_net.valid())
        throw std::invalid_argument("mlp spec is malformed");
    if (int(params_.size()) != spec_.mean_net.param_count())
        throw std::invalid_argument("mlp parameter size mismatch");
    if (spec_.sigma2 <= 0.0)
        throw std::invalid_argument("decoder variance must be positive");
    z_in_ = g_.inputs(spec_.mean_net.d_in());
    p_in_ = g_.inputs(params_.size());
    mean_ = mlp_apply(g_, spec_.mean_net, z_in_, p_in_);
    ex_.sync(g_);
    ex_.bind(p_in_, params_);
}

void GaussRuntime::set_params(std::span<const double> p) {
    if (p.size() != params_.size())
        throw std::invalid_argument("parameter size mismatch");
    params_.assign(p.begin(), p.end());
    ex_.bind(p_in_, params_);
}

void GaussRuntime::run(std::span<const double> z) {
    if (z.size() != z_in_.size())
        throw std::invalid_argument("latent size mismatch");
    ex_.bind(z_in_, z);
    g_.forward(ex_);
}

std::vector<double> GaussRuntime::mean(std::span<const double> z) {
    run(z);
    std::vector<double> f(mean_.size());
    for (size_t i = 0; i < f.size(); ++i) f[i] = ex_.value(mean_[i]);
    return f;
}

double GaussRuntime::log_density(std::span<const double> x,
                                 std::span<const double> z) {
    const auto f = mean(z);
    if (x.size() != f.size())
        throw std::invalid_argument("observation size mismatch");
    double s = 0.0;
    for (size_t i = 0; i < f.size(); ++i) {
        const double r = x[i] - f[i];
        s += r * r;
    }
    return -0.5 * double(f.size()) * std::log(kTwoPi * spec_.sigma2) -
           0.5 * s / spec_.sigma2;
}

std::vector<double> GaussRuntime::grad_x_logp(std::span<const double> x,
                                              std::span<const double> z) {
    auto f = mean(z);
    for (size_t i = 0; i < f.size(); ++i) f[i] = (f[i] - x[i]) / spec_.sigma2;
    return f;
}

std::vector<double> GaussRuntime::grad_z_logp(std::span<const double> x,
                                              std::span<const double> z) {
    const auto f = mean(z); // leaves the exec at this z
    if (x.size() != f.size())
        throw std::invalid_argument("observation size mismatch");
    std::vector<std::pair<Var, double>> seeds(f.size());
    for (size_t k = 0; k < f.size(); ++k)
        seeds[k] = {mean_[k], (x[k] - f[k]) / spec_.sigma2};
    g_.backward(ex_, seeds);
    std::vector<double> out(z_in_.size());
    for (size_t l = 0; l < out.size(); ++l) out[l] = ex_.adjoint(z_in_[l]);
    return out;
}

std::vector<double> GaussRuntime::sample(std::span<const double> z, Rng& rng) {
    auto f = mean(z);
    const double sd = std::sqrt(spec_.sigma2);
    for (auto& c : f) c += sd * gauss(rng);
    return f;
}

FlowRuntime::FlowRuntime(FlowSpec spec, std::vector<double> params)
    : spec_(std::move(spec)), params_(std::move(params)), ex_(g_) {
    if (!spec_.valid()) throw std::invalid_argument("flow spec is malformed");
    if (int(params_.size()) != spec_.param_count())
        throw std::invalid_argument("flow parameter size mismatch");
    x_in_ = g_.inputs(spec_.d_x());
    e_in_ = g_.inputs(spec_.d_z);
    p_in_ = g_.inputs(params_.size());
    const FlowTrunk t = flow_trunk(g_, spec_, p_in_, x_in_, false);
    out_ = flow_call(g_, t, e_in_, false);
    ex_.sync(g_);
    ex_.bind(p_in_, params_);
}

void FlowRuntime::set_params(std::span<const double> p) {
    if (p.size() != params_.size())
        throw std::invalid_argument("parameter size mismatch");
    params_.assign(p.begin(), p.end());
    ex_.bind(p_in_, params_);
}

void FlowRuntime::run(std::span<const double> x, std::span<const double> e) {
    if (x.size() != x_in_.size())
        throw std::invalid_argument("observation size mismatch");
    if (e.size() != e_in_.size())
        throw std::invalid_argument("seed size mismatch");
    ex_.bind(x_in_, x);
    ex_.bind(e_in_, e);
    g_.forward(ex_);
}

FlowRuntime::Fwd FlowRuntime::forward(std::span<const double> x,
                                      std::span<const double> e) {
    run(x, e);
    Fwd f;
    f.z.resize(out_.z.size());
    for (size_t i = 0; i < f.z.size(); ++i) f.z[i] = ex_.value(out_.z[i]);
    f.log_det = ex_.value(out_.log_det);
    f.log_q = ex_.value(out_.log_q);
    return f;
}

std::vector<double> FlowRuntime::sample(std::span<const double> x, Rng& rng,
                                        std::vector<double>* e_out) {
    std::vector<double> e(spec_.d_z);
    for (auto& c : e) c = gauss(rng);
    auto f = forward(x, e);
    if (e_out) *e_out = std::move(e);
    return std::move(f.z);
}

std::vector<double> FlowRuntime::jac_from_exec() {
    const int d = spec_.d_z;
    std::vector<double> J(size_t(d) * d);
    for (int k = 0; k < d; ++k) {
        g_.backward(ex_, out_.z[k]);
        for (int l = 0; l < d; ++l)
            J[size_t(k) * d + l] = ex_.adjoint(e_in_[l]);
    }
    return J;
}

std::vector<double> FlowRuntime::jacobian_e(std::span<const double> x,
                                            std::span<const double> e) {
    run(x, e);
    return jac_from_exec();
}

std::vector<double> FlowRuntime::grad_z_logq(std::span<const double> x,
                                             std::span<const double> e) {
    const int d = spec_.d_z;
    run(x, e);
    auto J = jac_from_exec();
    g_.backward(ex_, out_.log_q);
    std::vector<double> grad(d);
    for (int l = 0; l < d; ++l) grad[l] = ex_.adjoint(e_in_[l]);
    if (!la::lu_solve_transposed(d, J.data(), grad.data()))
        throw std::runtime_error("transport jacobian is singular");
    return grad;
}

std::vector<double> FlowRuntime::grad_x_logq(std::span<const double> x,
                                             std::span<const double> e) {
    const auto gz = grad_z_logq(x, e); // leaves the exec at (x, e)
    std::vector<std::pair<Var, double>> seeds;
    seeds.reserve(gz.size() + 1);
    seeds.emplace_back(out_.log_q, 1.0);
    for (size_t k = 0; k < gz.size(); ++k)
        seeds.emplace_back(out_.z[k], -gz[k]);
    g_.backward(ex_, seeds);
    std::vector<double> out(x_in_.size());
    for (size_t l = 0; l < out.size(); ++l) out[l] = ex_.adjoint(x_in_[l]);
    return out;
}

bool FlowRuntime::invert(std::span<const double> x, std::span<const double> z,
                         std::span<double> e_inout, double tol, int max_iter) {
    const int d = spec_.d_z;
    if (int(z.size()) != d || int(e_inout.size()) != d)
        throw std::invalid_argument("latent size mismatch");

    std::vector<double> e(e_inout.begin(), e_inout.end());
    std::vector<double> r(d), rt(d), et(d);
    auto residual = [&](const std::vector<double>& ec,
                        std::vector<double>& rr) {
        run(x, ec);
        double n2 = 0.0;
        for (int i = 0; i < d; ++i) {
            rr[i] = ex_.value(out_.z[i]) - z[i];
            n2 += rr[i] * rr[i];
        }
        return n2;
    };

    double n2 = residual(e, r);
    for (int it = 0; it < max_iter; ++it) {
        double rinf = 0.0;
        for (double v : r) rinf = std::max(rinf, std::fabs(v));
        if (rinf <= tol) {
            std::copy(e.begin(), e.end(), e_inout.begin());
            return true;
        }
        if (!std::isfinite(n2)) return false;

        auto J = jac_from_exec(); // at the current e
        std::vector<double> step(r);
        if (!la::lu_solve(d, J.data(), step.data())) return false;

        // backtrack on the squared residual until it actually shrinks
        double alpha = 1.0;
        bool accepted = false;
        for (int bt = 0; bt < 40; ++bt) {
            for (int i = 0; i < d; ++i) et[i] = e[i] - alpha * step[i];
            const double n2t = residual(et, rt);
            if (std::isfinite(n2t) && n2t <= (1.0 - 1e-4 * alpha) * n2) {
                e = et;
                n2 = n2t;
                std::swap(r, rt);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) return false;
    }
    double rinf = 0.0;
    for (double v : r) rinf = std::max(rinf, std::fabs(v));
    if (rinf <= tol) {
        std::copy(e.begin(), e.end(), e_inout.begin());
        return true;
    }
    return false;
}

} // namespace cycond::models
