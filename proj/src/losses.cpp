#include "cycond/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace cycond::losses {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// y = J^{-T} b as graph nodes: y = C b / det with C the cofactor matrix of J
// (J^{-1} = C^T / det).  Closed forms for tiny d keep the emitted subgraph
// small enough to differentiate again.
std::vector<Var> solve_transposed(Graph& g, std::span<const Var> J,
                                  std::span<const Var> b, int d) {
    if (d == 1) return {g.div(b[0], J[0])};
    auto minor2 = [&](int r0, int c0, int r1, int c1) {
        return g.sub(g.mul(J[size_t(r0) * size_t(d) + size_t(c0)],
                           J[size_t(r1) * size_t(d) + size_t(c1)]),
                     g.mul(J[size_t(r0) * size_t(d) + size_t(c1)],
                           J[size_t(r1) * size_t(d) + size_t(c0)]));
    };
    if (d == 2) {
        Var det = minor2(0, 0, 1, 1);
        return {g.div(g.sub(g.mul(J[3], b[0]), g.mul(J[2], b[1])), det),
                g.div(g.sub(g.mul(J[0], b[1]), g.mul(J[1], b[0])), det)};
    }
    if (d == 3) {
        std::vector<Var> C(9);
        for (int i = 0; i < 3; ++i) {
            const int r0 = (i == 0) ? 1 : 0, r1 = (i == 2) ? 1 : 2;
            for (int j = 0; j < 3; ++j) {
                const int c0 = (j == 0) ? 1 : 0, c1 = (j == 2) ? 1 : 2;
                Var m = minor2(r0, c0, r1, c1);
                C[size_t(i) * 3 + size_t(j)] = ((i + j) % 2 == 0) ? m : g.neg(m);
            }
        }
        const std::span<const Var> cs(C);
        Var det = g.dot(J.first(3), cs.first(3));
        std::vector<Var> y(3);
        for (int i = 0; i < 3; ++i)
            y[size_t(i)] = g.div(g.dot(cs.subspan(size_t(i) * 3, 3), b), det);
        return y;
    }
    throw std::invalid_argument("latent solve limited to d_z <= 3");
}

} // namespace

PairLoss::PairLoss(PairConfig cfg) : cfg_(std::move(cfg)) {
    const FlowSpec& enc = cfg_.enc;
    const models::MlpSpec& dnet = cfg_.dec.mean_net;
    if (!enc.valid()) throw std::invalid_argument("invalid encoder spec");
    if (!dnet.valid() || dnet.d_in() != enc.d_z || dnet.d_out() != enc.d_x())
        throw std::invalid_argument("decoder mean net must map d_z -> d_x");
    if (!(cfg_.dec.sigma2 > 0.0))
        throw std::invalid_argument("decoder variance must be positive");
    if (cfg_.build_nll && cfg_.k_nll < 1)
        throw std::invalid_argument("k_nll must be >= 1");
    const bool dae_branch = cfg_.build_dae || cfg_.build_elbo;
    if (dae_branch && cfg_.k_dae < 1)
        throw std::invalid_argument("k_dae must be >= 1");
    if (cfg_.build_compat && enc.d_z > 3)
        throw std::invalid_argument("compatibility term limited to d_z <= 3");

    const int dx = enc.d_x(), dz = enc.d_z;
    x_in_ = g_.inputs(size_t(dx));
    pdec_in_ = g_.inputs(size_t(dnet.param_count()));
    penc_in_ = g_.inputs(size_t(enc.param_count()));
    auto trunk = models::flow_trunk(g_, enc, penc_in_, x_in_, cfg_.build_compat);

    if (cfg_.build_compat) {
        ec_in_ = g_.inputs(size_t(dz));
        eta_in_ = g_.inputs(size_t(dx));
        auto fc = models::flow_call(g_, trunk, ec_in_, true);
        auto dn = models::gauss_apply(g_, cfg_.dec, pdec_in_, x_in_, fc.z);

        // eta^T grad_x log p(x|z) = (eta.mean(z) - eta.x) / sigma2
        const double inv_s2 = 1.0 / cfg_.dec.sigma2;
        const Var w1[2] = {g_.constant(inv_s2), g_.constant(-inv_s2)};
        const Var u1[2] = {g_.dot(eta_in_, dn.mean), g_.dot(eta_in_, x_in_)};
        Var t1 = g_.affine(g_.zero(), w1, u1);

        // eta^T grad_x log q at fixed z, via the transport h(x,e) = log q:
        //   eta^T grad_x h - (dT/dx eta) . (J^{-T} grad_e h)
        auto geh = g_.gradient(fc.log_q, ec_in_);
        auto gz = solve_transposed(g_, fc.jac, geh, dz);
        std::vector<Var> outs(fc.z.begin(), fc.z.end());
        outs.push_back(fc.log_q);
        std::vector<std::pair<Var, Var>> dir(static_cast<size_t>(dx));
        for (int l = 0; l < dx; ++l)
            dir[size_t(l)] = {x_in_[size_t(l)], eta_in_[size_t(l)]};
        auto tans = g_.jvp(outs, dir);
        const std::span<const Var> ts(tans);
        Var t2 = g_.sub(tans[size_t(dz)], g_.dot(gz, ts.first(size_t(dz))));

        // s = eta^T grad_x r; its e- or z-gradient is the probe slice of the
        // cross second derivative (z form after pulling back through J^T)
        Var s = g_.sub(t1, t2);
        auto ce = g_.gradient(s, ec_in_);
        if (cfg_.form == CompatForm::LatentSpace)
            ce = solve_transposed(g_, fc.jac, ce, dz);
        compat_ = g_.dot(ce, ce);
    }

    if (cfg_.build_nll) {
        const int k = cfg_.k_nll;
        enll_in_ = g_.inputs(size_t(k) * size_t(dz));
        const std::span<const Var> es(enll_in_);
        std::vector<Var> neglogp(static_cast<size_t>(k));
        for (int j = 0; j < k; ++j) {
            auto f = models::flow_call(g_, trunk, es.subspan(size_t(j) * size_t(dz), size_t(dz)));
            auto dn = models::gauss_apply(g_, cfg_.dec, pdec_in_, x_in_, f.z);
            neglogp[size_t(j)] = g_.neg(dn.log_density);
        }
        const Var w1[1] = {g_.one()};
        const Var u1[1] = {g_.logsumexp(neglogp)};
        nll_ = g_.affine(g_.constant(-std::log(double(k))), w1, u1);
    }

    if (dae_branch) {
        const int k = cfg_.k_dae;
        edae_in_ = g_.inputs(size_t(k) * size_t(dz));
        const std::span<const Var> es(edae_in_);
        std::vector<Var> logp(static_cast<size_t>(k));
        std::vector<Var> kl(static_cast<size_t>(k));
        for (int j = 0; j < k; ++j) {
            auto f = models::flow_call(g_, trunk, es.subspan(size_t(j) * size_t(dz), size_t(dz)));
            auto dn = models::gauss_apply(g_, cfg_.dec, pdec_in_, x_in_, f.z);
            logp[size_t(j)] = dn.log_density;
            if (cfg_.build_elbo) {
                const Var wp[1] = {g_.constant(-0.5)};
                const Var up[1] = {g_.dot(f.z, f.z)};
                Var prior = g_.affine(g_.constant(-0.5 * dz * kLog2Pi), wp, up);
                kl[size_t(j)] = g_.sub(f.log_q, prior);
            }
        }
        const Var wrec = g_.constant(-1.0 / double(k));
        std::vector<Var> w(size_t(k), wrec);
        dae_ = g_.affine(g_.zero(), w, logp);
        if (cfg_.build_elbo) {
            const Var wkl = g_.constant(cfg_.beta / double(k));
            std::vector<Var> w2(size_t(2 * k));
            std::vector<Var> u2(size_t(2 * k));
            for (int j = 0; j < k; ++j) {
                w2[size_t(j)] = wrec;
                u2[size_t(j)] = logp[size_t(j)];
                w2[size_t(k + j)] = wkl;
                u2[size_t(k + j)] = kl[size_t(j)];
            }
            elbo_ = g_.affine(g_.zero(), w2, u2);
        }
    }

    ex_.sync(g_);
}

void PairLoss::set_params(std::span<const double> dec,
                          std::span<const double> enc) {
    if (dec.size() != pdec_in_.size() || enc.size() != penc_in_.size())
        throw std::invalid_argument("parameter block size mismatch");
    ex_.bind(pdec_in_, dec);
    ex_.bind(penc_in_, enc);
    params_set_ = true;
}

size_t PairLoss::seed_size() const {
    return ec_in_.size() + enll_in_.size() + edae_in_.size();
}

size_t PairLoss::nll_seed_offset() const { return ec_in_.size(); }

size_t PairLoss::dae_seed_offset() const {
    return ec_in_.size() + enll_in_.size();
}

void PairLoss::draw_seeds(std::span<double> seeds, Rng& rng) const {
    if (seeds.size() != seed_size())
        throw std::invalid_argument("seed buffer size mismatch");
    for (double& s : seeds) s = gauss(rng);
}

PairLoss::Terms PairLoss::eval(std::span<const double> x,
                               std::span<const double> seeds,
                               std::span<const double> probes,
                               const Weights& w, std::span<double> grad) {
    const size_t dx = x_in_.size();
    if (!params_set_) throw std::logic_error("set_params before eval");
    if (x.size() != dx) throw std::invalid_argument("x size mismatch");
    if (seeds.size() != seed_size())
        throw std::invalid_argument("seed buffer size mismatch");
    const bool want_grad = !grad.empty();
    if (want_grad && grad.size() != n_params())
        throw std::invalid_argument("gradient buffer size mismatch");
    const bool dae_branch = dae_.valid();
    if ((w.compat != 0.0 && !compat_.valid()) ||
        (w.nll != 0.0 && !nll_.valid()) || (w.dae != 0.0 && !dae_branch) ||
        (w.elbo != 0.0 && !elbo_.valid()))
        throw std::logic_error("weight on a term this program did not build");

    ex_.bind(x_in_, x);
    if (!ec_in_.empty())
        ex_.bind(ec_in_, seeds.subspan(compat_seed_offset(), ec_in_.size()));
    if (!enll_in_.empty())
        ex_.bind(enll_in_, seeds.subspan(nll_seed_offset(), enll_in_.size()));
    if (!edae_in_.empty())
        ex_.bind(edae_in_, seeds.subspan(dae_seed_offset(), edae_in_.size()));

    Terms t;
    auto read_others = [&] {
        if (nll_.valid()) t.nll = ex_.value(nll_);
        if (dae_branch) t.dae = ex_.value(dae_);
        if (elbo_.valid()) t.elbo = ex_.value(elbo_);
    };

    bool others_swept = false;
    if (compat_.valid()) {
        if (probes.empty() || probes.size() % dx != 0)
            throw std::invalid_argument("compatibility term needs probe rows");
        const size_t np = probes.size() / dx;
        for (size_t pi = 0; pi < np; ++pi) {
            ex_.bind(eta_in_, probes.subspan(pi * dx, dx));
            g_.forward(ex_);
            if (pi == 0) read_others();
            t.compat += ex_.value(compat_) / double(np);
            if (!want_grad) continue;
            if (np == 1) {
                // fused sweep: every weighted term in one pass
                std::vector<std::pair<Var, double>> sd;
                if (w.compat != 0.0) sd.push_back({compat_, w.compat});
                if (w.nll != 0.0) sd.push_back({nll_, w.nll});
                if (w.dae != 0.0) sd.push_back({dae_, w.dae});
                if (w.elbo != 0.0) sd.push_back({elbo_, w.elbo});
                if (!sd.empty()) {
                    g_.backward(ex_, sd);
                    accumulate(grad);
                }
                others_swept = true;
            } else if (w.compat != 0.0) {
                const std::pair<Var, double> sd[1] = {
                    {compat_, w.compat / double(np)}};
                g_.backward(ex_, sd);
                accumulate(grad);
            }
        }
    } else {
        if (!probes.empty())
            throw std::invalid_argument("probes given without a compatibility term");
        g_.forward(ex_);
        read_others();
    }

    if (want_grad && !others_swept) {
        // nll/dae/elbo do not depend on the probe, so the last forward state
        // is valid for them regardless of which probe it was
        std::vector<std::pair<Var, double>> sd;
        if (w.nll != 0.0) sd.push_back({nll_, w.nll});
        if (w.dae != 0.0) sd.push_back({dae_, w.dae});
        if (w.elbo != 0.0) sd.push_back({elbo_, w.elbo});
        if (!sd.empty()) {
            g_.backward(ex_, sd);
            accumulate(grad);
        }
    }
    return t;
}

void PairLoss::accumulate(std::span<double> grad) const {
    const size_t nd = pdec_in_.size();
    for (size_t i = 0; i < nd; ++i) grad[i] += ex_.adjoint(pdec_in_[i]);
    for (size_t i = 0; i < penc_in_.size(); ++i)
        grad[nd + i] += ex_.adjoint(penc_in_[i]);
}

std::vector<double> basis_probes(int d) {
    std::vector<double> p(size_t(d) * size_t(d), 0.0);
    for (int i = 0; i < d; ++i) p[size_t(i) * size_t(d) + size_t(i)] = 1.0;
    return p;
}

std::vector<double> rademacher_probes(int d, int n, Rng& rng) {
    std::vector<double> p(size_t(n) * size_t(d));
    for (double& v : p) v = rademacher(rng);
    return p;
}

namespace {

PairConfig base_config(const ModelPair& m) {
    PairConfig c;
    c.dec = m.dec;
    c.enc = m.enc;
    c.build_compat = false;
    c.build_nll = false;
    return c;
}

void check_batch(const ModelPair& m, std::span<const double> xs, int n) {
    const size_t dx = size_t(m.enc.d_x());
    if (n < 1 || xs.size() != size_t(n) * dx)
        throw std::invalid_argument("batch shape mismatch");
}

} // namespace

double compat_loss_exact(const ModelPair& m, std::span<const double> xs,
                         int n, Rng& rng) {
    check_batch(m, xs, n);
    PairConfig c = base_config(m);
    c.build_compat = true;
    c.form = CompatForm::LatentSpace;
    PairLoss pl(std::move(c));
    pl.set_params(m.dec_params, m.enc_params);
    const size_t dx = size_t(pl.d_x());
    const auto probes = basis_probes(pl.d_x());
    std::vector<double> seeds(pl.seed_size());
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        pl.draw_seeds(seeds, rng);
        // eval averages probe rows; the exact norm is the basis sum
        acc += pl.eval(xs.subspan(size_t(i) * dx, dx), seeds, probes).compat *
               double(dx);
    }
    return acc / double(n);
}

double compat_loss_hutchinson(const ModelPair& m, std::span<const double> xs,
                              int n, int n_probes, Rng& rng) {
    check_batch(m, xs, n);
    if (n_probes < 1) throw std::invalid_argument("n_probes must be >= 1");
    PairConfig c = base_config(m);
    c.build_compat = true;
    c.form = CompatForm::LatentSpace;
    PairLoss pl(std::move(c));
    pl.set_params(m.dec_params, m.enc_params);
    const size_t dx = size_t(pl.d_x());
    std::vector<double> seeds(pl.seed_size());
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        pl.draw_seeds(seeds, rng);
        const auto probes = rademacher_probes(pl.d_x(), n_probes, rng);
        acc += pl.eval(xs.subspan(size_t(i) * dx, dx), seeds, probes).compat;
    }
    return acc / double(n);
}

double compat_loss_simplified(const ModelPair& m, std::span<const double> xs,
                              int n, int n_probes, Rng& rng) {
    check_batch(m, xs, n);
    if (n_probes < 1) throw std::invalid_argument("n_probes must be >= 1");
    PairConfig c = base_config(m);
    c.build_compat = true;
    c.form = CompatForm::SeedSpace;
    PairLoss pl(std::move(c));
    pl.set_params(m.dec_params, m.enc_params);
    const size_t dx = size_t(pl.d_x());
    std::vector<double> seeds(pl.seed_size());
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        pl.draw_seeds(seeds, rng);
        const auto probes = rademacher_probes(pl.d_x(), n_probes, rng);
        acc += pl.eval(xs.subspan(size_t(i) * dx, dx), seeds, probes).compat;
    }
    return acc / double(n);
}

namespace {

template <class Pick>
double batch_mean(PairLoss& pl, std::span<const double> xs, int n, Rng& rng,
                  Pick pick) {
    const size_t dx = size_t(pl.d_x());
    std::vector<double> seeds(pl.seed_size());
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        pl.draw_seeds(seeds, rng);
        acc += pick(pl.eval(xs.subspan(size_t(i) * dx, dx), seeds, {}));
    }
    return acc / double(n);
}

} // namespace

double nll_loss(const ModelPair& m, std::span<const double> xs, int n, int k,
                Rng& rng) {
    check_batch(m, xs, n);
    PairConfig c = base_config(m);
    c.build_nll = true;
    c.k_nll = k;
    PairLoss pl(std::move(c));
    pl.set_params(m.dec_params, m.enc_params);
    return batch_mean(pl, xs, n, rng,
                      [](const PairLoss::Terms& t) { return t.nll; });
}

double dae_loss(const ModelPair& m, std::span<const double> xs, int n, int k,
                Rng& rng) {
    check_batch(m, xs, n);
    PairConfig c = base_config(m);
    c.build_dae = true;
    c.k_dae = k;
    PairLoss pl(std::move(c));
    pl.set_params(m.dec_params, m.enc_params);
    return batch_mean(pl, xs, n, rng,
                      [](const PairLoss::Terms& t) { return t.dae; });
}

double elbo_loss(const ModelPair& m, std::span<const double> xs, int n, int k,
                 double beta, Rng& rng) {
    check_batch(m, xs, n);
    PairConfig c = base_config(m);
    c.build_elbo = true;
    c.k_dae = k;
    c.beta = beta;
    PairLoss pl(std::move(c));
    pl.set_params(m.dec_params, m.enc_params);
    return batch_mean(pl, xs, n, rng,
                      [](const PairLoss::Terms& t) { return t.elbo; });
}

double cygen_objective(const ModelPair& m, std::span<const double> xs, int n,
                       const LossWeights& w, int k_nll, Rng& rng) {
    check_batch(m, xs, n);
    PairConfig c = base_config(m);
    c.build_compat = true;
    c.form = CompatForm::SeedSpace;
    c.build_nll = true;
    c.k_nll = k_nll;
    PairLoss pl(std::move(c));
    pl.set_params(m.dec_params, m.enc_params);
    const size_t dx = size_t(pl.d_x());
    std::vector<double> seeds(pl.seed_size());
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        pl.draw_seeds(seeds, rng);
        const auto probes = rademacher_probes(pl.d_x(), 1, rng);
        auto t = pl.eval(xs.subspan(size_t(i) * dx, dx), seeds, probes);
        acc += w.w_compat * t.compat + w.w_nll * t.nll;
    }
    return acc / double(n);
}

} // namespace cycond::losses
