#include "cycond/bench/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "cycond/losses.hpp"
#include "cycond/rng.hpp"
#include "cycond/samplers.hpp"

namespace cycond::bench {

namespace {

using losses::PairConfig;
using losses::PairLoss;
using losses::TermValues;
using losses::TermWeights;

// rng stream tags, one per independent noise source
constexpr uint64_t kInitDecStream = 11, kInitEncStream = 12;
constexpr uint64_t kShuffleStream = 13, kNoiseStream = 14;
constexpr uint64_t kGenStream = 31, kNllStream = 32;
constexpr uint64_t kNllPointsSeedOffset = 101; // test points for the bound

models::GaussianConditional decoder_spec(const RunConfig& cfg) {
    models::GaussianConditional d;
    d.mean_net = models::make_mlp(cfg.dec_widths, models::Act::Tanh,
                                  models::Act::Identity);
    d.sigma2 = cfg.sigma2;
    return d;
}

models::FlowSpec encoder_spec(const RunConfig& cfg) {
    models::FlowSpec e;
    e.cond_net = models::make_mlp(cfg.cond_widths, models::Act::Tanh,
                                  models::Act::Tanh);
    e.d_z = cfg.d_z;
    e.n_layers = cfg.flow_layers;
    e.n_reflections = cfg.n_reflections;
    return e;
}

struct Phase {
    PairConfig pc;
    TermWeights w;
    long n_steps = 0;
    bool drop_dec_lr = false;
    int id = 1;
    bool needs_probes = false;
};

std::vector<Phase> make_phases(const RunConfig& cfg,
                               const models::GaussianConditional& dec,
                               const models::FlowSpec& enc,
                               long steps_per_epoch) {
    auto base = [&] {
        PairConfig pc;
        pc.dec = dec;
        pc.enc = enc;
        pc.k_nll = cfg.k_nll;
        pc.k_dae = cfg.k_dae;
        pc.beta = cfg.beta;
        pc.build_compat = pc.build_nll = pc.build_dae = pc.build_elbo = false;
        return pc;
    };
    auto main_phase = [&](bool drop) {
        Phase p;
        p.pc = base();
        p.pc.build_compat = true;
        p.pc.build_nll = true;
        p.w.compat = cfg.w_compat;
        p.w.nll = cfg.w_nll;
        p.n_steps = cfg.n_steps;
        p.drop_dec_lr = drop;
        p.id = 1;
        p.needs_probes = true;
        return p;
    };
    auto elbo_phase = [&](long n_steps, int id) {
        Phase p;
        p.pc = base();
        p.pc.build_elbo = true;
        p.w.elbo = 1.0;
        p.n_steps = n_steps;
        p.id = id;
        return p;
    };

    std::vector<Phase> out;
    if (cfg.method == "cygen") {
        out.push_back(main_phase(false));
    } else if (cfg.method == "cygen_pt") {
        const long pre = cfg.pretrain_epochs * steps_per_epoch;
        if (pre > 0) out.push_back(elbo_phase(pre, 0));
        out.push_back(main_phase(true));
    } else if (cfg.method == "vae") {
        out.push_back(elbo_phase(cfg.n_steps, 1));
    } else if (cfg.method == "dae") {
        Phase p;
        p.pc = base();
        p.pc.build_dae = true;
        p.w.dae = 1.0;
        p.n_steps = cfg.n_steps;
        out.push_back(p);
    } else {
        throw ConfigError("unknown method '" + cfg.method + "'");
    }
    return out;
}

double weighted_total(const TermWeights& w, const TermValues& t) {
    return w.compat * t.compat + w.nll * t.nll + w.dae * t.dae +
           w.elbo * t.elbo;
}

} // namespace

void Adam::init(size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    t = 0;
}

void Adam::step(std::span<double> params, std::span<const double> grad,
                std::span<const double> lr) {
    if (params.size() != m.size() || grad.size() != m.size() ||
        lr.size() != m.size())
        throw std::invalid_argument("optimizer buffer size mismatch");
    t++;
    const double bc1 = 1.0 - std::pow(beta1, double(t));
    const double bc2 = 1.0 - std::pow(beta2, double(t));
    for (size_t i = 0; i < m.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        params[i] -= lr[i] * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
}

TrainResult train_run(const RunConfig& cfg, const Dataset& data) {
    std::string why;
    if (!cfg.valid(&why)) throw ConfigError(why);
    if (!cfg.has_seed) throw ConfigError("a seed is required for training");
    if (data.n < 1) throw std::invalid_argument("empty dataset");
    if (data.d != 2) throw std::invalid_argument("training expects 2d data");

    const auto t0 = std::chrono::steady_clock::now();
    const auto dec = decoder_spec(cfg);
    const auto enc = encoder_spec(cfg);

    auto rng_dec = make_rng(cfg.seed, kInitDecStream);
    auto rng_enc = make_rng(cfg.seed, kInitEncStream);
    auto rng_shuffle = make_rng(cfg.seed, kShuffleStream);
    auto rng_noise = make_rng(cfg.seed, kNoiseStream);

    const std::vector<double> dp0 = models::glorot_init(dec.mean_net, rng_dec);
    const std::vector<double> ep0 = models::flow_init(enc, rng_enc);
    const size_t ndp = dp0.size(), nep = ep0.size(), np = ndp + nep;

    std::vector<double> theta(np);
    std::copy(dp0.begin(), dp0.end(), theta.begin());
    std::copy(ep0.begin(), ep0.end(), theta.begin() + long(ndp));
    const std::span<const double> dspan(theta.data(), ndp);
    const std::span<const double> espan(theta.data() + ndp, nep);

    const int bn = std::min(cfg.batch, data.n);
    const long steps_per_epoch = (data.n + bn - 1) / bn;
    auto phases = make_phases(cfg, dec, enc, steps_per_epoch);

    std::vector<size_t> perm(size_t(data.n));
    std::iota(perm.begin(), perm.end(), size_t(0));
    size_t cursor = perm.size(); // forces a shuffle before the first batch

    TrainResult res;
    std::vector<double> grad(np), lr(np);
    long global_step = 0;

    for (const auto& ph : phases) {
        PairLoss pl(ph.pc);
        if (pl.n_dec_params() != ndp || pl.n_enc_params() != nep)
            throw std::logic_error("phase parameter layout mismatch");
        Adam opt;
        opt.init(np);
        std::fill(lr.begin(), lr.end(), cfg.lr);
        if (ph.drop_dec_lr)
            std::fill(lr.begin(), lr.begin() + long(ndp),
                      cfg.lr / cfg.dec_lr_drop);
        std::vector<double> seeds(pl.seed_size());
        std::vector<double> probes(ph.needs_probes ? size_t(cfg.n_probes) * 2
                                                   : size_t(0));
        pl.set_params(dspan, espan);

        for (long s = 0; s < ph.n_steps && !res.diverged; ++s) {
            if (cursor + size_t(bn) > perm.size()) {
                std::shuffle(perm.begin(), perm.end(), rng_shuffle);
                cursor = 0;
            }
            std::fill(grad.begin(), grad.end(), 0.0);
            TermValues avg;
            for (int b = 0; b < bn; ++b) {
                const auto x = data.row(int(perm[cursor + size_t(b)]));
                pl.draw_seeds(seeds, rng_noise);
                if (cfg.clamp_seeds)
                    for (double& e : seeds)
                        e = std::clamp(e, -cfg.clamp_limit, cfg.clamp_limit);
                for (double& pr : probes) pr = rademacher(rng_noise);
                const auto t = pl.eval(x, seeds, probes, ph.w, grad);
                avg.compat += t.compat;
                avg.nll += t.nll;
                avg.dae += t.dae;
                avg.elbo += t.elbo;
            }
            cursor += size_t(bn);
            const double inv = 1.0 / bn;
            avg.compat *= inv;
            avg.nll *= inv;
            avg.dae *= inv;
            avg.elbo *= inv;
            const double total = weighted_total(ph.w, avg);

            bool finite = std::isfinite(total);
            for (size_t i = 0; finite && i < np; ++i)
                finite = std::isfinite(grad[i]);
            if (!finite) {
                res.diverged = true;
                res.note = "non-finite loss or gradient at step " +
                           std::to_string(global_step + 1);
                break; // parameters still hold the last finite state
            }

            for (size_t i = 0; i < np; ++i)
                grad[i] = grad[i] * inv + cfg.weight_decay * theta[i];
            opt.step(theta, grad, lr);
            pl.set_params(dspan, espan);

            global_step++;
            res.step_total.push_back(total);
            const bool last = s == ph.n_steps - 1;
            // a phase's first row is the loss at the previous phase's final
            // parameters: the natural baseline for cross-phase comparisons
            if (s == 0 || global_step % cfg.log_every == 0 || last) {
                if (res.log.empty() || res.log.back().step != global_step)
                    res.log.push_back({global_step, ph.id, total, avg.compat,
                                       avg.nll, avg.dae, avg.elbo});
            }
        }
        if (res.diverged) break;
    }

    res.steps = global_step;
    res.ckpt.dataset = cfg.dataset;
    res.ckpt.n_train = cfg.n_train;
    res.ckpt.method = cfg.method;
    res.ckpt.seed = cfg.seed;
    res.ckpt.step = global_step;
    res.ckpt.diverged = res.diverged;
    res.ckpt.dec = dec;
    res.ckpt.dec_params.assign(dspan.begin(), dspan.end());
    res.ckpt.enc = enc;
    res.ckpt.enc_params.assign(espan.begin(), espan.end());
    res.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return res;
}

void write_train_log(std::ostream& os, const std::vector<LogRow>& log) {
    std::vector<double> v;
    v.reserve(log.size() * 7);
    for (const auto& r : log) {
        v.push_back(double(r.step));
        v.push_back(double(r.phase));
        v.push_back(r.total);
        v.push_back(r.compat);
        v.push_back(r.nll);
        v.push_back(r.dae);
        v.push_back(r.elbo);
    }
    os << "# columns: step,phase,total,compat,nll,dae,elbo\n";
    write_table(os, int(log.size()), 7, v);
}

EvalResult evaluate_run(const Checkpoint& ck, const RunConfig& cfg,
                        uint64_t eval_seed) {
    std::string why;
    if (!cfg.valid(&why)) throw ConfigError(why);
    const auto t0 = std::chrono::steady_clock::now();

    models::GaussRuntime p(ck.dec, ck.dec_params);
    models::FlowRuntime q(ck.enc, ck.enc_params);
    const int dz = ck.enc.d_z;

    EvalResult out;
    out.n_samples = cfg.n_eval_samples;
    out.samples.reserve(size_t(out.n_samples) * 2);
    long n_div = 0;
    auto gen_rng = make_rng(eval_seed, kGenStream);
    if (ck.method == "vae") {
        for (int i = 0; i < out.n_samples; ++i) {
            const auto x = samplers::ancestral(p, gen_rng);
            out.samples.insert(out.samples.end(), x.begin(), x.end());
        }
    } else {
        samplers::SgldConfig sc;
        sc.eps = cfg.sgld_eps;
        sc.n_steps = cfg.sgld_steps;
        std::vector<double> x0(2);
        for (int i = 0; i < out.n_samples; ++i) {
            x0[0] = cfg.init_std * gauss(gen_rng);
            x0[1] = cfg.init_std * gauss(gen_rng);
            const auto tr = samplers::sgld_x(p, q, x0, sc, gen_rng);
            if (tr.diverged) n_div++;
            const auto xf = tr.x_at(tr.steps_done);
            out.samples.insert(out.samples.end(), xf.begin(), xf.end());
        }
    }
    out.hist = histogram2d(out.samples, out.n_samples);
    const auto geo = reference_geometry(ck.dataset);
    const auto scores = score_generation(out.samples, out.n_samples, geo);

    // noise-free encoding of the training data, strided to at most ~2000
    const Dataset train = gen_dataset(ck.dataset, ck.n_train, ck.seed);
    const int stride = std::max(1, train.n / 2000);
    const std::vector<double> e0(size_t(dz), 0.0);
    for (int i = 0; i < train.n; i += stride) {
        const auto f = q.forward(train.row(i), e0);
        out.embedding.insert(out.embedding.end(), f.z.begin(), f.z.end());
        out.emb_labels.push_back(train.label[size_t(i)]);
        out.n_emb++;
    }
    const double sep = separation_ratio(out.embedding, out.n_emb, dz,
                                        out.emb_labels, train.n_classes);

    // k-draw likelihood bound on fresh points
    const Dataset test = gen_dataset(ck.dataset, cfg.n_nll_points,
                                     eval_seed + kNllPointsSeedOffset);
    PairConfig npc;
    npc.dec = ck.dec;
    npc.enc = ck.enc;
    npc.k_nll = cfg.k_nll_eval;
    npc.build_compat = false;
    npc.build_nll = true;
    PairLoss npl(npc);
    npl.set_params(ck.dec_params, ck.enc_params);
    std::vector<double> seeds(npl.seed_size());
    auto nll_rng = make_rng(eval_seed, kNllStream);
    double nll = 0.0;
    for (int i = 0; i < test.n; ++i) {
        npl.draw_seeds(seeds, nll_rng);
        nll += npl.eval(test.row(i), seeds, {}).nll;
    }
    nll /= double(test.n);

    out.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    out.metrics = json{{"dataset", ck.dataset},
                       {"method", ck.method},
                       {"seed", ck.seed},
                       {"eval_seed", eval_seed},
                       {"train_steps", ck.step},
                       {"diverged_training", ck.diverged},
                       {"n_samples", out.n_samples},
                       {"coverage", scores.coverage},
                       {"spill_fraction", scores.spill},
                       {"bridge_fraction", scores.bridge},
                       {"assignment_fractions", scores.assignment},
                       {"within_cluster_rms", scores.rms},
                       {"separation_ratio", sep},
                       {"nll_bound", nll},
                       {"n_diverged_chains", n_div},
                       {"hist_sum", long(out.hist.sum())},
                       {"wall_seconds", out.wall_seconds}};
    return out;
}

} // namespace cycond::bench
