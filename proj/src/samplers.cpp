#include "cycond/samplers.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace cycond::samplers {

namespace {

double sq_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

// shared scaffolding for the chain builders
struct Recorder {
    Trajectory t;
    explicit Recorder(int d_x, int d_z) {
        t.d_x = d_x;
        t.d_z = d_z;
    }
    void push(std::span<const double> x, std::span<const double> z) {
        t.rows.insert(t.rows.end(), x.begin(), x.end());
        t.rows.insert(t.rows.end(), z.begin(), z.end());
    }
    void push_initial_x(std::span<const double> x) {
        t.rows.insert(t.rows.end(), x.begin(), x.end());
        t.rows.insert(t.rows.end(), size_t(t.d_z), 0.0);
    }
    void push_initial_z(std::span<const double> z) {
        t.rows.insert(t.rows.end(), size_t(t.d_x), 0.0);
        t.rows.insert(t.rows.end(), z.begin(), z.end());
    }
    // true if the chain should stop: norm blowup or non-finite entries
    bool guard(std::span<const double> state, double limit, const char* tag,
               long step) {
        bool finite = all_finite(state);
        double n = finite ? std::sqrt(sq_norm(state)) : 0.0;
        if (finite && n <= limit) return false;
        t.diverged = true;
        t.note = std::string(tag) + " chain diverged at step " +
                 std::to_string(step) +
                 (finite ? (": state norm " + std::to_string(n))
                         : ": non-finite state");
        return true;
    }
};

void check_cfg(const SgldConfig& cfg) {
    std::string why;
    if (!cfg.valid(&why)) throw std::invalid_argument(why);
}

} // namespace

bool SgldConfig::valid(std::string* why) const {
    auto fail = [&](const char* m) {
        if (why) *why = m;
        return false;
    };
    if (!(eps > 0.0)) return fail("step size must be positive");
    if (n_steps < 1) return fail("need at least one step");
    if (!(noise_scale >= 0.0)) return fail("noise scale must be >= 0");
    if (!(diverge_norm > 0.0)) return fail("divergence threshold must be positive");
    return true;
}

std::span<const double> Trajectory::x_at(long t) const {
    size_t w = size_t(d_x) + size_t(d_z);
    return {rows.data() + size_t(t) * w, size_t(d_x)};
}

std::span<const double> Trajectory::z_at(long t) const {
    size_t w = size_t(d_x) + size_t(d_z);
    return {rows.data() + size_t(t) * w + size_t(d_x), size_t(d_z)};
}

void langevin_step(std::span<double> state, std::span<const double> drift,
                   double eps, double noise_scale, Rng& rng) {
    if (state.size() != drift.size())
        throw std::invalid_argument("drift size mismatch");
    const double amp = noise_scale * std::sqrt(2.0 * eps);
    for (size_t i = 0; i < state.size(); ++i)
        state[i] += eps * drift[i] + amp * gauss(rng);
}

std::vector<double> marginal_score_x(models::GaussRuntime& p,
                                     models::FlowRuntime& q,
                                     std::span<const double> x,
                                     std::span<const double> e) {
    auto fwd = q.forward(x, e);
    auto g = p.grad_x_logp(x, fwd.z);
    auto gq = q.grad_x_logq(x, e);
    for (size_t i = 0; i < g.size(); ++i) g[i] -= gq[i];
    return g;
}

std::vector<double> prior_score_z(models::GaussRuntime& p,
                                  models::FlowRuntime& q,
                                  std::span<const double> x,
                                  std::span<const double> e) {
    auto fwd = q.forward(x, e);
    auto g = q.grad_z_logq(x, e);
    auto gp = p.grad_z_logp(x, fwd.z);
    for (size_t i = 0; i < g.size(); ++i) g[i] -= gp[i];
    return g;
}

double unnorm_logdensity_x(models::GaussRuntime& p, models::FlowRuntime& q,
                           std::span<const double> x, Rng& rng) {
    std::vector<double> e;
    auto z = q.sample(x, rng, &e);
    auto fwd = q.forward(x, e);
    return p.log_density(x, z) - fwd.log_q;
}

Trajectory sgld_x(models::GaussRuntime& p, models::FlowRuntime& q,
                  std::span<const double> x0, const SgldConfig& cfg, Rng& rng) {
    check_cfg(cfg);
    const int dx = q.spec().d_x();
    const int dz = q.spec().d_z;
    if (int(x0.size()) != dx)
        throw std::invalid_argument("initial point size mismatch");

    Recorder rec(dx, dz);
    rec.t.rows.reserve(size_t(cfg.n_steps + 1) * size_t(dx + dz));
    rec.push_initial_x(x0);

    std::vector<double> x(x0.begin(), x0.end());
    std::vector<double> e;
    for (int t = 1; t <= cfg.n_steps; ++t) {
        auto z = q.sample(x, rng, &e);
        auto gp = p.grad_x_logp(x, z);
        auto gq = q.grad_x_logq(x, e);
        for (int i = 0; i < dx; ++i) gp[size_t(i)] -= gq[size_t(i)];
        langevin_step(x, gp, cfg.eps, cfg.noise_scale, rng);
        rec.push(x, z);
        rec.t.steps_done = t;
        if (rec.guard(x, cfg.diverge_norm, "x", t)) break;
    }
    return std::move(rec.t);
}

Trajectory sgld_z(models::GaussRuntime& p, models::FlowRuntime& q,
                  std::span<const double> z0, const SgldConfig& cfg, Rng& rng) {
    check_cfg(cfg);
    const int dx = q.spec().d_x();
    const int dz = q.spec().d_z;
    if (int(z0.size()) != dz)
        throw std::invalid_argument("initial point size mismatch");

    Recorder rec(dx, dz);
    rec.t.rows.reserve(size_t(cfg.n_steps + 1) * size_t(dx + dz));
    rec.push_initial_z(z0);

    std::vector<double> z(z0.begin(), z0.end());
    std::vector<double> e(size_t(dz), 0.0); // warm-started transport seed
    for (int t = 1; t <= cfg.n_steps; ++t) {
        auto x = p.sample(z, rng);
        if (!q.invert(x, z, e)) {
            std::fill(e.begin(), e.end(), 0.0); // cold restart
            if (!q.invert(x, z, e)) {
                rec.t.diverged = true;
                rec.t.note = "z chain aborted at step " + std::to_string(t) +
                             ": transport inversion failed";
                break;
            }
        }
        auto gq = q.grad_z_logq(x, e);
        auto gp = p.grad_z_logp(x, z);
        for (int i = 0; i < dz; ++i) gq[size_t(i)] -= gp[size_t(i)];
        langevin_step(z, gq, cfg.eps, cfg.noise_scale, rng);
        rec.push(x, z);
        rec.t.steps_done = t;
        if (rec.guard(z, cfg.diverge_norm, "z", t)) break;
    }
    return std::move(rec.t);
}

Trajectory gibbs_chain(models::GaussRuntime& p, models::FlowRuntime& q,
                       std::span<const double> x0, int n_steps, Rng& rng) {
    if (n_steps < 1) throw std::invalid_argument("need at least one step");
    const int dx = q.spec().d_x();
    const int dz = q.spec().d_z;
    if (int(x0.size()) != dx)
        throw std::invalid_argument("initial point size mismatch");

    Recorder rec(dx, dz);
    rec.t.rows.reserve(size_t(n_steps + 1) * size_t(dx + dz));
    rec.push_initial_x(x0);

    std::vector<double> x(x0.begin(), x0.end());
    for (int t = 1; t <= n_steps; ++t) {
        auto z = q.sample(x, rng);
        x = p.sample(z, rng);
        rec.push(x, z);
        rec.t.steps_done = t;
    }
    return std::move(rec.t);
}

std::vector<double> ancestral(models::GaussRuntime& p, Rng& rng,
                              std::vector<double>* z_out) {
    const int dz = p.spec().mean_net.d_in();
    std::vector<double> z(static_cast<size_t>(dz));
    for (auto& v : z) v = gauss(rng);
    auto x = p.sample(z, rng);
    if (z_out) *z_out = std::move(z);
    return x;
}

finite::JointMatrix gibbs_occupancy(const finite::FiniteCond& p,
                                    const finite::FiniteCond& q, int x0,
                                    long n_steps, Rng& rng) {
    if (x0 < 0 || x0 >= q.n_cols)
        throw std::invalid_argument("initial state out of range");
    if (n_steps < 1) throw std::invalid_argument("need at least one step");
    if (p.n_cols != q.n_rows || q.n_cols != p.n_rows)
        throw std::invalid_argument("conditional shapes do not pair up");

    finite::JointMatrix occ(p.n_rows, q.n_rows);
    int x = x0;
    for (long t = 0; t < n_steps; ++t) {
        int z = finite::sample_column(q, x, rng);
        x = finite::sample_column(p, z, rng);
        occ.at(x, z) += 1.0;
    }
    for (auto& v : occ.p) v /= double(n_steps);
    return occ;
}

void write_csv(std::ostream& os, const Trajectory& t) {
    const auto saved = os.precision(17);
    os << "step";
    for (int i = 0; i < t.d_x; ++i) os << ",x" << i;
    for (int j = 0; j < t.d_z; ++j) os << ",z" << j;
    os << "\n";
    for (long r = 0; r < t.n_rows(); ++r) {
        os << r;
        auto x = t.x_at(r);
        auto z = t.z_at(r);
        for (double v : x) os << "," << v;
        for (double v : z) os << "," << v;
        os << "\n";
    }
    os.precision(saved);
}

} // namespace cycond::samplers
