#include "support/fixtures.hpp"

#include <algorithm>
#include <cmath>

namespace testsupport {

using cycond::uniform;

JointMatrix random_positive_joint(int n_x, int n_z, Rng& rng) {
    JointMatrix pi(n_x, n_z);
    double total = 0.0;
    for (double& v : pi.p) {
        v = 0.05 + uniform(rng);
        total += v;
    }
    for (double& v : pi.p) v /= total;
    return pi;
}

JointMatrix block_diagonal_joint(int n_x, int n_z, Rng& rng) {
    const int ax = std::max(1, n_x / 2), az = std::max(1, n_z / 2);
    JointMatrix pi(n_x, n_z);
    double total = 0.0;
    for (int i = 0; i < n_x; ++i)
        for (int j = 0; j < n_z; ++j) {
            bool first = i < ax && j < az;
            bool second = i >= ax && j >= az;
            if (!first && !second) continue;
            double v = 0.05 + uniform(rng);
            pi.at(i, j) = v;
            total += v;
        }
    for (double& v : pi.p) v /= total;
    return pi;
}

std::pair<FiniteCond, FiniteCond> conditionals_from_joint(const JointMatrix& pi) {
    const int n_x = pi.n_x, n_z = pi.n_z;
    FiniteCond p(n_x, n_z), q(n_z, n_x);
    for (int j = 0; j < n_z; ++j) {
        double s = 0.0;
        for (int i = 0; i < n_x; ++i) s += pi.at(i, j);
        if (s <= 0.0) continue;
        for (int i = 0; i < n_x; ++i) p.at(i, j) = pi.at(i, j) / s;
    }
    for (int i = 0; i < n_x; ++i) {
        double s = 0.0;
        for (int j = 0; j < n_z; ++j) s += pi.at(i, j);
        if (s <= 0.0) continue;
        for (int j = 0; j < n_z; ++j) q.at(j, i) = pi.at(i, j) / s;
    }
    return {p, q};
}

void perturb_conditional(FiniteCond& c, Rng& rng) {
    const int r = std::min(int(uniform(rng) * c.n_rows), c.n_rows - 1);
    const int col = std::min(int(uniform(rng) * c.n_cols), c.n_cols - 1);
    c.at(r, col) += 0.1;
    double s = 0.0;
    for (int i = 0; i < c.n_rows; ++i) s += c.at(i, col);
    for (int i = 0; i < c.n_rows; ++i) c.at(i, col) /= s;
}

AffinePair make_affine_pair(double theta, const double* wd_override,
                            const double* we_override) {
    namespace models = cycond::models;
    AffinePair p;
    const double c = std::cos(theta), s = std::sin(theta);
    p.wd = {c, -s, s, c};
    if (wd_override) std::copy(wd_override, wd_override + 4, p.wd.begin());
    p.bd = {0.3, -0.2};
    p.we = {0.2 * c, 0.2 * s, -0.2 * s, 0.2 * c}; // 0.2 Q^T
    if (we_override) std::copy(we_override, we_override + 4, p.we.begin());
    p.be = {-(p.we[0] * p.bd[0] + p.we[1] * p.bd[1]),
            -(p.we[2] * p.bd[0] + p.we[3] * p.bd[1])};

    p.dec.mean_net =
        models::make_mlp({2, 2}, models::Act::Identity, models::Act::Identity);
    p.dec.sigma2 = p.s2d;
    p.dec_params = {p.wd[0], p.wd[1], p.wd[2], p.wd[3], p.bd[0], p.bd[1]};

    p.enc.cond_net =
        models::make_mlp({2, 2}, models::Act::Identity, models::Act::Identity);
    p.enc.d_z = 2;
    p.enc.n_layers = 0;
    p.enc.n_reflections = 1;
    const double sraw = std::log(std::exp(std::sqrt(p.s2e)) - 1.0);
    p.enc_params = {1.0, 0.0, 0.0, 1.0, 0.0, 0.0,      // cond net = identity
                    p.we[0], p.we[1], p.we[2], p.we[3], // mean head rows
                    0.0, 0.0, 0.0, 0.0,                 // sigma head rows
                    p.be[0], p.be[1], sraw, sraw};
    return p;
}

double cross_frob2(std::span<const double> wd, std::span<const double> we,
                   double s2d, double s2e) {
    double acc = 0.0;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            const double c = wd[size_t(i) * 2 + size_t(j)] / s2d -
                             we[size_t(j) * 2 + size_t(i)] / s2e;
            acc += c * c;
        }
    return acc;
}

double affine_marginal_nll(std::span<const double> bd, double s2d,
                           std::span<const double> x) {
    constexpr double kTwoPi = 6.283185307179586476925287;
    const double v = 1.0 + s2d;
    const double d0 = x[0] - bd[0], d1 = x[1] - bd[1];
    return std::log(kTwoPi * v) + (d0 * d0 + d1 * d1) / (2.0 * v);
}

FiniteCond random_conditional(int n_rows, int n_cols, Rng& rng) {
    FiniteCond c(n_rows, n_cols);
    for (int j = 0; j < n_cols; ++j) {
        double s = 0.0;
        for (int i = 0; i < n_rows; ++i) {
            double v = 0.05 + uniform(rng);
            c.at(i, j) = v;
            s += v;
        }
        for (int i = 0; i < n_rows; ++i) c.at(i, j) /= s;
    }
    return c;
}

} // namespace testsupport
