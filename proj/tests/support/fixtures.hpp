#pragma once
#include <array>
#include <span>
#include <utility>
#include <vector>

#include "cycond/finite.hpp"
#include "cycond/models.hpp"
#include "cycond/rng.hpp"

// Shared generators for finite-pair tests (joints with known structure and
// the conditionals they induce) and the canonical linear-Gaussian model pair
// with closed-form everything.

namespace testsupport {

using cycond::Rng;
using cycond::finite::FiniteCond;
using cycond::finite::JointMatrix;

// strictly positive joint, entries uniform in [0.05, 1.05) then normalized
JointMatrix random_positive_joint(int n_x, int n_z, Rng& rng);

// two strictly positive diagonal blocks (split point roughly half), zero
// elsewhere; requires n_x, n_z >= 2
JointMatrix block_diagonal_joint(int n_x, int n_z, Rng& rng);

// p(x|z) = pi(x,z)/col-sum, q(z|x) = pi(x,z)/row-sum; zero sums give zero
// conditionals
std::pair<FiniteCond, FiniteCond> conditionals_from_joint(const JointMatrix& pi);

// add 0.1 to one uniformly chosen decoder cell, renormalize its column
void perturb_conditional(FiniteCond& c, Rng& rng);

// independent column-stochastic table with strictly positive entries
FiniteCond random_conditional(int n_rows, int n_cols, Rng& rng);

// ---- linear-Gaussian pair with closed forms ---------------------------------
//
// decoder  p(x|z) = N(x; Wd z + bd, s2d I)
// encoder  q(z|x) = N(z; We x + be, s2e I)  (flow with zero layers)
//
// The defaults Wd = Q (rotation by theta), s2d = 4, We = 0.2 Q^T,
// be = -We bd, s2e = 4/5 are the exact conditional factorization of the
// joint z ~ N(0, I), x = Q z + bd + noise(s2d): the data marginal is
// N(bd, 5 I) and the implied latent marginal is N(0, I).  The decoder
// spread exceeds the signal scale, so the reciprocal-density likelihood
// estimator has finite variance on this pair.  Overriding Wd or We makes
// the pair incompatible with a known cross second derivative
// C = Wd / s2d - We^T / s2e.
struct AffinePair {
    cycond::models::GaussianConditional dec;
    std::vector<double> dec_params;
    cycond::models::FlowSpec enc;
    std::vector<double> enc_params;
    std::array<double, 4> wd{}, we{};
    std::array<double, 2> bd{}, be{};
    double s2d = 4.0, s2e = 0.8;
};

AffinePair make_affine_pair(double theta, const double* wd_override = nullptr,
                            const double* we_override = nullptr);

// || Wd / s2d - We^T / s2e ||_F^2 for 2x2 row-major blocks
double cross_frob2(std::span<const double> wd, std::span<const double> we,
                   double s2d, double s2e);

// -log N(x; bd, (1 + s2d) I) in two dimensions
double affine_marginal_nll(std::span<const double> bd, double s2d,
                           std::span<const double> x);

} // namespace testsupport
