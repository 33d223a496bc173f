#pragma once
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cycond/finite.hpp"
#include "cycond/models.hpp"
#include "cycond/rng.hpp"

// Chain samplers driven purely by the two conditionals: Langevin dynamics on
// data space (latent refreshed from the encoder each step) or on latent space
// (data refreshed from the decoder each step), the alternating Gibbs kernel,
// and ancestral draws for prior-based baselines.
//
// The key identity: when the pair (p(x|z), q(z|x)) admits a joint, the drift
//     d(x) = grad_x [ log p(x|z) - log q(z|x) ]   at fixed z
// equals the score of the data marginal for EVERY z -- the z-dependent parts
// cancel -- so Langevin on x targets the model's own data distribution
// without a prior ever being written down.  Symmetrically, the z-drift
// grad_z [ log q - log p ] is the score of the implied latent marginal.

namespace cycond::samplers {

struct SgldConfig {
    double eps = 3e-4;         // step size
    int n_steps = 100;         // iterations
    double noise_scale = 1.0;  // multiplier on sqrt(2 eps); 1 = exact dynamics
    double diverge_norm = 1e6; // abort when the moving state norm exceeds this

    bool valid(std::string* why = nullptr) const;
};

// One chain's recorded path.  Row t holds (x_t, z_t); row 0 is the initial
// state with the not-yet-sampled slot zero-filled; rows 1..steps_done hold
// the state after each update together with the auxiliary draw that produced
// it (for the x-chain: the latent whose drift moved x; for the Gibbs chain:
// the latent the new x was decoded from).
struct Trajectory {
    int d_x = 0;
    int d_z = 0;
    long steps_done = 0;
    bool diverged = false;
    std::string note; // diagnostic, nonempty iff diverged
    std::vector<double> rows; // (steps_done + 1) rows of (d_x + d_z), row-major

    long n_rows() const { return steps_done + 1; }
    std::span<const double> x_at(long t) const;
    std::span<const double> z_at(long t) const;
};

// one Euler-Maruyama update: state += eps * drift + noise_scale *
// sqrt(2 eps) * standard normal draws (one per coordinate, drawn in order)
void langevin_step(std::span<double> state, std::span<const double> drift,
                   double eps, double noise_scale, Rng& rng);

// drift of the x-chain at fixed z = transport(e|x); see the header comment
std::vector<double> marginal_score_x(models::GaussRuntime& p,
                                     models::FlowRuntime& q,
                                     std::span<const double> x,
                                     std::span<const double> e);

// drift of the z-chain at z = transport(e|x), holding x fixed
std::vector<double> prior_score_z(models::GaussRuntime& p,
                                  models::FlowRuntime& q,
                                  std::span<const double> x,
                                  std::span<const double> e);

// log p(x|z) - log q(z|x) with z freshly drawn from the encoder: an
// unnormalised marginal log-density of x, up to a z-dependent additive term
// that drops from every x-gradient
double unnorm_logdensity_x(models::GaussRuntime& p, models::FlowRuntime& q,
                           std::span<const double> x, Rng& rng);

// Langevin on x; the encoder latent is resampled every step.  Aborts with
// the divergence flag set when the state norm passes cfg.diverge_norm or
// turns non-finite.
Trajectory sgld_x(models::GaussRuntime& p, models::FlowRuntime& q,
                  std::span<const double> x0, const SgldConfig& cfg, Rng& rng);

// Langevin on z; the data point is resampled from the decoder every step.
// The transport is inverted at each fresh x by Newton, warm-started from the
// previous seed with one cold restart; a failed inversion aborts the chain
// with the divergence flag set.
Trajectory sgld_z(models::GaussRuntime& p, models::FlowRuntime& q,
                  std::span<const double> z0, const SgldConfig& cfg, Rng& rng);

// alternating kernel: z' ~ q(.|x), x' ~ p(.|z'); row t >= 1 records (x', z')
Trajectory gibbs_chain(models::GaussRuntime& p, models::FlowRuntime& q,
                       std::span<const double> x0, int n_steps, Rng& rng);

// z ~ standard normal, x ~ p(.|z); the latent is exported when asked for
std::vector<double> ancestral(models::GaussRuntime& p, Rng& rng,
                              std::vector<double>* z_out = nullptr);

// empirical joint occupancy of the finite alternating chain: from state x,
// draw z' ~ q(.|x) then x' ~ p(.|z') and count the pair (x', z'), n_steps
// times; returns counts / n_steps, comparable to the exact stationary joint
finite::JointMatrix gibbs_occupancy(const finite::FiniteCond& p,
                                    const finite::FiniteCond& q, int x0,
                                    long n_steps, Rng& rng);

// (step, x..., z...) rows under a named header line
void write_csv(std::ostream& os, const Trajectory& t);

} // namespace cycond::samplers
