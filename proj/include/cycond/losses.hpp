#pragma once
#include <cstdint>
#include <span>
#include <vector>

#include "cycond/graph.hpp"
#include "cycond/models.hpp"
#include "cycond/rng.hpp"

// Fitting criteria for a decoder/encoder pair.
//
// compatibility: for r(x, z) = log p(x|z) - log q(z|x), a pair of
// conditionals comes from one joint iff the cross second derivative
// d^2 r / dx dz^T vanishes identically.  The losses below penalize the
// squared norm of probe slices eta^T of that matrix, with the outer gradient
// taken either in z (pulled back through the transport Jacobian) or directly
// in the seed e of the reparameterized draw z = T(e|x); the two have the
// same zero set because the transport is invertible.
//
// likelihood: the pair assigns x the marginal 1 / E_{q(z|x)}[1 / p(x|z)]
// (average the reciprocal conditional density under the encoder), so the
// negative log-likelihood is estimated by logsumexp of -log p over k encoder
// draws minus log k.  No prior enters anywhere.
//
// All terms are built once as a per-sample tape program; evaluating binds an
// observation plus pre-drawn noise, and one reverse sweep accumulates
// parameter gradients of any weighted combination.

namespace cycond::losses {

using ad::Exec;
using ad::Graph;
using ad::Var;
using models::FlowSpec;
using models::GaussianConditional;

// where the outer gradient of the compatibility integrand lives
enum class CompatForm : uint8_t {
    SeedSpace,  // grad_e (eta^T grad_x r): cheap, same zero set
    LatentSpace // grad_z (eta^T grad_x r): the cross-Hessian norm itself
};

struct PairConfig {
    GaussianConditional dec;
    FlowSpec enc;
    int k_nll = 16; // encoder draws inside the likelihood estimator
    int k_dae = 1;  // encoder draws for reconstruction terms
    double beta = 1.0;
    CompatForm form = CompatForm::SeedSpace;
    bool build_compat = true;
    bool build_nll = true;
    bool build_dae = false;
    bool build_elbo = false;
};

struct TermWeights {
    double compat = 0.0, nll = 0.0, dae = 0.0, elbo = 0.0;
};
struct TermValues {
    double compat = 0.0, nll = 0.0, dae = 0.0, elbo = 0.0;
};

class PairLoss {
  public:
    explicit PairLoss(PairConfig cfg);
    using Weights = TermWeights;
    using Terms = TermValues;

    const PairConfig& config() const { return cfg_; }
    int d_x() const { return cfg_.enc.d_x(); }
    int d_z() const { return cfg_.enc.d_z; }
    size_t n_dec_params() const { return pdec_in_.size(); }
    size_t n_enc_params() const { return penc_in_.size(); }
    size_t n_params() const { return n_dec_params() + n_enc_params(); }
    size_t graph_size() const { return g_.size(); } // node-count diagnostics

    void set_params(std::span<const double> dec, std::span<const double> enc);

    // pre-drawn standard-normal noise: [compat seed][nll seeds][dae seeds]
    size_t seed_size() const;
    size_t compat_seed_offset() const { return 0; }
    size_t nll_seed_offset() const;
    size_t dae_seed_offset() const;
    void draw_seeds(std::span<double> seeds, Rng& rng) const;

    // Binds one observation and its noise, averages the compatibility term
    // over the probe rows (n_probes x d_x; one row for training, the basis
    // for the exact cross norm, random rows for a Hutchinson estimate), and,
    // when grad is nonempty, adds the weighted parameter gradient into grad
    // (decoder parameters first, then encoder).
    Terms eval(std::span<const double> x, std::span<const double> seeds,
               std::span<const double> probes, const Weights& w = {},
               std::span<double> grad = {});

  private:
    void accumulate(std::span<double> grad) const;
    PairConfig cfg_;
    Graph g_;
    std::vector<Var> x_in_, pdec_in_, penc_in_;
    std::vector<Var> ec_in_, eta_in_, enll_in_, edae_in_;
    Var compat_{}, nll_{}, dae_{}, elbo_{};
    Exec ex_{g_};
    bool params_set_ = false;
};

// probe constructors
std::vector<double> basis_probes(int d);
std::vector<double> rademacher_probes(int d, int n, Rng& rng);

// ---- batch-mean conveniences (values only, fresh noise) ---------------------

struct ModelPair {
    GaussianConditional dec;
    std::vector<double> dec_params;
    FlowSpec enc;
    std::vector<double> enc_params;
};

// xs is row-major n x d_x.  Each point gets one fresh encoder draw; the
// exact form sums basis probes, the others average random probes.
double compat_loss_exact(const ModelPair& m, std::span<const double> xs,
                         int n, Rng& rng);
double compat_loss_hutchinson(const ModelPair& m, std::span<const double> xs,
                              int n, int n_probes, Rng& rng);
double compat_loss_simplified(const ModelPair& m, std::span<const double> xs,
                              int n, int n_probes, Rng& rng);
double nll_loss(const ModelPair& m, std::span<const double> xs, int n, int k,
                Rng& rng);
double dae_loss(const ModelPair& m, std::span<const double> xs, int n, int k,
                Rng& rng);
double elbo_loss(const ModelPair& m, std::span<const double> xs, int n, int k,
                 double beta, Rng& rng);

struct LossWeights {
    double w_compat = 1e-5;
    double w_nll = 1.0;
};

// w_compat * seed-space compatibility + w_nll * likelihood term
double cygen_objective(const ModelPair& m, std::span<const double> xs, int n,
                       const LossWeights& w, int k_nll, Rng& rng);

} // namespace cycond::losses
