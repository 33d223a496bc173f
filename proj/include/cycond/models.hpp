#pragma once
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cycond/graph.hpp"
#include "cycond/rng.hpp"

// Conditional models for the continuous lab: a Gaussian decoder with an MLP
// mean, and an amortized invertible-residual encoder ("flow") whose layer
// matrices are built from Householder reflections so the layer log-Jacobian
// reduces to a product over coordinates.
//
// Everything is emitted onto the shared autodiff tape (graph builders), so
// losses can differentiate through any of it, including through gradients.
// The *Runtime classes wrap a prebuilt graph for plain numeric use by
// samplers and tests.

namespace cycond::models {

using ad::Exec;
using ad::Graph;
using ad::Var;

// ---- multilayer perceptrons ------------------------------------------------

enum class Act : uint8_t { Identity, Tanh, Sigmoid };

struct MlpSpec {
    std::vector<int> widths; // [d_in, hidden..., d_out]
    std::vector<Act> acts;   // one per weight layer

    int n_layers() const { return int(widths.size()) - 1; }
    int d_in() const { return widths.front(); }
    int d_out() const { return widths.back(); }
    int param_count() const;
    bool valid() const;
};

// widths plus a uniform hidden activation and an output activation
MlpSpec make_mlp(std::vector<int> widths, Act hidden, Act out);

// Uniform(-limit, limit) weights with limit = scale * sqrt(6 / (fan_in +
// fan_out)) per layer; zero biases.
std::vector<double> glorot_init(const MlpSpec& spec, Rng& rng,
                                double scale = 1.0);

// Emits the network onto the tape.  Parameter layout per layer: weights
// row-major (out x in), then biases (out).
std::vector<Var> mlp_apply(Graph& g, const MlpSpec& spec,
                           std::span<const Var> in,
                           std::span<const Var> params);

// named segments of the flat parameter vector, for checkpoints
struct ParamBlock {
    std::string name;
    std::vector<int> shape;
    size_t offset = 0;
    size_t size = 0;
};

std::vector<ParamBlock> mlp_param_blocks(const MlpSpec& spec,
                                         const std::string& prefix);

// ---- Gaussian decoder p(x | z) ---------------------------------------------

struct GaussianConditional {
    MlpSpec mean_net;     // z -> mean of x
    double sigma2 = 0.01; // isotropic variance, fixed (not trained)
};

struct GaussNodes {
    std::vector<Var> mean;
    Var log_density; // log N(x; mean(z), sigma2 I)
};

GaussNodes gauss_apply(Graph& g, const GaussianConditional& spec,
                       std::span<const Var> params, std::span<const Var> x,
                       std::span<const Var> z);

// ---- flow encoder q(z | x) -------------------------------------------------
//
// z_0 = mu(x) + sigma(x) * e with e ~ N(0, I), then n_layers residual steps
//   z_t = z_{t-1} + A_t tanh(B_t z_{t-1} + b_t),
// where A = Q R and B = Rt Q^T with Q a product of Householder reflections
// and R, Rt upper triangular.  Because Q^T Q = I, the step determinant is
//   det = prod_i (1 + tanh'(pre_i) Rt_ii R_ii),
// and the diagonals of R and Rt are tanh-squashed into (-1, 1), which keeps
// every factor positive: the map is invertible for any parameter values.
// All per-layer parameters (reflection vectors, triangles, offsets) and the
// base mu/sigma are affine heads on a conditioning network applied to x.

struct FlowSpec {
    MlpSpec cond_net;       // x -> shared conditioning features
    int d_z = 2;
    int n_layers = 32;      // residual layers (0 = plain Gaussian reparam)
    int n_reflections = 2;  // Householder factors per layer, in [1, d_z]

    bool valid() const;
    int d_x() const { return cond_net.d_in(); }
    int feat_dim() const { return cond_net.d_out(); }
    int tri() const { return d_z * (d_z - 1) / 2; }
    // per layer: reflection vectors, R diag+upper, Rt diag+upper, offset
    int layer_head_dim() const {
        return n_reflections * d_z + 2 * (d_z + tri()) + d_z;
    }
    int head_dim() const { return 2 * d_z + n_layers * layer_head_dim(); }
    int param_count() const {
        return cond_net.param_count() + head_dim() * (feat_dim() + 1);
    }
};

// Conditioning-net weights, then head weights (head_dim x feat_dim,
// row-major), then head biases.  Heads start near zero so the flow opens at
// the identity; sigma's bias makes softplus(bias) = 1; reflection-vector
// biases are random unit vectors (a zero reflection vector is degenerate).
std::vector<double> flow_init(const FlowSpec& spec, Rng& rng);

std::vector<ParamBlock> flow_param_blocks(const FlowSpec& spec,
                                          const std::string& prefix);

// x-dependent per-layer matrices, shared by every seed draw for that x
struct FlowLayerNodes {
    std::vector<Var> Q;     // d x d product of reflections (orthogonal)
    std::vector<Var> A;     // Q R
    std::vector<Var> B;     // Rt Q^T
    std::vector<Var> b;     // offset
    std::vector<Var> cdiag; // R_ii * Rt_ii (log-det factors)
    std::vector<Var> AB;    // sum-free products A_ik B_kj, only if requested
};

struct FlowTrunk {
    FlowSpec spec;
    std::vector<Var> feat;
    std::vector<Var> base_mu;
    std::vector<Var> base_sigma; // softplus head, > 0
    Var sum_log_sigma;           // x-only part of the log-determinant
    std::vector<FlowLayerNodes> layers;
    bool with_jacobian = false;
};

FlowTrunk flow_trunk(Graph& g, const FlowSpec& spec,
                     std::span<const Var> params, std::span<const Var> x,
                     bool with_jacobian = false);

struct FlowNodes {
    std::vector<Var> z; // transported sample
    Var log_det;        // log |d z / d e| including the base sigma scale
    Var log_q;          // log q(z|x) at the transported point
    std::vector<Var> jac; // dz/de, d x d row-major; empty unless requested
};

// Applies the trunk to one seed draw.  want_jacobian needs a trunk built
// with with_jacobian = true; the Jacobian is accumulated layer by layer in
// closed form rather than by differentiating the tape, which keeps the node
// count small enough to differentiate the result again.
FlowNodes flow_call(Graph& g, const FlowTrunk& trunk, std::span<const Var> e,
                    bool want_jacobian = false);

FlowNodes flow_apply(Graph& g, const FlowSpec& spec,
                     std::span<const Var> params, std::span<const Var> x,
                     std::span<const Var> e, bool want_jacobian = false);

// ---- numeric runtimes -------------------------------------------------------

class GaussRuntime {
  public:
    GaussRuntime(GaussianConditional spec, std::vector<double> params);

    const GaussianConditional& spec() const { return spec_; }
    std::span<const double> params() const { return params_; }
    void set_params(std::span<const double> p);

    std::vector<double> mean(std::span<const double> z);
    double log_density(std::span<const double> x, std::span<const double> z);
    // closed form: (mean(z) - x) / sigma2
    std::vector<double> grad_x_logp(std::span<const double> x,
                                    std::span<const double> z);
    std::vector<double> grad_z_logp(std::span<const double> x,
                                    std::span<const double> z);
    std::vector<double> sample(std::span<const double> z, Rng& rng);

  private:
    void run(std::span<const double> z);
    GaussianConditional spec_;
    std::vector<double> params_;
    Graph g_;
    std::vector<Var> z_in_, p_in_, mean_;
    Exec ex_;
};

class FlowRuntime {
  public:
    FlowRuntime(FlowSpec spec, std::vector<double> params);

    const FlowSpec& spec() const { return spec_; }
    std::span<const double> params() const { return params_; }
    void set_params(std::span<const double> p);

    struct Fwd {
        std::vector<double> z;
        double log_det = 0.0;
        double log_q = 0.0;
    };
    Fwd forward(std::span<const double> x, std::span<const double> e);
    std::vector<double> sample(std::span<const double> x, Rng& rng,
                               std::vector<double>* e_out = nullptr);

    // dz/de (row-major), by one reverse sweep per output coordinate
    std::vector<double> jacobian_e(std::span<const double> x,
                                   std::span<const double> e);

    // gradient of log q(z|x) in z at z = transport(e|x): the seed-space
    // gradient pulled back through the transpose-inverse of dz/de
    std::vector<double> grad_z_logq(std::span<const double> x,
                                    std::span<const double> e);

    // gradient of log q(z|x) in x at fixed z: the direct x-gradient minus
    // the correction through the seed motion that keeps z pinned; one
    // reverse sweep seeded with both log q and -grad_z terms
    std::vector<double> grad_x_logq(std::span<const double> x,
                                    std::span<const double> e);

    // damped Newton solve of transport(e|x) = z.  e_inout carries the
    // initial guess and, on success, the solution.
    bool invert(std::span<const double> x, std::span<const double> z,
                std::span<double> e_inout, double tol = 1e-10,
                int max_iter = 60);

  private:
    void run(std::span<const double> x, std::span<const double> e);
    std::vector<double> jac_from_exec();
    FlowSpec spec_;
    std::vector<double> params_;
    Graph g_;
    std::vector<Var> x_in_, e_in_, p_in_;
    FlowNodes out_;
    Exec ex_;
};

} // namespace cycond::models
