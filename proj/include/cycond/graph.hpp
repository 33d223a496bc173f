#pragma once
#include <cstdint>
#include <span>
#include <vector>

#include "cycond/rng.hpp"

// Reverse-mode tape with first-class gradient nodes.
//
// A Graph is an append-only list of scalar nodes.  Ordinary arithmetic
// appends compute nodes; gradient() and jvp() append *more* nodes that
// evaluate to derivatives, so derivative expressions can be differentiated
// again (grad-of-grad) or swept numerically like any other node.
//
// Values live outside the topology in an Exec buffer, so one graph can be
// rebound to fresh inputs and re-run many times (and shared across threads,
// each with its own Exec).

namespace cycond::ad {

enum class Op : uint8_t {
    Const,
    Input,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    Log1p,
    Tanh,
    Sigmoid,
    // n-ary fused ops; arg layouts documented at the builders
    Affine,    // bias + sum_i w_i * u_i          args: [bias, w0,u0, w1,u1, ...]
    Dot,       // sum_i a_i * b_i                 args: [a0,b0, a1,b1, ...]
    Sum,       // sum_i a_i                       args: [a0, a1, ...]
    LogSumExp, // log sum_i exp(a_i)              args: [a0, a1, ...]
};

struct Var {
    uint32_t id = UINT32_MAX;
    bool valid() const { return id != UINT32_MAX; }
};

class Graph;

// per-run value/adjoint buffers (one per thread; topology stays shared)
class Exec {
  public:
    explicit Exec(const Graph& g);
    void sync(const Graph& g); // resize after the graph has grown
    void bind(Var v, double x) { val[v.id] = x; }
    void bind(std::span<const Var> vs, std::span<const double> xs) {
        for (size_t i = 0; i < vs.size(); ++i) val[vs[i].id] = xs[i];
    }
    double value(Var v) const { return val[v.id]; }
    double adjoint(Var v) const { return adj[v.id]; }

    std::vector<double> val;
    std::vector<double> adj;
};

class Graph {
  public:
    Graph();

    // leaf nodes
    Var constant(double c);
    Var input(double initial = 0.0);
    std::vector<Var> inputs(size_t n, double initial = 0.0);
    Var zero() const { return zero_; }
    Var one() const { return one_; }

    // scalar ops
    Var add(Var a, Var b) { return push2(Op::Add, a, b); }
    Var sub(Var a, Var b) { return push2(Op::Sub, a, b); }
    Var mul(Var a, Var b) { return push2(Op::Mul, a, b); }
    Var div(Var a, Var b) { return push2(Op::Div, a, b); }
    Var neg(Var a) { return push1(Op::Neg, a); }
    Var exp(Var a) { return push1(Op::Exp, a); }
    Var log(Var a) { return push1(Op::Log, a); }
    Var log1p(Var a) { return push1(Op::Log1p, a); }
    Var tanh(Var a) { return push1(Op::Tanh, a); }
    Var sigmoid(Var a) { return push1(Op::Sigmoid, a); }

    // fused n-ary ops
    Var affine(Var bias, std::span<const Var> w, std::span<const Var> u);
    Var dot(std::span<const Var> a, std::span<const Var> b);
    Var sum(std::span<const Var> xs);
    Var logsumexp(std::span<const Var> xs);

    // composites
    Var softplus(Var x); // log(1 + e^x), built as logsumexp(0, x)
    Var square(Var x) { return mul(x, x); }

    size_t size() const { return op_.size(); }
    Op opcode(Var v) const { return op_[v.id]; }
    std::span<const uint32_t> parents(uint32_t id) const {
        return {args_.data() + arg_off_[id], arg_cnt_[id]};
    }
    const std::vector<double>& base_values() const { return base_val_; }

    // ---- numeric execution ----
    void forward(Exec& ex) const;
    // adjoints of every node w.r.t. sum of seeded outputs; seeds are
    // (node, weight) pairs
    void backward(Exec& ex, std::span<const std::pair<Var, double>> seeds) const;
    void backward(Exec& ex, Var f) const {
        const std::pair<Var, double> s[1] = {{f, 1.0}};
        backward(ex, s);
    }

    // ---- symbolic derivatives (append nodes, return handles) ----
    // reverse sweep: d f / d wrt_i as graph nodes
    std::vector<Var> gradient(Var f, std::span<const Var> wrt);
    // forward sweep: directional derivative of each output along the given
    // input tangents; seeds are (input var, tangent var) pairs
    std::vector<Var> jvp(std::span<const Var> outputs,
                         std::span<const std::pair<Var, Var>> seeds);

  private:
    Var push0(Op o);
    Var push1(Op o, Var a);
    Var push2(Op o, Var a, Var b);
    Var pushn(Op o, std::span<const uint32_t> args);

    std::vector<Op> op_;
    std::vector<uint32_t> arg_off_;
    std::vector<uint32_t> arg_cnt_;
    std::vector<uint32_t> args_;
    std::vector<double> base_val_; // const payloads / input defaults, else 0
    Var zero_, one_;
};

// ---- cross-derivative programs -------------------------------------------
//
// For a scalar r built over input vectors x and z, measures
// || grad_z( eta^T grad_x r ) ||^2 for probe vectors eta.  The probe is a
// bound input, so one program serves any number of probes.  Averaging over
// random probes with E[eta eta^T] = I estimates ||d^2 r / dx dz^T||_F^2
// (Hutchinson); summing over the standard basis recovers it exactly.

struct CrossNormProgram {
    Graph* g = nullptr;
    std::vector<Var> eta;
    Var sq_norm; // || grad_z (eta . grad_x r) ||^2
};

CrossNormProgram make_cross_norm(Graph& g, Var r, std::span<const Var> x,
                                 std::span<const Var> z);

double eval_cross_norm(const CrossNormProgram& p, Exec& ex,
                       std::span<const double> eta);

// sum over basis probes: exact squared Frobenius norm of the cross-Hessian
double exact_cross_frobenius(const CrossNormProgram& p, Exec& ex);

enum class ProbeDist { Rademacher, Gaussian };

// mean over n random probes
double hutchinson_cross_norm(const CrossNormProgram& p, Exec& ex, int n_probes,
                             ProbeDist dist, Rng& rng);

} // namespace cycond::ad
