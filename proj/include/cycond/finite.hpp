#pragma once
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cycond/rng.hpp"

// Exact analysis of a cyclic pair of finite conditionals.
//
// Convention: a conditional table stores P(row-state | col-state), one column
// per conditioning state.  For a pair over states x in {0..n_x-1} and
// z in {0..n_z-1}:
//   p : n_x rows, n_z cols   -- p(x|z)
//   q : n_z rows, n_x cols   -- q(z|x)
// Support sets, joints and reports always live on the (x, z) grid.

namespace cycond::finite {

struct FiniteCond {
    int n_rows = 0;
    int n_cols = 0;
    std::vector<double> t; // row-major

    FiniteCond() = default;
    FiniteCond(int r, int c) : n_rows(r), n_cols(c), t(size_t(r) * c, 0.0) {}

    double& at(int r, int c) { return t[size_t(r) * n_cols + c]; }
    double at(int r, int c) const { return t[size_t(r) * n_cols + c]; }

    // every column is a probability vector (sum 1 within 1e-12, entries >= 0)
    // or identically zero
    bool validate(std::string* why = nullptr) const;
};

struct SupportSet {
    int n_x = 0;
    int n_z = 0;
    std::vector<uint8_t> m; // row-major over (x, z)

    SupportSet() = default;
    SupportSet(int nx, int nz) : n_x(nx), n_z(nz), m(size_t(nx) * nz, 0) {}

    bool cell(int i, int j) const { return m[size_t(i) * n_z + j] != 0; }
    void set(int i, int j, bool v = true) { m[size_t(i) * n_z + j] = v ? 1 : 0; }
    bool empty() const;
    size_t count() const;
    std::vector<uint8_t> proj_x() const; // rows with at least one cell
    std::vector<uint8_t> proj_z() const;

    bool operator==(const SupportSet& o) const {
        return n_x == o.n_x && n_z == o.n_z && m == o.m;
    }
};

struct FactorWitness {
    bool valid = false;
    std::vector<double> a; // over x-states; positive on the support projection
    std::vector<double> b; // over z-states
    std::string reason;    // why invalid, if so
};

struct JointMatrix {
    int n_x = 0;
    int n_z = 0;
    std::vector<double> p; // row-major over (x, z)

    JointMatrix() = default;
    JointMatrix(int nx, int nz) : n_x(nx), n_z(nz), p(size_t(nx) * nz, 0.0) {}
    double& at(int i, int j) { return p[size_t(i) * n_z + j]; }
    double at(int i, int j) const { return p[size_t(i) * n_z + j]; }
    double mass() const;
};

struct CompatReport {
    int n_x = 0;
    int n_z = 0;
    bool compatible = false; // true iff complete_supports is nonempty
    std::vector<SupportSet> complete_supports;
    std::vector<FactorWitness> witnesses; // parallel to complete_supports
    std::vector<JointMatrix> joints;      // parallel to complete_supports
    std::vector<uint8_t> determinate;     // rectangularity flag per support
    // exactly one complete support and it is rectangular, so the global
    // joint is unique
    bool globally_determinate = false;
};

// strictly positive cells of a conditional, in its own (row, col) layout
SupportSet positive_regions(const FiniteCond& c);

// candidate sets on the (x, z) grid:
//   W_pq = union over z of P_z x {z}   where P_z subset of Q_z
//   W_qp = union over x of {x} x Q_x   where Q_x subset of P_x
// with P_z = supp p(.|z), Q_z = { x : q(z|x) > 0 } and symmetrically.
std::pair<SupportSet, SupportSet> candidate_sets(const FiniteCond& p,
                                                 const FiniteCond& q);

// stretch(S) = S^X x Z  union  X x S^Z
SupportSet stretch(const SupportSet& s);

// S is closed in W under stretching: stretch(S) intersect W == S
bool is_complete_component(const SupportSet& s, const SupportSet& w);

// factorization p(x|z)/q(z|x) = a(x) b(z) on the cells of S, found by BFS
// log-propagation over the bipartite cell graph; each component's root x-state
// gets log a = 0.  All cells must verify within 1e-9 relative on the ratio.
FactorWitness check_factorization(const FiniteCond& p, const FiniteCond& q,
                                  const SupportSet& s);

// joint supported on S: pi(x,z) = q(z|x) a(x) / sum_{x in S^X} a(x)
JointMatrix construct_joint(const FiniteCond& q, const SupportSet& s,
                            const FactorWitness& w);

// rectangularity: every nonempty column slice equals S^X, or every nonempty
// row slice equals S^Z
bool check_determinacy(const SupportSet& s);

// all compatible-support candidates: unions of connected components of
// W_pq intersect W_qp that pass the closure, projection and factorization
// checks; at most 16 components are searched
std::vector<SupportSet> enumerate_complete_supports(const FiniteCond& p,
                                                    const FiniteCond& q);

CompatReport analyze(const FiniteCond& p, const FiniteCond& q);

// deterministic decoder x = f(z) against stochastic encoder nu(z|x):
// smallest x0 whose encoder column puts mass 1 (within 1e-12) on f^{-1}(x0)
std::optional<int> dirac_compatible(std::span<const int> f,
                                    const FiniteCond& nu);

struct OracleNoConvergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// stationary occupancy of the alternating chain z' ~ q(.|x), x' ~ p(.|z'),
// recorded on consecutive pairs (x', z').  Power-iterates the exact kernel
// until successive joints differ by TV < 1e-13 (at most 1e6 sweeps; throws
// OracleNoConvergence otherwise, in which case retry with lazy = true for a
// half-lazy kernel).
JointMatrix gibbs_stationary_oracle(const FiniteCond& p, const FiniteCond& q,
                                    std::span<const double> init_x = {},
                                    bool lazy = false);

// draw a row-state from column `given` of a conditional table
int sample_column(const FiniteCond& c, int given, Rng& rng);

} // namespace cycond::finite
