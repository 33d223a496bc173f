#include "cycond/finite.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

namespace cycond::finite {

namespace {
constexpr double kColSumTol = 1e-12;
constexpr double kFactorRelTol = 1e-9;
constexpr double kDiracTol = 1e-12;
constexpr double kOracleTvTol = 1e-13;
constexpr int kMaxComponents = 16;
constexpr long kMaxOracleSweeps = 1000000;
} // namespace

bool FiniteCond::validate(std::string* why) const {
    if (n_rows <= 0 || n_cols <= 0 || t.size() != size_t(n_rows) * n_cols) {
        if (why) *why = "bad dimensions";
        return false;
    }
    for (int c = 0; c < n_cols; ++c) {
        double s = 0.0;
        for (int r = 0; r < n_rows; ++r) {
            double v = at(r, c);
            if (v < 0.0 || !std::isfinite(v)) {
                if (why) *why = "negative or non-finite entry";
                return false;
            }
            s += v;
        }
        if (s != 0.0 && std::abs(s - 1.0) > kColSumTol) {
            if (why) *why = "column " + std::to_string(c) + " sums to " +
                            std::to_string(s);
            return false;
        }
    }
    return true;
}

bool SupportSet::empty() const {
    return std::all_of(m.begin(), m.end(), [](uint8_t v) { return v == 0; });
}

size_t SupportSet::count() const {
    size_t n = 0;
    for (uint8_t v : m) n += v != 0;
    return n;
}

std::vector<uint8_t> SupportSet::proj_x() const {
    std::vector<uint8_t> px(n_x, 0);
    for (int i = 0; i < n_x; ++i)
        for (int j = 0; j < n_z; ++j)
            if (cell(i, j)) {
                px[i] = 1;
                break;
            }
    return px;
}

std::vector<uint8_t> SupportSet::proj_z() const {
    std::vector<uint8_t> pz(n_z, 0);
    for (int j = 0; j < n_z; ++j)
        for (int i = 0; i < n_x; ++i)
            if (cell(i, j)) {
                pz[j] = 1;
                break;
            }
    return pz;
}

double JointMatrix::mass() const {
    double s = 0.0;
    for (double v : p) s += v;
    return s;
}

SupportSet positive_regions(const FiniteCond& c) {
    SupportSet s(c.n_rows, c.n_cols);
    for (int r = 0; r < c.n_rows; ++r)
        for (int col = 0; col < c.n_cols; ++col)
            if (c.at(r, col) > 0.0) s.set(r, col);
    return s;
}

std::pair<SupportSet, SupportSet> candidate_sets(const FiniteCond& p,
                                                 const FiniteCond& q) {
    const int n_x = p.n_rows, n_z = p.n_cols;
    if (q.n_rows != n_z || q.n_cols != n_x)
        throw std::invalid_argument("conditional dimensions do not match");

    SupportSet wpq(n_x, n_z), wqp(n_x, n_z);
    // W_pq: columns z whose decoder support fits inside the encoder slice
    for (int j = 0; j < n_z; ++j) {
        bool fits = true;
        for (int i = 0; i < n_x && fits; ++i)
            if (p.at(i, j) > 0.0 && !(q.at(j, i) > 0.0)) fits = false;
        if (!fits) continue;
        for (int i = 0; i < n_x; ++i)
            if (p.at(i, j) > 0.0) wpq.set(i, j);
    }
    // W_qp: rows x whose encoder support fits inside the decoder slice
    for (int i = 0; i < n_x; ++i) {
        bool fits = true;
        for (int j = 0; j < n_z && fits; ++j)
            if (q.at(j, i) > 0.0 && !(p.at(i, j) > 0.0)) fits = false;
        if (!fits) continue;
        for (int j = 0; j < n_z; ++j)
            if (q.at(j, i) > 0.0) wqp.set(i, j);
    }
    return {wpq, wqp};
}

SupportSet stretch(const SupportSet& s) {
    auto px = s.proj_x();
    auto pz = s.proj_z();
    SupportSet out(s.n_x, s.n_z);
    for (int i = 0; i < s.n_x; ++i)
        for (int j = 0; j < s.n_z; ++j)
            if (px[i] || pz[j]) out.set(i, j);
    return out;
}

bool is_complete_component(const SupportSet& s, const SupportSet& w) {
    auto px = s.proj_x();
    auto pz = s.proj_z();
    for (int i = 0; i < s.n_x; ++i)
        for (int j = 0; j < s.n_z; ++j) {
            bool in_stretch = px[i] || pz[j];
            bool lhs = in_stretch && w.cell(i, j);
            if (lhs != s.cell(i, j)) return false;
        }
    return true;
}

FactorWitness check_factorization(const FiniteCond& p, const FiniteCond& q,
                                  const SupportSet& s) {
    const int n_x = s.n_x, n_z = s.n_z;
    FactorWitness w;
    w.a.assign(n_x, 0.0);
    w.b.assign(n_z, 0.0);

    // log-ratio on each support cell; both conditionals must be positive there
    std::vector<double> lr(size_t(n_x) * n_z, 0.0);
    for (int i = 0; i < n_x; ++i)
        for (int j = 0; j < n_z; ++j) {
            if (!s.cell(i, j)) continue;
            double pv = p.at(i, j), qv = q.at(j, i);
            if (!(pv > 0.0) || !(qv > 0.0)) {
                w.reason = "support cell where a conditional vanishes";
                return w;
            }
            lr[size_t(i) * n_z + j] = std::log(pv) - std::log(qv);
        }

    // BFS over the bipartite cell graph, one tree per connected component
    std::vector<double> la(n_x, 0.0), lb(n_z, 0.0);
    std::vector<int8_t> seen_x(n_x, 0), seen_z(n_z, 0);
    auto px = s.proj_x();
    for (int root = 0; root < n_x; ++root) {
        if (!px[root] || seen_x[root]) continue;
        la[root] = 0.0;
        seen_x[root] = 1;
        std::deque<std::pair<bool, int>> queue; // (is_x_node, index)
        queue.emplace_back(true, root);
        while (!queue.empty()) {
            auto [is_x, idx] = queue.front();
            queue.pop_front();
            if (is_x) {
                for (int j = 0; j < n_z; ++j) {
                    if (!s.cell(idx, j) || seen_z[j]) continue;
                    lb[j] = lr[size_t(idx) * n_z + j] - la[idx];
                    seen_z[j] = 1;
                    queue.emplace_back(false, j);
                }
            } else {
                for (int i = 0; i < n_x; ++i) {
                    if (!s.cell(i, idx) || seen_x[i]) continue;
                    la[i] = lr[size_t(i) * n_z + idx] - lb[idx];
                    seen_x[i] = 1;
                    queue.emplace_back(true, i);
                }
            }
        }
    }

    // every support cell must verify the factorization within relative tol
    for (int i = 0; i < n_x; ++i)
        for (int j = 0; j < n_z; ++j) {
            if (!s.cell(i, j)) continue;
            double resid = std::expm1(la[i] + lb[j] - lr[size_t(i) * n_z + j]);
            if (std::abs(resid) > kFactorRelTol) {
                w.reason = "ratio is not separable on the support";
                return w;
            }
        }

    auto pz = s.proj_z();
    for (int i = 0; i < n_x; ++i) w.a[i] = px[i] ? std::exp(la[i]) : 0.0;
    for (int j = 0; j < n_z; ++j) w.b[j] = pz[j] ? std::exp(lb[j]) : 0.0;
    w.valid = true;
    return w;
}

JointMatrix construct_joint(const FiniteCond& q, const SupportSet& s,
                            const FactorWitness& w) {
    if (!w.valid) throw std::invalid_argument("witness is not valid");
    JointMatrix joint(s.n_x, s.n_z);
    auto px = s.proj_x();
    double denom = 0.0;
    for (int i = 0; i < s.n_x; ++i)
        if (px[i]) denom += std::abs(w.a[i]);
    if (denom <= 0.0) throw std::invalid_argument("support carries no mass");
    for (int i = 0; i < s.n_x; ++i)
        for (int j = 0; j < s.n_z; ++j)
            if (s.cell(i, j)) joint.at(i, j) = q.at(j, i) * std::abs(w.a[i]) / denom;
    return joint;
}

bool check_determinacy(const SupportSet& s) {
    auto px = s.proj_x();
    auto pz = s.proj_z();
    bool cols_full = true;
    for (int j = 0; j < s.n_z && cols_full; ++j) {
        if (!pz[j]) continue;
        for (int i = 0; i < s.n_x; ++i)
            if (bool(px[i]) != s.cell(i, j)) {
                cols_full = false;
                break;
            }
    }
    if (cols_full) return true;
    bool rows_full = true;
    for (int i = 0; i < s.n_x && rows_full; ++i) {
        if (!px[i]) continue;
        for (int j = 0; j < s.n_z; ++j)
            if (bool(pz[j]) != s.cell(i, j)) {
                rows_full = false;
                break;
            }
    }
    return rows_full;
}

std::vector<SupportSet> enumerate_complete_supports(const FiniteCond& p,
                                                    const FiniteCond& q) {
    auto [wpq, wqp] = candidate_sets(p, q);
    const int n_x = wpq.n_x, n_z = wpq.n_z;

    SupportSet inter(n_x, n_z);
    for (size_t k = 0; k < inter.m.size(); ++k)
        inter.m[k] = (wpq.m[k] && wqp.m[k]) ? 1 : 0;

    // connected components of the intersection cells (adjacency: shared row
    // or shared column)
    std::vector<int> comp(size_t(n_x) * n_z, -1);
    int n_comp = 0;
    for (int i0 = 0; i0 < n_x; ++i0)
        for (int j0 = 0; j0 < n_z; ++j0) {
            if (!inter.cell(i0, j0) || comp[size_t(i0) * n_z + j0] >= 0) continue;
            std::deque<std::pair<int, int>> queue{{i0, j0}};
            comp[size_t(i0) * n_z + j0] = n_comp;
            while (!queue.empty()) {
                auto [i, j] = queue.front();
                queue.pop_front();
                for (int jj = 0; jj < n_z; ++jj)
                    if (inter.cell(i, jj) && comp[size_t(i) * n_z + jj] < 0) {
                        comp[size_t(i) * n_z + jj] = n_comp;
                        queue.emplace_back(i, jj);
                    }
                for (int ii = 0; ii < n_x; ++ii)
                    if (inter.cell(ii, j) && comp[size_t(ii) * n_z + j] < 0) {
                        comp[size_t(ii) * n_z + j] = n_comp;
                        queue.emplace_back(ii, j);
                    }
            }
            ++n_comp;
        }

    if (n_comp > kMaxComponents)
        throw std::runtime_error("support search space too large: " +
                                 std::to_string(n_comp) + " components");

    auto wpq_px = wpq.proj_x();
    auto wpq_pz = wpq.proj_z();
    auto wqp_px = wqp.proj_x();
    auto wqp_pz = wqp.proj_z();

    std::vector<SupportSet> found;
    std::set<std::vector<uint8_t>> seen;
    for (uint32_t pick = 1; pick < (1u << n_comp); ++pick) {
        SupportSet s(n_x, n_z);
        for (size_t k = 0; k < s.m.size(); ++k)
            if (comp[k] >= 0 && (pick >> comp[k]) & 1u) s.m[k] = 1;
        if (s.empty()) continue;
        if (!is_complete_component(s, wpq) || !is_complete_component(s, wqp))
            continue;
        auto px = s.proj_x();
        auto pz = s.proj_z();
        bool proj_ok = true;
        for (int i = 0; i < n_x && proj_ok; ++i)
            if (px[i] && !(wpq_px[i] && wqp_px[i])) proj_ok = false;
        for (int j = 0; j < n_z && proj_ok; ++j)
            if (pz[j] && !(wpq_pz[j] && wqp_pz[j])) proj_ok = false;
        if (!proj_ok) continue;
        if (!check_factorization(p, q, s).valid) continue;
        if (seen.insert(s.m).second) found.push_back(std::move(s));
    }
    return found;
}

CompatReport analyze(const FiniteCond& p, const FiniteCond& q) {
    std::string why;
    if (!p.validate(&why))
        throw std::invalid_argument("decoder table invalid: " + why);
    if (!q.validate(&why))
        throw std::invalid_argument("encoder table invalid: " + why);

    CompatReport rep;
    rep.n_x = p.n_rows;
    rep.n_z = p.n_cols;
    for (auto& s : enumerate_complete_supports(p, q)) {
        auto w = check_factorization(p, q, s);
        rep.joints.push_back(construct_joint(q, s, w));
        rep.witnesses.push_back(std::move(w));
        rep.determinate.push_back(check_determinacy(s) ? 1 : 0);
        rep.complete_supports.push_back(std::move(s));
    }
    rep.compatible = !rep.complete_supports.empty();
    rep.globally_determinate =
        rep.complete_supports.size() == 1 && rep.determinate[0] != 0;
    return rep;
}

std::optional<int> dirac_compatible(std::span<const int> f,
                                    const FiniteCond& nu) {
    const int n_z = nu.n_rows, n_x = nu.n_cols;
    if (int(f.size()) != n_z)
        throw std::invalid_argument("decoder map size does not match z states");
    for (int j = 0; j < n_z; ++j)
        if (f[j] < 0 || f[j] >= n_x)
            throw std::invalid_argument("decoder map hits an unknown x state");
    for (int x0 = 0; x0 < n_x; ++x0) {
        double mass = 0.0;
        for (int j = 0; j < n_z; ++j)
            if (f[j] == x0) mass += nu.at(j, x0);
        if (std::abs(mass - 1.0) <= kDiracTol) return x0;
    }
    return std::nullopt;
}

JointMatrix gibbs_stationary_oracle(const FiniteCond& p, const FiniteCond& q,
                                    std::span<const double> init_x, bool lazy) {
    const int n_x = p.n_rows, n_z = p.n_cols;
    if (q.n_rows != n_z || q.n_cols != n_x)
        throw std::invalid_argument("conditional dimensions do not match");
    // the chain needs a move out of every x state it can reach
    for (int i = 0; i < n_x; ++i) {
        double s = 0.0;
        for (int j = 0; j < n_z; ++j) s += q.at(j, i);
        if (s == 0.0)
            throw std::invalid_argument("encoder has an absorbing zero column");
    }
    for (int j = 0; j < n_z; ++j) {
        double s = 0.0;
        for (int i = 0; i < n_x; ++i) s += p.at(i, j);
        if (s == 0.0)
            throw std::invalid_argument("decoder has an absorbing zero column");
    }

    std::vector<double> d(n_x, 1.0 / n_x);
    if (!init_x.empty()) {
        if (int(init_x.size()) != n_x)
            throw std::invalid_argument("init distribution has wrong size");
        d.assign(init_x.begin(), init_x.end());
    }

    std::vector<double> mz(n_z, 0.0), step(n_x, 0.0);
    JointMatrix cur(n_x, n_z), prev(n_x, n_z);
    bool have_prev = false;
    for (long sweep = 0; sweep < kMaxOracleSweeps; ++sweep) {
        // occupancy of the consecutive pair (x', z') induced by the current
        // x marginal: z' ~ q given x, then x' ~ p given z'
        for (int j = 0; j < n_z; ++j) {
            double s = 0.0;
            for (int i = 0; i < n_x; ++i) s += q.at(j, i) * d[i];
            mz[j] = s;
        }
        double tv = 0.0;
        for (int i = 0; i < n_x; ++i)
            for (int j = 0; j < n_z; ++j) {
                double v = p.at(i, j) * mz[j];
                cur.at(i, j) = v;
                tv += std::abs(v - prev.at(i, j));
            }
        if (have_prev && 0.5 * tv < kOracleTvTol) return cur;
        std::swap(cur.p, prev.p);
        have_prev = true;
        // advance the x marginal (optionally half-lazy to break periodicity)
        for (int i = 0; i < n_x; ++i) {
            double s = 0.0;
            for (int j = 0; j < n_z; ++j) s += p.at(i, j) * mz[j];
            step[i] = s;
        }
        for (int i = 0; i < n_x; ++i)
            d[i] = lazy ? 0.5 * d[i] + 0.5 * step[i] : step[i];
    }
    throw OracleNoConvergence("stationary sweep did not settle");
}

int sample_column(const FiniteCond& c, int given, Rng& rng) {
    double u = uniform(rng);
    double acc = 0.0;
    for (int r = 0; r < c.n_rows; ++r) {
        acc += c.at(r, given);
        if (u < acc) return r;
    }
    // numerical slack: fall back to the last positive row
    for (int r = c.n_rows - 1; r >= 0; --r)
        if (c.at(r, given) > 0.0) return r;
    return c.n_rows - 1;
}

} // namespace cycond::finite
