#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <vector>

#include "cycond/finite.hpp"
#include "support/fixtures.hpp"
#include "support/lp_oracle.hpp"
#include "support/pair_scan.hpp"

using namespace cycond;
using namespace cycond::finite;
using testsupport::block_diagonal_joint;
using testsupport::conditionals_from_joint;
using testsupport::joint_feasibility;
using testsupport::perturb_conditional;
using testsupport::random_conditional;
using testsupport::random_positive_joint;
using testsupport::run_pair_scan;

namespace {

FiniteCond table(int r, int c, std::initializer_list<double> v) {
    FiniteCond t(r, c);
    REQUIRE(v.size() == size_t(r) * c);
    std::copy(v.begin(), v.end(), t.t.begin());
    return t;
}

JointMatrix joint_of(int r, int c, std::initializer_list<double> v) {
    JointMatrix j(r, c);
    REQUIRE(v.size() == size_t(r) * c);
    std::copy(v.begin(), v.end(), j.p.begin());
    return j;
}

SupportSet mask_of(int r, int c, std::initializer_list<int> v) {
    SupportSet s(r, c);
    REQUIRE(v.size() == size_t(r) * c);
    auto it = v.begin();
    for (auto& cell : s.m) cell = uint8_t(*it++ != 0);
    return s;
}

// 4x4 pair with uniform conditionals per slice: for the left z-states the
// decoder covers every x, for the right ones only the top half; encoder
// mirrors that with bottom x covering every z and top x only the right
// half.  The only mutually closed region is the top-right quadrant.
std::pair<FiniteCond, FiniteCond> quadrant_pair() {
    FiniteCond p(4, 4), q(4, 4);
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i)
            p.at(i, j) = j < 2 ? 0.25 : (i >= 2 ? 0.5 : 0.0);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            q.at(j, i) = i < 2 ? 0.25 : (j >= 2 ? 0.5 : 0.0);
    return {p, q};
}

// deterministic two-state cycle x0 -> z1 -> x1 -> z0 -> x0: the marginal
// chain has period two and the conditionals are incompatible
std::pair<FiniteCond, FiniteCond> periodic_pair() {
    auto p = table(2, 2, {1, 0, 0, 1});
    auto q = table(2, 2, {0, 1, 1, 0});
    return {p, q};
}

double max_abs_diff(const JointMatrix& a, const JointMatrix& b) {
    double m = 0.0;
    for (size_t k = 0; k < a.p.size(); ++k)
        m = std::max(m, std::abs(a.p[k] - b.p[k]));
    return m;
}

} // namespace

TEST_CASE("conditional tables validate column stochasticity") {
    CHECK(table(2, 2, {0.25, 1.0, 0.75, 0.0}).validate());
    CHECK(table(2, 2, {1, 0, 0, 0}).validate()); // zero column allowed

    std::string why;
    CHECK_FALSE(table(2, 2, {0.5, 1, 0.4, 0}).validate(&why));
    CHECK(why.find("column 0") != std::string::npos);
    CHECK_FALSE(table(2, 2, {1.5, 0, -0.5, 1}).validate(&why));
    auto nan_table = table(2, 2, {1, 0, 0, 1});
    nan_table.at(0, 0) = std::nan("");
    CHECK_FALSE(nan_table.validate(&why));

    FiniteCond unsized;
    CHECK_FALSE(unsized.validate(&why));
}

TEST_CASE("positive regions mark strictly positive cells") {
    CHECK(positive_regions(table(2, 2, {1, 0, 0, 1})) ==
          mask_of(2, 2, {1, 0, 0, 1}));
    CHECK(positive_regions(table(2, 2, {1, 0, 0, 0})) ==
          mask_of(2, 2, {1, 0, 0, 0}));
    CHECK(positive_regions(table(2, 2, {0.1, 0.5, 0.9, 0.5})) ==
          mask_of(2, 2, {1, 1, 1, 1}));
}

TEST_CASE("candidate sets from a positive joint cover the whole grid") {
    auto [p, q] = conditionals_from_joint(joint_of(2, 2, {0.1, 0.2, 0.3, 0.4}));
    auto [wpq, wqp] = candidate_sets(p, q);
    CHECK(wpq == mask_of(2, 2, {1, 1, 1, 1}));
    CHECK(wqp == mask_of(2, 2, {1, 1, 1, 1}));
}

TEST_CASE("candidate sets keep only mutually covered slices") {
    auto [p, q] = quadrant_pair();
    auto quadrant = mask_of(4, 4,
                            {0, 0, 0, 0,  //
                             0, 0, 0, 0,  //
                             0, 0, 1, 1,  //
                             0, 0, 1, 1});
    auto [wpq, wqp] = candidate_sets(p, q);
    CHECK(wpq == quadrant);
    CHECK(wqp == quadrant);
}

TEST_CASE("a state with an all-zero encoder column contributes no cells") {
    auto p = table(2, 2, {0.5, 0.5, 0.5, 0.5});
    auto q = table(2, 2, {0.5, 0, 0.5, 0}); // no encoder mass from x1
    auto [wpq, wqp] = candidate_sets(p, q);
    CHECK(wqp.cell(0, 0));
    CHECK(wqp.cell(0, 1));
    CHECK_FALSE(wqp.cell(1, 0));
    CHECK_FALSE(wqp.cell(1, 1));
    // decoder slices need full encoder coverage, which x1 breaks
    CHECK(wpq.empty());
}

TEST_CASE("candidate sets reject mismatched dimensions") {
    auto p = table(2, 3, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
    auto q = table(2, 3, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
    CHECK_THROWS_AS(candidate_sets(p, q), std::invalid_argument);
}

TEST_CASE("stretch covers the rows and columns touched by the set") {
    CHECK(stretch(mask_of(2, 2, {1, 0, 0, 0})) == mask_of(2, 2, {1, 1, 1, 0}));
    CHECK(stretch(mask_of(2, 2, {1, 1, 1, 1})) == mask_of(2, 2, {1, 1, 1, 1}));
    CHECK(stretch(mask_of(2, 2, {0, 0, 0, 0})) == mask_of(2, 2, {0, 0, 0, 0}));
}

TEST_CASE("closure under stretch-and-intersect") {
    auto blockdiag = mask_of(2, 2, {1, 0, 0, 1});
    CHECK(is_complete_component(mask_of(2, 2, {1, 0, 0, 0}), blockdiag));
    CHECK(is_complete_component(blockdiag, blockdiag));

    // an L-shaped region pulls in extra cells through its own rows/columns
    auto ell = mask_of(2, 2, {1, 1, 1, 0});
    CHECK(is_complete_component(ell, ell));
    CHECK_FALSE(is_complete_component(mask_of(2, 2, {1, 0, 0, 0}), ell));
}

TEST_CASE("ratio of identical conditionals factorizes with unit witness") {
    auto p = table(3, 3, {0.2, 0.3, 0.5, 0.5, 0.2, 0.3, 0.3, 0.5, 0.2});
    FiniteCond q(3, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) q.at(j, i) = p.at(i, j);
    SupportSet full(3, 3);
    std::fill(full.m.begin(), full.m.end(), uint8_t(1));
    auto w = check_factorization(p, q, full);
    REQUIRE(w.valid);
    for (double v : w.a) CHECK(v == 1.0);
    for (double v : w.b) CHECK(v == 1.0);
}

TEST_CASE("factorization witness matches the marginal ratio up to one gauge") {
    auto rng = make_rng(20260815, 11);
    auto pi = random_positive_joint(3, 3, rng);
    auto [p, q] = conditionals_from_joint(pi);
    SupportSet full(3, 3);
    std::fill(full.m.begin(), full.m.end(), uint8_t(1));
    auto w = check_factorization(p, q, full);
    REQUIRE(w.valid);
    CHECK(w.a[0] == 1.0); // gauge: first x-state of the component

    std::vector<double> px(3, 0.0), pz(3, 0.0);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            px[i] += pi.at(i, j);
            pz[j] += pi.at(i, j);
        }
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double g = w.a[i] * w.b[j] / (px[i] / pz[j]);
            lo = std::min(lo, g);
            hi = std::max(hi, g);
        }
    CHECK(hi / lo - 1.0 < 1e-12);
}

TEST_CASE("perturbing one decoder cell breaks the factorization") {
    auto rng = make_rng(20260815, 12);
    auto pi = random_positive_joint(3, 3, rng);
    auto [p, q] = conditionals_from_joint(pi);
    perturb_conditional(p, rng);
    SupportSet full(3, 3);
    std::fill(full.m.begin(), full.m.end(), uint8_t(1));
    auto w = check_factorization(p, q, full);
    CHECK_FALSE(w.valid);
    CHECK(w.reason == "ratio is not separable on the support");
}

TEST_CASE("factorization rejects support cells where a conditional vanishes") {
    auto p = table(2, 2, {1, 0, 0, 1});
    auto q = table(2, 2, {0.5, 0.5, 0.5, 0.5});
    SupportSet s = mask_of(2, 2, {1, 1, 0, 0});
    auto w = check_factorization(p, q, s); // p(0|1) = 0 on a masked cell
    CHECK_FALSE(w.valid);
    CHECK(w.reason == "support cell where a conditional vanishes");
}

TEST_CASE("joint construction round-trips the source joint") {
    auto pi = joint_of(2, 2, {0.1, 0.2, 0.3, 0.4});
    auto [p, q] = conditionals_from_joint(pi);
    SupportSet full(2, 2);
    std::fill(full.m.begin(), full.m.end(), uint8_t(1));
    auto w = check_factorization(p, q, full);
    REQUIRE(w.valid);
    auto rebuilt = construct_joint(q, full, w);
    CHECK(max_abs_diff(rebuilt, pi) < 1e-9);
    CHECK(rebuilt.mass() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("identity conditionals on the diagonal rebuild a uniform joint") {
    auto p = table(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    auto q = p; // same table read in the other orientation
    auto diag = mask_of(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    auto w = check_factorization(p, q, diag);
    REQUIRE(w.valid);
    auto j = construct_joint(q, diag, w);
    for (int i = 0; i < 3; ++i) CHECK(j.at(i, i) == doctest::Approx(1.0 / 3));

    auto single = mask_of(3, 3, {0, 0, 0, 0, 1, 0, 0, 0, 0});
    auto ws = check_factorization(p, q, single);
    REQUIRE(ws.valid);
    auto js = construct_joint(q, single, ws);
    CHECK(js.at(1, 1) == 1.0);
    CHECK(js.mass() == 1.0);
}

TEST_CASE("joint construction refuses an invalid witness") {
    FactorWitness bad;
    CHECK_THROWS_AS(construct_joint(table(1, 1, {1}), SupportSet(1, 1), bad),
                    std::invalid_argument);
}

TEST_CASE("rectangular supports are determinate, L-shapes are not") {
    SupportSet full(4, 4);
    std::fill(full.m.begin(), full.m.end(), uint8_t(1));
    CHECK(check_determinacy(full));
    CHECK(check_determinacy(mask_of(4, 4,
                                    {0, 0, 0, 0,  //
                                     1, 0, 0, 1,  //
                                     1, 0, 0, 1,  //
                                     0, 0, 0, 0})));
    CHECK_FALSE(check_determinacy(mask_of(2, 2, {1, 1, 1, 0})));
}

TEST_CASE("full-support pair: one support, determinate, joint recovered") {
    auto rng = make_rng(20260815, 13);
    auto pi = random_positive_joint(4, 5, rng);
    auto [p, q] = conditionals_from_joint(pi);

    auto rep = analyze(p, q);
    CHECK(rep.compatible);
    REQUIRE(rep.complete_supports.size() == 1);
    CHECK(rep.complete_supports[0].count() == 20);
    CHECK(rep.globally_determinate);
    CHECK(max_abs_diff(rep.joints[0], pi) < 1e-9);
    CHECK(joint_feasibility(p, q).feasible);
}

TEST_CASE("two-block pair: each block and their union are supports") {
    auto pi = joint_of(3, 3,
                       {0.20, 0.10, 0.00,  //
                        0.10, 0.20, 0.00,  //
                        0.00, 0.00, 0.40});
    auto [p, q] = conditionals_from_joint(pi);
    auto rep = analyze(p, q);
    CHECK(rep.compatible);
    CHECK_FALSE(rep.globally_determinate);
    REQUIRE(rep.complete_supports.size() == 3);

    auto block_a = mask_of(3, 3, {1, 1, 0, 1, 1, 0, 0, 0, 0});
    auto block_b = mask_of(3, 3, {0, 0, 0, 0, 0, 0, 0, 0, 1});
    auto both = mask_of(3, 3, {1, 1, 0, 1, 1, 0, 0, 0, 1});
    int found_a = -1, found_b = -1, found_union = -1;
    for (int k = 0; k < 3; ++k) {
        if (rep.complete_supports[k] == block_a) found_a = k;
        if (rep.complete_supports[k] == block_b) found_b = k;
        if (rep.complete_supports[k] == both) found_union = k;
    }
    REQUIRE(found_a >= 0);
    REQUIRE(found_b >= 0);
    REQUIRE(found_union >= 0);

    // per-block joints are the renormalized slices of the source
    JointMatrix slice_a(3, 3);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) slice_a.at(i, j) = pi.at(i, j) / 0.6;
    CHECK(max_abs_diff(rep.joints[found_a], slice_a) < 1e-9);
    CHECK(rep.joints[found_b].at(2, 2) == doctest::Approx(1.0).epsilon(1e-12));

    // blocks are rectangles; the union mixes two rectangles and is not
    CHECK(rep.determinate[found_a] != 0);
    CHECK(rep.determinate[found_b] != 0);
    CHECK(rep.determinate[found_union] == 0);

    CHECK(joint_feasibility(p, q).feasible);
}

TEST_CASE("support conflict leaves no complete support") {
    auto p = table(2, 2, {1, 0.5, 0, 0.5});
    auto q = table(2, 2, {0.5, 0.5, 0.5, 0.5});
    auto rep = analyze(p, q);
    CHECK_FALSE(rep.compatible);
    CHECK(rep.complete_supports.empty());
    CHECK_FALSE(rep.globally_determinate);
    CHECK_FALSE(joint_feasibility(p, q).feasible);
}

TEST_CASE("analyze rejects invalid tables") {
    auto good = table(2, 2, {1, 0, 0, 1});
    auto bad = table(2, 2, {0.9, 0, 0, 1});
    CHECK_THROWS_AS(analyze(bad, good), std::invalid_argument);
    CHECK_THROWS_AS(analyze(good, bad), std::invalid_argument);
}

TEST_CASE("quadrant pair is compatible and determinate on the quadrant") {
    auto [p, q] = quadrant_pair();
    auto rep = analyze(p, q);
    CHECK(rep.compatible);
    REQUIRE(rep.complete_supports.size() == 1);
    CHECK(rep.complete_supports[0] == mask_of(4, 4,
                                              {0, 0, 0, 0,  //
                                               0, 0, 0, 0,  //
                                               0, 0, 1, 1,  //
                                               0, 0, 1, 1}));
    CHECK(rep.globally_determinate);
    for (int i = 2; i < 4; ++i)
        for (int j = 2; j < 4; ++j)
            CHECK(rep.joints[0].at(i, j) == doctest::Approx(0.25).epsilon(1e-12));

    auto feas = joint_feasibility(p, q);
    REQUIRE(feas.feasible);
    // determinate pair: the oracle's witness marginal is the unique one
    CHECK(std::abs(feas.col_mass[0]) < 1e-8);
    CHECK(std::abs(feas.col_mass[1]) < 1e-8);
    CHECK(std::abs(feas.col_mass[2] - 0.5) < 1e-8);
    CHECK(std::abs(feas.col_mass[3] - 0.5) < 1e-8);
}

TEST_CASE("deterministic decoder against stochastic encoder") {
    // identity map with a matching point-mass encoder
    std::vector<int> ident{0, 1};
    auto nu = table(2, 2, {1, 0, 0, 1});
    auto x0 = dirac_compatible(ident, nu);
    REQUIRE(x0.has_value());
    CHECK(*x0 == 0);

    // constant map: the image point accepts any encoder column
    std::vector<int> constant{1, 1, 1};
    auto rng = make_rng(20260815, 14);
    auto nu2 = random_conditional(3, 2, rng);
    auto c0 = dirac_compatible(constant, nu2);
    REQUIRE(c0.has_value());
    CHECK(*c0 == 1);

    // injective map with a spread-out encoder: every preimage is a
    // singleton carrying mass 1/3 only
    std::vector<int> inj{0, 1, 2};
    FiniteCond uni(3, 3);
    for (auto& v : uni.t) v = 1.0 / 3;
    CHECK_FALSE(dirac_compatible(inj, uni).has_value());
}

TEST_CASE("deterministic decoder tolerance and input checks") {
    std::vector<int> ident{0, 1};
    // a 1e-13 shortfall still counts as full preimage mass
    auto near = table(2, 2, {1 - 1e-13, 0, 1e-13, 1});
    auto hit = dirac_compatible(ident, near);
    REQUIRE(hit.has_value());
    CHECK(*hit == 0);
    // a parts-per-million leak does not
    auto leak = table(2, 2, {1 - 1e-6, 1, 1e-6, 0});
    CHECK_FALSE(dirac_compatible(ident, leak).has_value());

    std::vector<int> short_map{0};
    CHECK_THROWS_AS(dirac_compatible(short_map, near), std::invalid_argument);
    std::vector<int> out_of_range{0, 7};
    CHECK_THROWS_AS(dirac_compatible(out_of_range, near), std::invalid_argument);
}

TEST_CASE("chain occupancy oracle settles on the analyzed joint") {
    auto rng = make_rng(20260815, 15);
    auto pi = random_positive_joint(3, 4, rng);
    auto [p, q] = conditionals_from_joint(pi);
    auto rep = analyze(p, q);
    REQUIRE(rep.globally_determinate);

    auto from_uniform = gibbs_stationary_oracle(p, q);
    CHECK(max_abs_diff(from_uniform, rep.joints[0]) < 1e-9);

    JointMatrix first = from_uniform;
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> init(3);
        double s = 0.0;
        for (double& v : init) {
            v = 0.01 + uniform(rng);
            s += v;
        }
        for (double& v : init) v /= s;
        auto stat = gibbs_stationary_oracle(p, q, init);
        CHECK(max_abs_diff(stat, first) < 1e-8);
        CHECK(max_abs_diff(stat, rep.joints[0]) < 1e-9);
    }
}

TEST_CASE("chain occupancy depends on the starting block when split") {
    auto pi = joint_of(3, 3,
                       {0.20, 0.10, 0.00,  //
                        0.10, 0.20, 0.00,  //
                        0.00, 0.00, 0.40});
    auto [p, q] = conditionals_from_joint(pi);

    std::vector<double> in_a{0.5, 0.5, 0.0}, in_b{0.0, 0.0, 1.0};
    auto stat_a = gibbs_stationary_oracle(p, q, in_a);
    auto stat_b = gibbs_stationary_oracle(p, q, in_b);

    JointMatrix slice_a(3, 3);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) slice_a.at(i, j) = pi.at(i, j) / 0.6;
    CHECK(max_abs_diff(stat_a, slice_a) < 1e-9);
    CHECK(stat_b.at(2, 2) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(max_abs_diff(stat_a, stat_b) > 0.3);
}

TEST_CASE("incompatible pair: chain settles but disagrees with the encoder") {
    auto rng = make_rng(20260815, 16);
    auto p = random_conditional(3, 3, rng);
    auto q = random_conditional(3, 3, rng);
    REQUIRE_FALSE(analyze(p, q).compatible);
    REQUIRE_FALSE(joint_feasibility(p, q).feasible);

    auto stat = gibbs_stationary_oracle(p, q);
    double worst_tv = 0.0;
    for (int i = 0; i < 3; ++i) {
        double row = 0.0;
        for (int j = 0; j < 3; ++j) row += stat.at(i, j);
        REQUIRE(row > 0.0);
        double tv = 0.0;
        for (int j = 0; j < 3; ++j)
            tv += std::abs(stat.at(i, j) / row - q.at(j, i));
        worst_tv = std::max(worst_tv, 0.5 * tv);
    }
    CHECK(worst_tv > 1e-3);
}

TEST_CASE("periodic chain needs the lazy kernel") {
    auto [p, q] = periodic_pair();
    std::vector<double> init{1.0, 0.0};
    CHECK_THROWS_AS(gibbs_stationary_oracle(p, q, init), OracleNoConvergence);

    auto stat = gibbs_stationary_oracle(p, q, init, /*lazy=*/true);
    CHECK(stat.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(stat.at(1, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("chain oracle rejects absorbing states and bad inits") {
    auto p = table(2, 2, {0.5, 0.5, 0.5, 0.5});
    auto q_dead = table(2, 2, {0.5, 0, 0.5, 0}); // x1 has no move
    CHECK_THROWS_AS(gibbs_stationary_oracle(p, q_dead), std::invalid_argument);

    auto q = table(2, 2, {0.5, 0.5, 0.5, 0.5});
    std::vector<double> wrong{1.0};
    CHECK_THROWS_AS(gibbs_stationary_oracle(p, q, wrong), std::invalid_argument);
}

TEST_CASE("column sampling follows the column distribution") {
    auto c = table(3, 2, {0.2, 1.0, 0.3, 0.0, 0.5, 0.0});
    auto rng = make_rng(20260815, 17);
    std::vector<int> hits(3, 0);
    const int n = 20000;
    for (int k = 0; k < n; ++k) ++hits[sample_column(c, 0, rng)];
    CHECK(std::abs(hits[0] / double(n) - 0.2) < 0.02);
    CHECK(std::abs(hits[1] / double(n) - 0.3) < 0.02);
    CHECK(std::abs(hits[2] / double(n) - 0.5) < 0.02);
    for (int k = 0; k < 100; ++k) CHECK(sample_column(c, 1, rng) == 0);
}

TEST_CASE("round trip: positive joints are recovered at every size") {
    auto rng = make_rng(20260815, 18);
    for (int n_x = 2; n_x <= 8; n_x += 2)
        for (int n_z = 3; n_z <= 8; n_z += 2) {
            auto pi = random_positive_joint(n_x, n_z, rng);
            auto [p, q] = conditionals_from_joint(pi);
            auto rep = analyze(p, q);
            REQUIRE(rep.compatible);
            REQUIRE(rep.globally_determinate);
            CHECK(max_abs_diff(rep.joints[0], pi) < 1e-9);
        }
}

TEST_CASE("200 randomized pairs agree with the feasibility oracle") {
    auto res = run_pair_scan(200, 20260815);
    CHECK(res.n_agree == 200);
    CHECK(res.closure_ok);
    CHECK(res.n_compatible > 50);
    CHECK(res.n_compatible < 150);
    CHECK(res.n_determinate > 20);
    CHECK(res.max_recovery_err < 1e-9);
    CHECK(res.max_support_err < 1e-9);
    CHECK(res.seconds < 30.0);
}
