#pragma once
#include <vector>

#include "cycond/finite.hpp"

// Independent compatibility decision for a cyclic pair of finite
// conditionals, used to cross-check the support-enumeration route.
//
// Any joint whose x|z conditional equals p has the form
//   pi(i,j) = p(i|j) * s_j,   s_j >= 0,  sum_j s_j = 1
// over the nonzero columns of p.  The z|x conditional equals q iff
//   p(i|j) s_j - q(j|i) * sum_j' p(i|j') s_j' = 0   for every cell (i,j).
// Feasibility of that linear system over the simplex is decided by a
// phase-1 simplex with Bland's rule.

namespace testsupport {

struct Feasibility {
    bool feasible = false;
    // z-marginal of a witness joint when feasible (size n_z)
    std::vector<double> col_mass;
};

Feasibility joint_feasibility(const cycond::finite::FiniteCond& p,
                              const cycond::finite::FiniteCond& q);

} // namespace testsupport
