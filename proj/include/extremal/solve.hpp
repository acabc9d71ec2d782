#pragma once

#include "extremal/budget.hpp"
#include "extremal/extremal_p1.hpp"
#include "extremal/extremal_pgt1.hpp"

namespace extremal {

struct SolveOptions {
  JSolveOptions j;
  TSolveOptions t;
};

/// Dispatch on the exponent: p = inf, p in (1, inf), or p = 1. Exponents
/// within 1e-6 of one go to the p = 1 solver.
inline ExtremalResult solve(const MeasuredSpace& space, const DirichletForm& form, const LpBudget& budget,
                            const SolveOptions& opts = {}) {
  if (budget.is_infinite()) {
    ExtremalResult r = solve_p_inf(space, form, budget, opts.j.eigen);
    r.seed = opts.j.seed;
    return r;
  }
  if (budget.p() <= 1.0 + 1e-6) return solve_p1(space, form, budget.A(), opts.t);
  return solve_p_gt_1(space, form, budget, opts.j);
}

}  // namespace extremal
