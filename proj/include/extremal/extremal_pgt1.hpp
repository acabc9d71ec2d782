#pragma once

/// Maximal first eigenvalue under an L^p budget, p in (1, inf], via the
/// functional
///
///     J(u) = (a[u,u] + A ||u||_{2q}^2) / ||u||_2^2,   1/p + 1/q = 1,
///
/// whose minimum equals sup { lambda_1(V) : V >= 0, ||V||_p <= A }. At a
/// minimizer u the maximizing potential is
///
///     V = A ||u^2||_q^{1-q} u^{2(q-1)}.
///
/// The minimizer is found by damped self-consistent iteration
/// u <- first eigenfunction of L + V(u), finished by Newton's method on the
/// nonlinear eigenproblem K u + V(u) m u = lambda m u, ||u||_2 = 1. When the
/// direct route does not certify, the budget is ramped up from a small value
/// with a Newton corrector at every stage.

#include <Eigen/SparseLU>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "extremal/budget.hpp"
#include "extremal/core_form.hpp"
#include "extremal/eigensolver.hpp"
#include "extremal/result.hpp"

namespace extremal {

struct JSolveOptions {
  /// Budget of outer steps shared by the fixed-point, Newton and ramp phases.
  int max_outer = 500;
  int scf_steps = 60;
  int newton_steps = 40;
  double j_tol = 1e-12;
  double eig_tol = 1e-9;
  std::uint64_t seed = 0;
  bool uniqueness_probe = true;
  std::optional<FunctionVec> initial;
  EigenOptions eigen;
};

struct JMinimum {
  FunctionVec u;
  double j_value = 0.0;
  std::vector<double> trace;
  int iterations = 0;
  bool converged = false;
  std::string method;
};

/// J(u) with m-weighted norms. For p = 1 the 2q-norm is the sup norm; for
/// p = inf it is the 2-norm and J reduces to R_0(u) + A.
inline double j_value(const MeasuredSpace& space, const DirichletForm& form, const LpBudget& budget,
                      const FunctionVec& u) {
  check_conforming(space, form);
  const FunctionVec up = form.pin(u);
  const double den = pairwise_sum(Vec(up.cwiseAbs2().cwiseProduct(space.m())));
  if (den == 0.0) throw InputError("J is undefined at the zero function");
  const double n2q = lp_norm(space, up, budget.is_infinite() ? 2.0 : 2.0 * budget.q());
  return (a_form(form, up, up) + budget.A() * n2q * n2q) / den;
}

namespace detail {

inline void require_open_range(const LpBudget& budget) {
  if (budget.is_infinite() || budget.p() <= 1.0)
    throw InputError("this operation needs p strictly between 1 and infinity");
}

// A ||u^2||_q^{1-q} |u|^{2(q-1)} on the entries of u, with measure weights m.
// Computed on u / max|u|, which leaves the value unchanged.
inline Vec potential_of(const Vec& u, const Vec& m, double A, double q) {
  const double umax = u.cwiseAbs().maxCoeff();
  if (umax == 0.0) throw InputError("extremal potential of the zero function");
  const Vec r = u.cwiseAbs() / umax;
  Vec terms(r.size());
  for (Index i = 0; i < r.size(); ++i) terms[i] = std::pow(r[i], 2.0 * q) * m[i];
  const double s = pairwise_sum(terms);
  const double c = A * std::pow(s, (1.0 - q) / q);
  Vec V(r.size());
  for (Index i = 0; i < r.size(); ++i) V[i] = c * std::pow(r[i], 2.0 * (q - 1.0));
  return V;
}

// The problem restricted to free vertices.
struct FreeProblem {
  SparseMat k;
  Vec m;
  double A = 0.0;
  double q = 0.0;

  double mnorm(const Vec& u) const { return std::sqrt(u.cwiseAbs2().dot(m)); }

  double norm2q(const Vec& u) const {
    const double umax = u.cwiseAbs().maxCoeff();
    if (umax == 0.0) return 0.0;
    Vec terms(u.size());
    for (Index i = 0; i < u.size(); ++i) terms[i] = std::pow(std::abs(u[i]) / umax, 2.0 * q) * m[i];
    return umax * std::pow(pairwise_sum(terms), 1.0 / (2.0 * q));
  }

  double j(const Vec& u) const {
    const double n2q = norm2q(u);
    return (u.dot(k * u) + A * n2q * n2q) / u.cwiseAbs2().dot(m);
  }

  Vec potential(const Vec& u) const { return potential_of(u, m, A, q); }
};

inline FreeProblem make_free_problem(const MeasuredSpace& space, const DirichletForm& form, const LpBudget& budget) {
  return {form.free_stiffness(), form.restrict_to_free(space.m()), budget.A(), budget.q()};
}

// First eigenvector of K + diag(V m) on free vertices, m-normalized, positive
// largest entry.
inline EigenPair free_ground_state(const MeasuredSpace& space, const DirichletForm& form, const Vec& vf,
                                   const Vec& warm, const EigenOptions& eopts) {
  EigenOptions o = eopts;
  o.warm_start = form.extend_from_free(warm);
  return lambda1(space, form, form.extend_from_free(vf), o);
}

struct NewtonOutcome {
  bool converged = false;
  int steps = 0;
  double residual = 0.0;
};

// Newton's method on G(u, lambda) = (K u + V(u) m u - lambda m u, (1 - u^T M u)/2).
// The Jacobian of V(u) m u is diag((2q-1) V m) + beta z z^T with
// z = V m u and beta = 2(1-q)/(A ||u||_{2q}^2); the rank-one term is carried
// by an auxiliary unknown s = z^T d so the bordered system stays sparse.
inline NewtonOutcome newton_polish(const FreeProblem& fp, Vec& u, double& lambda, int max_steps) {
  const Index n = u.size();
  NewtonOutcome out;
  u /= fp.mnorm(u);
  lambda = fp.j(u);
  double prev = kInf;
  for (int step = 0; step <= max_steps; ++step) {
    const Vec V = fp.potential(u);
    const Vec mu = fp.m.cwiseProduct(u);
    const Vec z = V.cwiseProduct(mu);
    const Vec ku = fp.k * u;
    const Vec g1 = ku + z - lambda * mu;
    const double g2 = 0.5 * (1.0 - u.dot(mu));
    const double gnorm = std::sqrt(g1.squaredNorm() + g2 * g2);
    const double scale = 1.0 + ku.norm() + z.norm() + std::abs(lambda) * mu.norm();
    out.residual = gnorm / scale;
    out.steps = step;
    if (out.residual <= 1e-14) {
      out.converged = true;
      return out;
    }
    if (step > 0 && gnorm > 0.5 * prev && out.residual <= 1e-11) {
      // Rounding floor reached.
      out.converged = true;
      return out;
    }
    if (step == max_steps) break;
    prev = gnorm;

    const double n2q = fp.norm2q(u);
    const double beta = 2.0 * (1.0 - fp.q) / (fp.A * n2q * n2q);
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<std::size_t>(fp.k.nonZeros() + 6 * n + 4));
    for (Index c = 0; c < fp.k.outerSize(); ++c)
      for (SparseMat::InnerIterator it(fp.k, c); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
    for (Index i = 0; i < n; ++i) {
      t.emplace_back(i, i, (2.0 * fp.q - 1.0) * V[i] * fp.m[i] - lambda * fp.m[i]);
      t.emplace_back(i, n, -mu[i]);
      t.emplace_back(n, i, -mu[i]);
      t.emplace_back(i, n + 1, beta * z[i]);
      t.emplace_back(n + 1, i, z[i]);
    }
    t.emplace_back(n + 1, n + 1, -1.0);
    SparseMat jac(n + 2, n + 2);
    jac.setFromTriplets(t.begin(), t.end());
    jac.makeCompressed();
    Eigen::SparseLU<SparseMat> lu;
    lu.compute(jac);
    if (lu.info() != Eigen::Success) return out;
    Vec rhs(n + 2);
    rhs.head(n) = -g1;
    rhs[n] = -g2;
    rhs[n + 1] = 0.0;
    const Vec d = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !d.allFinite()) return out;
    u += d.head(n);
    lambda += d[n];
  }
  return out;
}

struct GroundCheck {
  bool ok = false;
  double j = 0.0;
  double lambda = 0.0;
  double residual = 0.0;
};

// u certifies when it is nonnegative and is the first eigenfunction of
// L + V(u) with eigenvalue J(u).
inline GroundCheck ground_state_check(const MeasuredSpace& space, const DirichletForm& form, const FreeProblem& fp,
                                      const Vec& u, const JSolveOptions& opts) {
  GroundCheck g;
  const double umax = u.cwiseAbs().maxCoeff();
  if (!(umax > 0.0) || !u.allFinite()) return g;
  const Vec V = fp.potential(u);
  const EigenPair e = free_ground_state(space, form, V, u, opts.eigen);
  g.j = fp.j(u);
  g.lambda = e.lambda;
  const Vec un = u / fp.mnorm(u);
  const Vec r = fp.k * un + V.cwiseProduct(fp.m).cwiseProduct(un) - e.lambda * fp.m.cwiseProduct(un);
  g.residual = r.norm();
  g.ok = u.minCoeff() >= -1e-12 * umax && std::abs(e.lambda - g.j) <= 1e-9 * (1.0 + std::abs(g.j)) &&
         g.residual <= opts.eig_tol;
  return g;
}

}  // namespace detail

/// dJ/du as a vector g with g . phi equal to the Gateaux derivative in the
/// direction phi. Zero on grounded vertices.
inline FunctionVec j_gradient(const MeasuredSpace& space, const DirichletForm& form, const LpBudget& budget,
                              const FunctionVec& u) {
  check_conforming(space, form);
  detail::require_open_range(budget);
  const FunctionVec up = form.pin(u);
  const Vec u2m = up.cwiseAbs2().cwiseProduct(space.m());
  const double den = pairwise_sum(u2m);
  if (den == 0.0) throw InputError("J is undefined at the zero function");
  const double jv = j_value(space, form, budget, up);
  const Vec V = detail::potential_of(up, space.m(), budget.A(), budget.q());
  const SparseMat k = form.stiffness();
  Vec g = (2.0 / den) * (k * up + V.cwiseProduct(space.m()).cwiseProduct(up) - jv * space.m().cwiseProduct(up));
  return form.pin(g);
}

/// Closed-form maximizing potential for a minimizer u of J. The result has
/// ||V||_p = A and vanishes wherever u does.
inline Potential extremal_potential(const MeasuredSpace& space, const LpBudget& budget, const FunctionVec& u) {
  detail::require_open_range(budget);
  if (u.size() != space.size()) throw InputError("dimension mismatch in extremal_potential");
  return detail::potential_of(u, space.m(), budget.A(), budget.q());
}

/// Minimizer of J over functions on the free set, returned nonnegative with
/// ||u||_2 = 1.
inline JMinimum minimize_j(const MeasuredSpace& space, const DirichletForm& form, const LpBudget& budget,
                           const JSolveOptions& opts = {}) {
  check_conforming(space, form);
  detail::require_open_range(budget);
  if (form.free_size() == 0) throw InputError("free set is empty");
  const detail::FreeProblem fp = detail::make_free_problem(space, form, budget);
  const Index nf = form.free_size();

  JMinimum out;
  int outer = 0;

  Vec u;
  if (opts.initial) {
    u = form.restrict_to_free(*opts.initial).cwiseAbs();
    if (u.maxCoeff() == 0.0) throw InputError("initial guess vanishes on the free set");
  } else {
    u = form.restrict_to_free(detail::free_ground_state(space, form, Vec::Zero(nf), Vec::Ones(nf), opts.eigen).u)
            .cwiseAbs();
  }
  u /= fp.mnorm(u);
  double jcur = fp.j(u);
  out.trace.push_back(jcur);

  // Damped fixed point: theta halves when J increases, floor 1/64, reset on success.
  double theta = 1.0;
  for (int k = 0; k < opts.scf_steps && outer < opts.max_outer; ++k, ++outer) {
    const EigenPair e = detail::free_ground_state(space, form, fp.potential(u), u, opts.eigen);
    Vec next = form.restrict_to_free(e.u).cwiseAbs();
    Vec cand = (1.0 - theta) * u + theta * next;
    cand /= fp.mnorm(cand);
    const double jc = fp.j(cand);
    if (jc <= jcur + 1e-15 * (1.0 + std::abs(jcur))) {
      const double dj = jcur - jc;
      u = cand;
      jcur = jc;
      out.trace.push_back(jcur);
      theta = 1.0;
      if (dj <= opts.j_tol * (1.0 + std::abs(jcur))) break;
    } else {
      theta *= 0.5;
      if (theta < 1.0 / 64.0) break;
    }
  }

  auto finish = [&](const Vec& uf, const std::string& method) {
    out.u = form.extend_from_free(uf.cwiseAbs() / fp.mnorm(uf));
    out.j_value = j_value(space, form, budget, out.u);
    out.iterations = outer;
    out.method = method;
  };

  // Newton from the fixed-point iterate.
  {
    Vec un = u;
    double lam = 0.0;
    const detail::NewtonOutcome nw = detail::newton_polish(fp, un, lam, opts.newton_steps);
    outer += nw.steps;
    if (nw.converged) {
      const detail::GroundCheck gc = detail::ground_state_check(space, form, fp, un, opts);
      if (gc.ok && gc.j <= jcur + 1e-9 * (1.0 + std::abs(jcur))) {
        out.trace.push_back(gc.j);
        out.converged = true;
        finish(un, "fixed-point+newton");
        return out;
      }
    }
  }

  // Budget ramp: Newton corrector along A_k -> A, starting from the V = 0
  // ground state.
  Vec ur = form.restrict_to_free(lambda1(space, form, Potential::Zero(form.size()), opts.eigen).u).cwiseAbs();
  const double lam0 = fp.k.size() > 0 ? ur.dot(fp.k * ur) / ur.cwiseAbs2().dot(fp.m) : 0.0;
  double reached = 0.0;
  double step = std::min(fp.A, 0.1 * lam0 + 1e-3 * fp.A);
  if (!(step > 0.0)) step = fp.A;
  bool ramp_ok = false;
  while (outer < opts.max_outer) {
    ++outer;
    const double target = std::min(fp.A, reached + step);
    detail::FreeProblem stage = fp;
    stage.A = target;
    Vec un = ur;
    double lam = 0.0;
    const detail::NewtonOutcome nw = detail::newton_polish(stage, un, lam, opts.newton_steps);
    bool accepted = false;
    if (nw.converged) {
      const detail::GroundCheck gc = detail::ground_state_check(space, form, stage, un, opts);
      accepted = gc.ok;
    }
    if (accepted) {
      ur = un.cwiseAbs();
      reached = target;
      if (nw.steps <= 4) step *= 2.0;
      if (reached >= fp.A) {
        ramp_ok = true;
        break;
      }
    } else {
      step *= 0.5;
      if (step < 1e-10 * fp.A) break;
    }
  }
  if (ramp_ok) {
    out.trace.push_back(fp.j(ur));
    out.converged = true;
    finish(ur, "budget-ramp+newton");
    return out;
  }

  // Nothing certified: hand back the best iterate seen.
  out.converged = false;
  finish(u, "fixed-point");
  return out;
}

/// Sup-norm bounds for an extremal pair: ||u||_inf <= (lambda/A)^{(p-1)/2} ||u||_{2q}
/// and ||V||_inf <= lambda, each with relative tolerance 1e-10. Slack is
/// bound * (1 + 1e-10) - value.
inline LinfBoundReport check_linf_bounds(const MeasuredSpace& space, const ExtremalResult& result,
                                         const LpBudget& budget) {
  LinfBoundReport r;
  constexpr double kRel = 1e-10;
  r.u_inf = result.u.cwiseAbs().maxCoeff();
  r.v_inf = result.V.cwiseAbs().maxCoeff();
  r.v_bound = result.lambda;
  if (budget.is_infinite()) {
    // p = inf: the u bound degenerates to ||u||_inf <= ||u||_inf-type
    // trivialities; only the potential bound carries content.
    r.u_bound = r.u_inf;
  } else {
    const double base = result.lambda / budget.A();
    r.u_bound = std::pow(base, 0.5 * (budget.p() - 1.0)) * lp_norm(space, result.u, 2.0 * budget.q());
  }
  r.u_slack = r.u_bound * (1.0 + kRel) - r.u_inf;
  r.v_slack = r.v_bound * (1.0 + kRel) - r.v_inf;
  r.valid = r.u_slack >= 0.0 && r.v_slack >= 0.0;
  return r;
}

/// p = inf: the constant potential V = A is optimal and lambda = lambda_1(0) + A.
inline ExtremalResult solve_p_inf(const MeasuredSpace& space, const DirichletForm& form, const LpBudget& budget,
                                  const EigenOptions& eopts = {}) {
  check_conforming(space, form);
  if (!budget.is_infinite()) throw InputError("solve_p_inf needs p = inf");
  const EigenPair base = lambda1(space, form, Potential::Zero(form.size()), eopts);
  ExtremalResult res;
  res.method = "constant-potential";
  res.u = base.u;
  res.V = form.pin(Potential::Constant(form.size(), budget.A()));
  res.lambda = base.lambda + budget.A();
  res.j_value = j_value(space, form, budget, res.u);
  const EigenPair shifted = lambda1(space, form, res.V, eopts);
  res.eigen_residual = shifted.residual_l2;
  res.iterations = base.iterations;
  res.converged = base.converged && shifted.converged;
  res.trace = {res.j_value};
  res.residuals["shift_identity"] = std::abs(shifted.lambda - res.lambda);
  res.residuals["eigen"] = shifted.residual_l2;
  res.residuals["lambda_minus_j"] = std::abs(res.lambda - res.j_value);

  const double scale = 1.0 + std::abs(res.lambda);
  res.certificate.flag("converged", res.converged);
  res.certificate.at_most("shift_identity", res.residuals["shift_identity"], 1e-10 * scale);
  res.certificate.at_most("lambda_equals_j", res.residuals["lambda_minus_j"], 1e-8 * scale);
  res.certificate.at_most("eigen_residual", res.eigen_residual, 1e-9);
  res.certificate.at_most("budget", std::abs(lp_norm(space, res.V, kInf) - budget.A()) / budget.A(), 1e-12);
  res.bounds = check_linf_bounds(space, res, budget);
  res.certificate.flag("linf_bounds", res.bounds->valid);
  return res;
}

/// p in (1, inf): minimize J, build the closed-form potential and certify
/// lambda_1(V) = J(u) = R_V(u).
inline ExtremalResult solve_p_gt_1(const MeasuredSpace& space, const DirichletForm& form, const LpBudget& budget,
                                   const JSolveOptions& opts = {}) {
  check_conforming(space, form);
  if (budget.is_infinite()) return solve_p_inf(space, form, budget, opts.eigen);
  if (budget.p() <= 1.0 + 1e-6) throw InputError("p too close to 1 for the p > 1 solver; use the p = 1 solver");

  const JMinimum jm = minimize_j(space, form, budget, opts);
  ExtremalResult res;
  res.method = jm.method;
  res.seed = opts.seed;
  res.trace = jm.trace;
  res.iterations = jm.iterations;
  res.converged = jm.converged;
  res.u = jm.u;
  res.j_value = jm.j_value;
  res.V = form.pin(extremal_potential(space, budget, res.u));

  EigenOptions eo = opts.eigen;
  eo.warm_start = res.u;
  const EigenPair e = lambda1(space, form, res.V, eo);
  res.lambda = e.lambda;

  const SparseMat k = form.stiffness();
  const Vec mu = space.m().cwiseProduct(res.u);
  const Vec r = form.pin(k * res.u + res.V.cwiseProduct(mu) - res.lambda * mu);
  res.eigen_residual = r.norm();
  const double rq = rayleigh(space, form, res.V, res.u);
  const double scale = 1.0 + std::abs(res.j_value);
  const FunctionVec g = j_gradient(space, form, budget, res.u);

  res.residuals["eigen"] = res.eigen_residual;
  res.residuals["lambda_minus_j"] = std::abs(res.lambda - res.j_value);
  res.residuals["rayleigh_minus_j"] = std::abs(rq - res.j_value);
  res.residuals["budget_rel"] = std::abs(lp_norm(space, res.V, budget.p()) - budget.A()) / budget.A();
  res.residuals["gradient_norm"] = g.norm();
  res.residuals["eigenvector_match"] = (res.u - e.u).cwiseAbs().maxCoeff();
  res.residuals["u_min"] = res.u.minCoeff();

  res.certificate.flag("converged", res.converged);
  res.certificate.at_most("lambda_equals_j", res.residuals["lambda_minus_j"], 1e-8 * scale);
  res.certificate.at_most("rayleigh_equals_j", res.residuals["rayleigh_minus_j"], 1e-8 * scale);
  res.certificate.at_most("budget", res.residuals["budget_rel"], 1e-10);
  res.certificate.at_most("eigen_residual", res.eigen_residual, opts.eig_tol);
  res.certificate.at_least("nonnegative_u", res.residuals["u_min"], -1e-12);
  res.certificate.at_most("gradient", res.residuals["gradient_norm"], 1e-6 * scale);
  res.certificate.at_most("first_eigenfunction", res.residuals["eigenvector_match"], 1e-6);

  res.bounds = check_linf_bounds(space, res, budget);
  res.certificate.at_least("linf_u_bound", res.bounds->u_slack, 0.0);
  res.certificate.at_least("linf_v_bound", res.bounds->v_slack, 0.0);

  if (opts.uniqueness_probe && form.free_components() == 1) {
    std::mt19937_64 rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> unif(0.5, 1.5);
    FunctionVec start = FunctionVec::Zero(form.size());
    for (Index i : form.free_set()) start[i] = unif(rng);
    JSolveOptions second = opts;
    second.initial = start;
    second.uniqueness_probe = false;
    const JMinimum other = minimize_j(space, form, budget, second);
    const Potential v2 = form.pin(extremal_potential(space, budget, other.u));
    res.residuals["uniqueness_gap"] = (v2 - res.V).cwiseAbs().maxCoeff();
    res.certificate.at_most("uniqueness_probe", res.residuals["uniqueness_gap"], 1e-6);
  }
  return res;
}

}  // namespace extremal
