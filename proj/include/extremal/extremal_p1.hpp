#pragma once

/// The p = 1 problem. Minimizers of
///
///     T(v) = (a[v,v] + A) / ||v||_2^2   over  K = { |v| <= 1 }
///
/// give the maximal first eigenvalue; the potential is read off the
/// coincidence set I = { u = 1 }. T is minimized by Dinkelbach iteration,
/// each subproblem being a box QP.

#include <random>
#include <stdexcept>

#include "extremal/box_qp.hpp"
#include "extremal/budget.hpp"
#include "extremal/core_form.hpp"
#include "extremal/eigensolver.hpp"
#include "extremal/extremal_pgt1.hpp"
#include "extremal/result.hpp"

namespace extremal {

/// A solver ran out of iterations or hit an unusable state.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ObstacleProblemInput {
  FunctionVec psi;  // lower obstacle
  FunctionVec f;    // forcing, paired as sum f_i v_i m_i
};

struct TSolveOptions {
  int max_outer = 200;
  double tol = 1e-12;
  double tol_I = 1e-8;
  std::uint64_t seed = 0;
  bool record_inner_trace = false;
  BoxQpOptions qp;
  EigenOptions eigen;
};

struct TMinimum {
  FunctionVec u;
  double lambda = 0.0;
  std::vector<double> trace;
  /// Per outer step, the box-QP objective after each projected-gradient step.
  std::vector<std::vector<double>> inner_traces;
  int iterations = 0;
  bool converged = false;
};

inline double t_value(const MeasuredSpace& space, const DirichletForm& form, double A, const FunctionVec& v) {
  check_conforming(space, form);
  const FunctionVec vp = form.pin(v);
  if (vp.cwiseAbs().maxCoeff() > 1.0 + 1e-12) throw InputError("T is defined on |v| <= 1 only");
  const double den = pairwise_sum(Vec(vp.cwiseAbs2().cwiseProduct(space.m())));
  if (den == 0.0) throw InputError("T is undefined at the zero function");
  return (a_form(form, vp, vp) + A) / den;
}

/// Dinkelbach iteration on T: given lambda_k, minimize a[v,v] - lambda_k ||v||^2
/// over the box, then lambda_{k+1} = T(v_k).
inline TMinimum minimize_t(const MeasuredSpace& space, const DirichletForm& form, double A,
                           const TSolveOptions& opts = {}) {
  check_conforming(space, form);
  if (!(A > 0.0)) throw InputError("A must be positive");
  if (form.free_size() == 0) throw InputError("free set is empty");
  const Index nf = form.free_size();
  const SparseMat k = form.free_stiffness();
  const Vec mf = form.restrict_to_free(space.m());
  const SparseMat mm = SparseMat(mf.asDiagonal());

  auto tval = [&](const Vec& v) { return (v.dot(k * v) + A) / v.cwiseAbs2().dot(mf); };

  TMinimum out;
  Vec v = form.restrict_to_free(lambda1(space, form, Potential::Zero(form.size()), opts.eigen).u).cwiseAbs();
  v /= v.maxCoeff();
  double lam = tval(v);
  out.trace.push_back(lam);

  const Vec lo = Vec::Constant(nf, -1.0);
  const Vec hi = Vec::Constant(nf, 1.0);
  const Vec zero = Vec::Zero(nf);
  BoxQpOptions qo = opts.qp;
  qo.record_trace = opts.record_inner_trace;

  for (int outer = 0; outer < opts.max_outer; ++outer) {
    const SparseMat q = 2.0 * (k - lam * mm);
    BoxQpResult sub = box_qp(q, zero, lo, hi, v, qo);
    if (opts.record_inner_trace) out.inner_traces.push_back(sub.trace);
    Vec w = sub.x.cwiseAbs();
    out.iterations = outer + 1;
    if (w.maxCoeff() == 0.0) {
      // The subproblem minimum is the origin: no v beats lambda.
      out.converged = true;
      break;
    }
    const double lnew = tval(w);
    if (lnew > lam) {
      // Subproblem made no progress; lambda is already a fixed point.
      out.converged = std::abs(lnew - lam) <= 1e-9 * (1.0 + std::abs(lam));
      break;
    }
    const double d = lam - lnew;
    v = w;
    lam = lnew;
    out.trace.push_back(lam);
    if (d <= opts.tol * (1.0 + std::abs(lam))) {
      out.converged = true;
      break;
    }
  }
  out.u = form.extend_from_free(v);
  out.lambda = t_value(space, form, A, out.u);
  return out;
}

/// I = { i : u_i >= 1 - tol_I } with its measure.
inline CoincidenceSet coincidence_set(const MeasuredSpace& space, const FunctionVec& u, double tol_I = 1e-8) {
  if (u.size() != space.size()) throw InputError("dimension mismatch in coincidence_set");
  CoincidenceSet s;
  std::vector<double> ms;
  for (Index i = 0; i < u.size(); ++i) {
    if (u[i] >= 1.0 - tol_I) {
      s.indices.push_back(i);
      ms.push_back(space.m(i));
    }
  }
  s.measure = pairwise_sum(std::span<const double>(ms.data(), ms.size()));
  return s;
}

/// Probe set for the variational inequality: u itself, clipped coordinate
/// bumps u +- e_i, box corners (all of them for up to 12 free vertices, else
/// 256 seeded ones) and 100 seeded random box points.
inline std::vector<FunctionVec> vi_probes(const DirichletForm& form, const FunctionVec& u, std::uint64_t seed = 0) {
  std::vector<FunctionVec> probes;
  probes.push_back(u);
  for (Index i : form.free_set()) {
    FunctionVec up = u, dn = u;
    up[i] = std::min(1.0, u[i] + 1.0);
    dn[i] = std::max(-1.0, u[i] - 1.0);
    probes.push_back(up);
    probes.push_back(dn);
  }
  const auto& fs = form.free_set();
  const Index nf = form.free_size();
  std::mt19937_64 rng(seed);
  if (nf <= 12) {
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << nf); ++mask) {
      FunctionVec c = FunctionVec::Zero(form.size());
      for (Index k = 0; k < nf; ++k) c[fs[static_cast<std::size_t>(k)]] = (mask >> k) & 1U ? 1.0 : -1.0;
      probes.push_back(c);
    }
  } else {
    std::bernoulli_distribution coin(0.5);
    for (int s = 0; s < 256; ++s) {
      FunctionVec c = FunctionVec::Zero(form.size());
      for (Index i : fs) c[i] = coin(rng) ? 1.0 : -1.0;
      probes.push_back(c);
    }
  }
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int s = 0; s < 100; ++s) {
    FunctionVec c = FunctionVec::Zero(form.size());
    for (Index i : fs) c[i] = unif(rng);
    probes.push_back(c);
  }
  return probes;
}

/// min over probes v of a[u, v-u] - lambda sum u (v-u) m. Nonnegative at a
/// solution of the variational inequality.
inline double variational_inequality_residual(const MeasuredSpace& space, const DirichletForm& form,
                                              const FunctionVec& u, double lambda,
                                              const std::vector<FunctionVec>& probes) {
  check_conforming(space, form);
  double worst = kInf;
  const Vec um = u.cwiseProduct(space.m());
  for (const FunctionVec& v : probes) {
    const FunctionVec d = form.pin(v - u);
    const double s = a_form(form, u, d) - lambda * pairwise_sum(Vec(um.cwiseProduct(d)));
    worst = std::min(worst, s);
  }
  return worst;
}

/// Same probes with a[v, v-u] on the left. Since a[v, v-u] = a[u, v-u] + a[v-u, v-u],
/// this is never smaller than the a[u, v-u] form.
inline double variational_inequality_residual_left(const MeasuredSpace& space, const DirichletForm& form,
                                                   const FunctionVec& u, double lambda,
                                                   const std::vector<FunctionVec>& probes) {
  check_conforming(space, form);
  double worst = kInf;
  const Vec um = u.cwiseProduct(space.m());
  for (const FunctionVec& v : probes) {
    const FunctionVec d = form.pin(v - u);
    const double s = a_form(form, form.pin(v), d) - lambda * pairwise_sum(Vec(um.cwiseProduct(d)));
    worst = std::min(worst, s);
  }
  return worst;
}

/// Row-wise check of L u = lambda u off I and L u = 0 on I, plus vanishing
/// energy on edges interior to I.
inline ComplementarityReport complementarity_check(const MeasuredSpace& space, const DirichletForm& form,
                                                   const FunctionVec& u, const CoincidenceSet& I, double lambda,
                                                   std::uint64_t seed = 0) {
  check_conforming(space, form);
  ComplementarityReport rep;
  const Vec ku = form.stiffness() * u;
  std::vector<bool> inI(static_cast<std::size_t>(form.size()), false);
  for (Index i : I.indices) inI[static_cast<std::size_t>(i)] = true;
  rep.scale = form.pin(ku).cwiseAbs().maxCoeff();
  for (Index i : form.free_set()) {
    if (inI[static_cast<std::size_t>(i)]) rep.on_set_residual = std::max(rep.on_set_residual, std::abs(ku[i]));
    else rep.off_set_residual = std::max(rep.off_set_residual, std::abs(ku[i] - lambda * space.m(i) * u[i]));
  }
  const double tol = 1e-7 * rep.scale;
  rep.off_set_ok = rep.off_set_residual <= tol;
  rep.on_set_ok = rep.on_set_residual <= tol;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<FunctionVec> probes;
  probes.push_back(form.pin(FunctionVec::Ones(form.size())));
  for (int s = 0; s < 8; ++s) {
    FunctionVec v(form.size());
    for (Index i = 0; i < v.size(); ++i) v[i] = unif(rng);
    probes.push_back(form.pin(v));
  }
  for (const FunctionVec& v : probes) {
    const Vec e = edge_energy(form, u, v);
    std::vector<double> interior;
    const auto& edges = form.edges();
    for (std::size_t k = 0; k < edges.size(); ++k)
      if (inI[static_cast<std::size_t>(edges[k].i)] && inI[static_cast<std::size_t>(edges[k].j)])
        interior.push_back(e[static_cast<Index>(k)]);
    rep.interior_energy = std::max(rep.interior_energy,
                                   std::abs(pairwise_sum(std::span<const double>(interior.data(), interior.size()))));
  }
  rep.energy_ok = rep.interior_energy <= tol;
  return rep;
}

/// Solution of a[u, v-u] >= <f, v-u> for all v >= psi, u >= psi.
inline FunctionVec solve_obstacle(const MeasuredSpace& space, const DirichletForm& form,
                                  const ObstacleProblemInput& input, const BoxQpOptions& opts = {}) {
  check_conforming(space, form);
  form.check_size(input.psi);
  form.check_size(input.f);
  for (Index d : form.dirichlet_set())
    if (input.psi[d] > 0.0) throw InputError("obstacle is infeasible: psi > 0 on a grounded vertex");
  const Index nf = form.free_size();
  if (nf == 0) return FunctionVec::Zero(form.size());
  const SparseMat k = form.free_stiffness();
  const Vec mf = form.restrict_to_free(space.m());
  const Vec b = form.restrict_to_free(input.f).cwiseProduct(mf);
  const Vec lo = form.restrict_to_free(input.psi);
  const Vec hi = Vec::Constant(nf, kInf);
  BoxQpResult r = box_qp(k, b, lo, hi, lo.cwiseMax(0.0), opts);
  if (!r.converged) throw SolverError("obstacle solver did not converge");
  return form.extend_from_free(r.x);
}

/// p = 1: minimize T, take I = {u = 1}, set V = (A / m(I)) on I and
/// lambda = A / m(I), then certify.
inline ExtremalResult solve_p1(const MeasuredSpace& space, const DirichletForm& form, double A,
                               const TSolveOptions& opts = {}) {
  check_conforming(space, form);
  const LpBudget budget(1.0, A);
  const TMinimum tm = minimize_t(space, form, A, opts);

  ExtremalResult res;
  res.method = "dinkelbach";
  res.seed = opts.seed;
  res.u = tm.u;
  res.trace = tm.trace;
  res.iterations = tm.iterations;
  res.converged = tm.converged;

  P1Details det;
  det.tol_I = opts.tol_I;
  det.t_value = tm.lambda;
  det.I = coincidence_set(space, res.u, opts.tol_I);
  if (det.I.empty() || !(det.I.measure > 0.0))
    throw SolverError("coincidence set is empty: the minimizer never reaches the obstacle");
  det.set_size_tight = static_cast<Index>(coincidence_set(space, res.u, opts.tol_I / 10.0).indices.size());
  det.set_size_loose = static_cast<Index>(coincidence_set(space, res.u, opts.tol_I * 10.0).indices.size());

  res.lambda = A / det.I.measure;
  res.V = Potential::Zero(form.size());
  for (Index i : det.I.indices) res.V[i] = res.lambda;
  res.j_value = j_value(space, form, budget, res.u);

  EigenOptions eo = opts.eigen;
  eo.warm_start = res.u;
  const EigenPair e = lambda1(space, form, res.V, eo);
  const double rq = rayleigh(space, form, res.V, res.u);
  const FunctionVec e_sup = e.u / e.u.cwiseAbs().maxCoeff();

  const std::vector<FunctionVec> probes = vi_probes(form, res.u, opts.seed);
  det.vi_probe_count = static_cast<Index>(probes.size());
  det.vi_slack_min = variational_inequality_residual(space, form, res.u, det.t_value, probes);
  det.vi_slack_min_left_form = variational_inequality_residual_left(space, form, res.u, det.t_value, probes);
  det.complementarity = complementarity_check(space, form, res.u, det.I, det.t_value, opts.seed);

  // Discrete optimality system: K u + V m u = T(u) m u with V supported on I.
  const Vec ku = form.stiffness() * res.u;
  det.kkt_potential = Potential::Zero(form.size());
  for (Index i : det.I.indices)
    det.kkt_potential[i] = std::max(0.0, det.t_value - ku[i] / (space.m(i) * res.u[i]));
  det.kkt_lambda1 = lambda1(space, form, det.kkt_potential, opts.eigen).lambda;

  const Vec mu = space.m().cwiseProduct(e.u);
  res.eigen_residual = form.pin(form.stiffness() * e.u + res.V.cwiseProduct(mu) - e.lambda * mu).norm();

  const double scale = 1.0 + res.lambda;
  res.residuals["t_minus_A_over_mI"] = std::abs(det.t_value - res.lambda);
  res.residuals["lambda1_of_V"] = e.lambda;
  res.residuals["lambda1_minus_lambda"] = std::abs(e.lambda - res.lambda);
  res.residuals["eigenvector_match"] = (e_sup - res.u).cwiseAbs().maxCoeff();
  res.residuals["rayleigh_minus_j"] = std::abs(rq - res.j_value);
  res.residuals["j_minus_t"] = std::abs(res.j_value - det.t_value);
  res.residuals["budget_abs"] = std::abs(lp_norm(space, res.V, 1.0) - A);
  res.residuals["sup_norm_u"] = res.u.cwiseAbs().maxCoeff();
  res.residuals["eigen"] = res.eigen_residual;
  res.residuals["kkt_lambda1_minus_t"] = std::abs(det.kkt_lambda1 - det.t_value);
  res.residuals["kkt_budget_abs"] = std::abs(lp_norm(space, det.kkt_potential, 1.0) - A);

  res.certificate.flag("converged", res.converged);
  res.certificate.at_least("m_I_positive", det.I.measure, std::numeric_limits<double>::min());
  res.certificate.at_most("unit_sup_norm", std::abs(res.residuals["sup_norm_u"] - 1.0), 1e-10);
  res.certificate.at_most("budget_identity", res.residuals["t_minus_A_over_mI"], 1e-8 * scale);
  res.certificate.at_most("lambda1_matches", res.residuals["lambda1_minus_lambda"], 1e-8 * scale);
  res.certificate.at_most("eigenfunction_matches", res.residuals["eigenvector_match"], 1e-6);
  res.certificate.at_most("rayleigh_equals_j", res.residuals["rayleigh_minus_j"], 1e-8 * scale);
  res.certificate.at_most("j_equals_t", res.residuals["j_minus_t"], 1e-8 * scale);
  res.certificate.at_most("budget", res.residuals["budget_abs"], 1e-12 * A);
  res.certificate.at_least("vi_slack", det.vi_slack_min, -1e-8);
  res.certificate.flag("complementarity_off_I", det.complementarity.off_set_ok);
  res.certificate.flag("complementarity_on_I", det.complementarity.on_set_ok);
  res.certificate.flag("interior_energy", det.complementarity.energy_ok);
  res.certificate.flag("tol_I_sensitivity", det.set_size_tight == static_cast<Index>(det.I.indices.size()) &&
                                                det.set_size_loose == static_cast<Index>(det.I.indices.size()));

  if (static_cast<Index>(det.I.indices.size()) == form.free_size()) {
    det.regime_warning = true;
    det.regime_notes.push_back("coincidence set is the entire free set");
  }
  if (!res.certificate.passed("lambda1_matches")) {
    det.regime_warning = true;
    det.regime_notes.push_back("lambda_1 of the constant-on-I potential differs from A/m(I)");
  }
  res.p1 = std::move(det);
  return res;
}

}  // namespace extremal
