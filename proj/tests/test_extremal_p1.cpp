#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace extremal;
using namespace testing_support;

namespace {

// Independent route to the p = 1 minimizer on a symmetric grounded path.
// For a trial coincidence set I (centered interval), u = 1 on I and
// (K - lambda M) u = 0 on the remaining free vertices. The Dinkelbach
// function F(lambda) = a[u,u] - lambda ||u||^2 + A is strictly decreasing, so
// its root (by bisection) is the value T(u) of that branch. The minimizer is
// the feasible branch with the smallest root.
struct Branch {
  double lambda = kInf;
  Vec u;
};

Vec branch_function(const Instance& inst, const std::vector<bool>& in_I, double lambda) {
  const DirichletForm& f = inst.form;
  const Eigen::MatrixXd k(f.stiffness());
  std::vector<Index> off;
  for (Index i : f.free_set())
    if (!in_I[static_cast<std::size_t>(i)]) off.push_back(i);
  Vec u = Vec::Zero(f.size());
  for (Index i : f.free_set())
    if (in_I[static_cast<std::size_t>(i)]) u[i] = 1.0;
  if (off.empty()) return u;
  const auto no = static_cast<Index>(off.size());
  Eigen::MatrixXd a(no, no);
  Vec rhs(no);
  for (Index r = 0; r < no; ++r) {
    const Index i = off[static_cast<std::size_t>(r)];
    rhs[r] = 0.0;
    for (Index j = 0; j < f.size(); ++j)
      if (in_I[static_cast<std::size_t>(j)]) rhs[r] -= k(i, j);
    for (Index c = 0; c < no; ++c) a(r, c) = k(i, off[static_cast<std::size_t>(c)]);
    a(r, r) -= lambda * inst.space.m(i);
  }
  const Vec sol = a.partialPivLu().solve(rhs);
  for (Index r = 0; r < no; ++r) u[off[static_cast<std::size_t>(r)]] = sol[r];
  return u;
}

Branch best_symmetric_branch(const Instance& inst, double A) {
  const Index n = inst.space.size();
  Branch best;
  for (Index half = 0; 2 * half + 1 <= n - 2; ++half) {
    std::vector<bool> in_I(static_cast<std::size_t>(n), false);
    const Index c = n / 2;
    for (Index i = c - half; i <= c + half; ++i) in_I[static_cast<std::size_t>(i)] = true;
    auto F = [&](double lam) {
      const Vec u = branch_function(inst, in_I, lam);
      return a_form(inst.form, u, u) - lam * u.cwiseAbs2().dot(inst.space.m()) + A;
    };
    // F is continuous and decreasing below the first pole, the smallest
    // eigenvalue of the off-I block.
    double lo = 0.0, hi = 1e3;
    std::vector<Index> off;
    for (Index i : inst.form.free_set())
      if (!in_I[static_cast<std::size_t>(i)]) off.push_back(i);
    if (!off.empty()) {
      const Eigen::MatrixXd k(inst.form.stiffness());
      const auto no = static_cast<Index>(off.size());
      Eigen::MatrixXd ko(no, no), mo = Eigen::MatrixXd::Zero(no, no);
      for (Index r = 0; r < no; ++r) {
        mo(r, r) = inst.space.m(off[static_cast<std::size_t>(r)]);
        for (Index c2 = 0; c2 < no; ++c2) ko(r, c2) = k(off[static_cast<std::size_t>(r)], off[static_cast<std::size_t>(c2)]);
      }
      hi = Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd>(ko, mo).eigenvalues()[0] * (1.0 - 1e-9);
    }
    if (F(lo) <= 0.0 || F(hi) >= 0.0) continue;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (F(mid) > 0.0 ? lo : hi) = mid;
    }
    const Vec u = branch_function(inst, in_I, 0.5 * (lo + hi));
    if (u.minCoeff() < -1e-12 || u.maxCoeff() > 1.0 + 1e-12) continue;
    const double t = t_value(inst.space, inst.form, A, u);
    if (t < best.lambda) best = {t, u};
  }
  return best;
}

}  // namespace

TEST(TValue, Examples) {
  const Instance two = two_vertex();
  EXPECT_DOUBLE_EQ(t_value(two.space, two.form, 1.0, Vec{{1.0, 1.0}}), 0.5);
  EXPECT_DOUBLE_EQ(t_value(two.space, two.form, 0.0, Vec{{1.0, -1.0}}), 2.0);
  const Instance p = unit_path(3, true);
  EXPECT_DOUBLE_EQ(t_value(p.space, p.form, 2.0, Vec{{0.0, 1.0, 0.0}}), 4.0);
}

TEST(TValue, OutsideBoxOrZeroRejected) {
  const Instance two = two_vertex();
  EXPECT_THROW(t_value(two.space, two.form, 1.0, Vec{{1.5, 0.0}}), InputError);
  EXPECT_THROW(t_value(two.space, two.form, 1.0, Vec::Zero(2)), InputError);
}

TEST(MinimizeT, TwoVertex) {
  const Instance two = two_vertex();
  for (double A : {0.1, 1.0, 7.0}) {
    const TMinimum t = minimize_t(two.space, two.form, A);
    EXPECT_TRUE(t.converged);
    EXPECT_NEAR(t.lambda, A / 2.0, 1e-12);
    EXPECT_NEAR(t.u[0], 1.0, 1e-12);
    EXPECT_NEAR(t.u[1], 1.0, 1e-12);
  }
}

TEST(MinimizeT, TwoVertexBoxGrid) {
  const Instance two = two_vertex();
  const double A = 1.0;
  double best = kInf;
  for (int a = -200; a <= 200; ++a)
    for (int b = -200; b <= 200; ++b) {
      if (a == 0 && b == 0) continue;
      best = std::min(best, t_value(two.space, two.form, A, Vec{{a / 200.0, b / 200.0}}));
    }
  EXPECT_NEAR(best, minimize_t(two.space, two.form, A).lambda, 1e-12);
}

TEST(MinimizeT, SingleFreeVertex) {
  const Instance p = unit_path(3, true);
  const TMinimum t = minimize_t(p.space, p.form, 0.3);
  EXPECT_NEAR(t.lambda, 2.3, 1e-12);
  EXPECT_NEAR(t.u[1], 1.0, 1e-14);
}

TEST(MinimizeT, InnerProjectedGradientStepsAreMonotone) {
  const Instance p = unit_path(15, true);
  TSolveOptions o;
  o.record_inner_trace = true;
  o.qp.polish_every = 50;
  const TMinimum t = minimize_t(p.space, p.form, 0.05, o);
  ASSERT_FALSE(t.inner_traces.empty());
  for (const auto& tr : t.inner_traces)
    for (std::size_t k = 1; k < tr.size(); ++k) EXPECT_LE(tr[k], tr[k - 1] + 1e-14);
  for (std::size_t k = 1; k < t.trace.size(); ++k) EXPECT_LE(t.trace[k], t.trace[k - 1]);
}

TEST(CoincidenceSet, Examples) {
  const MeasuredSpace s(Vec{{2.0, 3.0}});
  const CoincidenceSet all = coincidence_set(s, Vec{{1.0, 1.0}});
  EXPECT_EQ(all.indices, (std::vector<Index>{0, 1}));
  EXPECT_DOUBLE_EQ(all.measure, 5.0);
  EXPECT_EQ(coincidence_set(s, Vec{{1.0, 0.3}}).indices, (std::vector<Index>{0}));
  EXPECT_TRUE(coincidence_set(s, Vec{{0.9, 0.9}}, 1e-8).empty());
}

TEST(VariationalInequality, ExactAtItselfAndDetectsViolation) {
  const Instance two = two_vertex();
  const Vec u{{1.0, 0.5}};
  const double lam = t_value(two.space, two.form, 1.0, u);
  EXPECT_EQ(variational_inequality_residual(two.space, two.form, u, lam, {u}), 0.0);
  EXPECT_LT(variational_inequality_residual(two.space, two.form, u, lam, {Vec{{1.0, 1.0}}}), -0.4);
  EXPECT_LT(variational_inequality_residual(two.space, two.form, u, lam, vi_probes(two.form, u)), -0.4);
}

TEST(VariationalInequality, LeftFormIsNeverSmaller) {
  std::mt19937_64 rng(3);
  const Instance inst = random_instance(rng, 8, true);
  const Vec u = inst.form.pin(random_vec(rng, 8));
  const auto probes = vi_probes(inst.form, u, 5);
  EXPECT_GE(variational_inequality_residual_left(inst.space, inst.form, u, 0.4, probes),
            variational_inequality_residual(inst.space, inst.form, u, 0.4, probes));
}

TEST(VariationalInequality, ProbeSetShape) {
  const Instance p = unit_path(6, true);
  EXPECT_EQ(vi_probes(p.form, Vec::Zero(6)).size(), 1u + 2u * 4u + 16u + 100u);
  const Instance big = unit_path(20, true);
  EXPECT_EQ(vi_probes(big.form, Vec::Zero(20)).size(), 1u + 2u * 18u + 256u + 100u);
}

TEST(SolveP1, TwoVertex) {
  const Instance two = two_vertex();
  const ExtremalResult r = solve_p1(two.space, two.form, 1.0);
  ASSERT_TRUE(r.p1.has_value());
  EXPECT_TRUE(r.valid()) << r.certificate.failures().front();
  EXPECT_EQ(r.p1->I.indices, (std::vector<Index>{0, 1}));
  EXPECT_NEAR(r.lambda, 0.5, 1e-14);
  EXPECT_NEAR(r.V[0], 0.5, 1e-14);
  EXPECT_NEAR(r.V[1], 0.5, 1e-14);
  EXPECT_NEAR(lp_norm(two.space, r.V, 1.0), 1.0, 1e-14);
  EXPECT_TRUE(r.p1->complementarity.valid());
  EXPECT_EQ(r.p1->complementarity.on_set_residual, 0.0);
  EXPECT_TRUE(r.p1->regime_warning);
}

TEST(SolveP1, SingleFreeVertexFailsEigenvalueMatch) {
  const Instance p = unit_path(3, true);
  const double A = 0.6;
  const ExtremalResult r = solve_p1(p.space, p.form, A);
  EXPECT_NEAR(r.lambda, A, 1e-14);
  EXPECT_NEAR(r.V[1], A, 1e-14);
  EXPECT_FALSE(r.certificate.passed("lambda1_matches"));
  EXPECT_NEAR(r.residuals.at("lambda1_of_V"), 2.0 + A, 1e-12);
  EXPECT_FALSE(r.valid());
  ASSERT_TRUE(r.p1.has_value());
  EXPECT_TRUE(r.p1->regime_warning);
}

TEST(SolveP1, GroundedPathAgreesWithBranchOracle) {
  const Instance p = unit_path(21, true);
  const double lam0 = lambda1(p.space, p.form, Potential::Zero(21)).lambda;
  const double A = 0.1 * lam0 * free_measure(p.space, p.form);
  const ExtremalResult r = solve_p1(p.space, p.form, A);
  const Branch b = best_symmetric_branch(p, A);
  ASSERT_TRUE(std::isfinite(b.lambda));
  ASSERT_TRUE(r.p1.has_value());
  EXPECT_NEAR(r.p1->t_value, b.lambda, 1e-8);
  EXPECT_LE((r.u - b.u).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_NEAR(r.p1->t_value, 0.0291023262372, 1e-11);
  EXPECT_GE(r.p1->vi_slack_min, -1e-8);
  EXPECT_TRUE(r.certificate.passed("tol_I_sensitivity"));
  EXPECT_TRUE(r.certificate.passed("complementarity_off_I"));
  // The optimality-system potential attains the discrete supremum.
  EXPECT_NEAR(r.p1->kkt_lambda1, r.p1->t_value, 1e-8);
  EXPECT_NEAR(lp_norm(p.space, r.p1->kkt_potential, 1.0), A, 1e-10);
}

TEST(SolveP1, DominatesSampledPotentials) {
  const Instance p = unit_path(7, true);
  const double A = 0.4;
  const ExtremalResult r = solve_p1(p.space, p.form, A);
  ASSERT_TRUE(r.p1.has_value());
  const BruteForceResult bf =
      brute_force_sup(p.space, p.form, LpBudget(1.0, A), {3, 4000, SampleStrategy::dirichlet_simplex}, 2);
  EXPECT_LE(bf.best_lambda, r.p1->t_value + 1e-8);
}

TEST(Complementarity, TwoVertexExact) {
  const Instance two = two_vertex();
  const Vec u = Vec::Ones(2);
  const ComplementarityReport c = complementarity_check(two.space, two.form, u, coincidence_set(two.space, u), 0.5);
  EXPECT_EQ(c.on_set_residual, 0.0);
  EXPECT_EQ(c.off_set_residual, 0.0);
  EXPECT_EQ(c.interior_energy, 0.0);
  EXPECT_TRUE(c.valid());
}

// ---------------------------------------------------------------------------
// Obstacle problem
// ---------------------------------------------------------------------------

TEST(Obstacle, ZeroDataGivesZero) {
  const Instance p = unit_path(9, true);
  const FunctionVec u = solve_obstacle(p.space, p.form, {Vec::Zero(9), Vec::Zero(9)});
  EXPECT_EQ(u.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Obstacle, InactiveObstacleMatchesDirectSolve) {
  std::mt19937_64 rng(17);
  const Instance p = unit_path(12, true);
  const Vec f = p.form.pin(random_vec(rng, 12));
  const FunctionVec u = solve_obstacle(p.space, p.form, {p.form.pin(Vec::Constant(12, -1e3)), f});
  const Vec direct = Eigen::MatrixXd(p.form.free_stiffness())
                         .ldlt()
                         .solve(p.form.restrict_to_free(f).cwiseProduct(p.form.restrict_to_free(p.space.m())));
  EXPECT_LE((p.form.restrict_to_free(u) - direct).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Obstacle, FeasibleAndSatisfiesVariationalInequality) {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 10; ++t) {
    const Instance inst = random_instance(rng, 10, true);
    const Vec psi = inst.form.pin(random_vec(rng, 10, -0.5, 0.5));
    const Vec f = inst.form.pin(random_vec(rng, 10, -2.0, 2.0));
    const FunctionVec u = solve_obstacle(inst.space, inst.form, {psi, f});
    EXPECT_GE((u - psi).minCoeff(), -1e-12);
    for (int k = 0; k < 50; ++k) {
      const Vec v = inst.form.pin(psi + random_vec(rng, 10, 0.0, 2.0));
      const Vec d = inst.form.pin(v - u);
      EXPECT_GE(a_form(inst.form, u, d), f.cwiseProduct(inst.space.m()).dot(d) - 1e-8);
    }
  }
}

TEST(Obstacle, RejectsPositiveObstacleOnGroundedVertex) {
  const Instance p = unit_path(5, true);
  EXPECT_THROW(solve_obstacle(p.space, p.form, {Vec::Constant(5, 0.2), Vec::Zero(5)}), InputError);
}
