#include <gtest/gtest.h>

#include <vector>

#include "test_support.hpp"

using namespace extremal;
using namespace testing_support;

namespace {

// Cyclic Jacobi rotations on a small dense symmetric matrix; returns the
// smallest eigenvalue. Written out by hand so it shares nothing with Eigen.
double jacobi_min_eigenvalue(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
    }
  }
  double best = a[0][0];
  for (std::size_t i = 1; i < n; ++i) best = std::min(best, a[i][i]);
  return best;
}

// Symmetrized free-set operator M^{-1/2} (K + V m) M^{-1/2} assembled from the edge list.
std::vector<std::vector<double>> symmetrized(const Instance& inst, const Potential& V) {
  const DirichletForm& f = inst.form;
  const auto nf = static_cast<std::size_t>(f.free_size());
  std::vector<std::vector<double>> a(nf, std::vector<double>(nf, 0.0));
  for (const Edge& e : f.edges()) {
    const Index pi = f.free_position(e.i), pj = f.free_position(e.j);
    if (pi >= 0) a[static_cast<std::size_t>(pi)][static_cast<std::size_t>(pi)] += e.w;
    if (pj >= 0) a[static_cast<std::size_t>(pj)][static_cast<std::size_t>(pj)] += e.w;
    if (pi >= 0 && pj >= 0) {
      a[static_cast<std::size_t>(pi)][static_cast<std::size_t>(pj)] -= e.w;
      a[static_cast<std::size_t>(pj)][static_cast<std::size_t>(pi)] -= e.w;
    }
  }
  const std::vector<Index>& fs = f.free_set();
  for (std::size_t r = 0; r < nf; ++r) a[r][r] += V[fs[r]] * inst.space.m(fs[r]);
  for (std::size_t r = 0; r < nf; ++r)
    for (std::size_t c = 0; c < nf; ++c) a[r][c] /= std::sqrt(inst.space.m(fs[r]) * inst.space.m(fs[c]));
  return a;
}

}  // namespace

TEST(Rayleigh, Examples) {
  const DirichletForm single(1, {});
  EXPECT_DOUBLE_EQ(rayleigh(MeasuredSpace(Vec{{2.0}}), single, Vec{{3.0}}, Vec{{1.0}}), 3.0);
  const Instance two = two_vertex();
  EXPECT_DOUBLE_EQ(rayleigh(two.space, two.form, Vec::Zero(2), Vec{{1.0, -1.0}}), 2.0);
  EXPECT_NEAR(rayleigh(two.space, two.form, Vec::Zero(2), Vec{{0.4, 0.4}}), 0.0, 1e-15);
}

TEST(Rayleigh, RejectsZeroAndNegativePotential) {
  const Instance two = two_vertex();
  EXPECT_THROW(rayleigh(two.space, two.form, Vec::Zero(2), Vec::Zero(2)), InputError);
  EXPECT_THROW(lambda1(two.space, two.form, Vec{{-1.0, 0.0}}), InputError);
}

TEST(Lambda1, SingleFreeVertex) {
  const Instance p = unit_path(3, true);
  const EigenPair e = lambda1(p.space, p.form, Vec{{0.0, 0.5, 0.0}});
  EXPECT_NEAR(e.lambda, 2.5, 1e-14);
  EXPECT_NEAR(e.u[1], 1.0, 1e-14);
  EXPECT_EQ(e.u[0], 0.0);
}

TEST(Lambda1, TwoVertexKernelAndShift) {
  const Instance two = two_vertex();
  const EigenPair e = lambda1(two.space, two.form, Vec::Zero(2));
  EXPECT_NEAR(e.lambda, 0.0, 1e-14);
  EXPECT_NEAR(e.u[0], 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(e.u[1], 1.0 / std::sqrt(2.0), 1e-12);
  const double c = 1.75;
  EXPECT_NEAR(lambda1(two.space, two.form, Vec::Constant(2, c)).lambda, c, 1e-13);
}

TEST(Lambda1, MNormalizedAndSignFixed) {
  std::mt19937_64 rng(21);
  const Instance inst = random_instance(rng, 10, true);
  const EigenPair e = lambda1(inst.space, inst.form, inst.form.pin(random_vec(rng, 10, 0.0, 2.0)));
  EXPECT_NEAR(e.u.cwiseAbs2().dot(inst.space.m()), 1.0, 1e-12);
  Index imax = 0;
  e.u.cwiseAbs().maxCoeff(&imax);
  EXPECT_GT(e.u[imax], 0.0);
}

TEST(Lambda1, DenseOracleAgreement) {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 40; ++t) {
    const Index n = 2 + t % 8;
    const Instance inst = random_instance(rng, n, t % 3 == 0 && n >= 3);
    const Potential V = inst.form.pin(random_vec(rng, n, 0.0, 3.0));
    const double ref = jacobi_min_eigenvalue(symmetrized(inst, V));
    const EigenPair e = lambda1(inst.space, inst.form, V);
    EXPECT_LE(std::abs(e.lambda - ref), 1e-9 * std::max(1.0, std::abs(ref))) << "case " << t;
  }
}

TEST(Lambda1, InverseIterationPathBeyondDenseLimit) {
  const Index n = 702;
  const Instance p = unit_path(n, true);
  const EigenPair e = lambda1(p.space, p.form, Potential::Zero(n));
  const double h = M_PI / static_cast<double>(n - 1);
  const double exact = 2.0 - 2.0 * std::cos(h);
  EXPECT_TRUE(e.converged);
  EXPECT_NEAR(e.lambda, exact, 1e-10 * exact + 1e-14);
  EXPECT_LE(e.residual, 1e-10);
  EXPECT_GE(e.u.minCoeff(), -1e-12);

  EigenOptions dense;
  dense.dense_limit = 100000;
  EXPECT_NEAR(lambda1(p.space, p.form, Potential::Zero(n), dense).lambda, e.lambda, 1e-12);
}

TEST(Lambda1, InverseIterationWithPotentialMatchesDense) {
  std::mt19937_64 rng(8);
  const Instance g = build_grid2d(25, 25, [](double x, double) { return 1.0 + 0.1 * x; },
                                  [](Index i, Index j) { return 1.0 + 0.01 * static_cast<double>(i + j); }, true);
  const Potential V = g.form.pin(random_vec(rng, g.space.size(), 0.0, 1.0));
  EigenOptions sparse;
  sparse.dense_limit = 10;
  EigenOptions dense;
  dense.dense_limit = 100000;
  const EigenPair a = lambda1(g.space, g.form, V, sparse);
  const EigenPair b = lambda1(g.space, g.form, V, dense);
  EXPECT_NEAR(a.lambda, b.lambda, 1e-10);
  EXPECT_LE((a.u - b.u).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Lambda1, DisconnectedFreeGraphIsDegenerate) {
  const DirichletForm f(5, {{0, 1, 1.0}, {1, 2, 1.0}, {2, 3, 1.0}, {3, 4, 1.0}}, {2});
  const MeasuredSpace s(Vec::Ones(5));
  const EigenPair e = lambda1(s, f, Potential::Zero(5));
  // Two copies of the path 0-1-(grounded): lambda = (3 - sqrt 5) / 2, multiplicity two.
  EXPECT_TRUE(e.degenerate);
  EXPECT_NEAR(e.lambda, (3.0 - std::sqrt(5.0)) / 2.0, 1e-12);
}

class EigenProperties : public ::testing::TestWithParam<int> {};

TEST_P(EigenProperties, ShiftMonotonicityDominancePerron) {
  std::mt19937_64 rng(500 + static_cast<std::uint64_t>(GetParam()));
  const Index n = 3 + GetParam() % 20;
  const Instance inst = random_instance(rng, n, GetParam() % 2 == 1);
  const DirichletForm& f = inst.form;
  const Potential V = f.pin(random_vec(rng, n, 0.0, 2.0));
  const EigenPair e = lambda1(inst.space, f, V);

  const bool connected = f.free_components() == 1;
  EXPECT_LE(e.residual, 1e-10);
  if (connected) {
    EXPECT_GE(e.u.minCoeff(), -1e-12);
  }

  const double c = 0.8;
  const EigenPair es = lambda1(inst.space, f, f.pin(V + Vec::Constant(n, c)));
  EXPECT_NEAR(es.lambda, e.lambda + c, 1e-10);
  if (connected) {
    EXPECT_LE((es.u - e.u).cwiseAbs().maxCoeff(), 1e-7);
  }

  const Potential Vbig = f.pin(V + random_vec(rng, n, 0.0, 1.0));
  EXPECT_LE(e.lambda, lambda1(inst.space, f, Vbig).lambda + 1e-10);

  for (int k = 0; k < 10; ++k) {
    const Vec u = f.pin(random_vec(rng, n));
    EXPECT_LE(e.lambda, rayleigh(inst.space, f, V, u) + 1e-10);
  }
}

INSTANTIATE_TEST_SUITE_P(Random, EigenProperties, ::testing::Range(0, 40));
