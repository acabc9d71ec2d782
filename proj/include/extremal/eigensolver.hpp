#pragma once

/// First eigenpair of the Schrödinger-type operator L + V.
///
/// With K the free-set stiffness and M = diag(m), the problem is the
/// generalized symmetric pencil (K + diag(V m)) u = lambda M u. Small
/// problems are solved densely through the symmetrized operator
/// M^{-1/2}(K + diag(V m))M^{-1/2}; larger ones by shifted inverse iteration
/// with an inertia-checked shift.

#include <Eigen/SparseCholesky>

#include <optional>

#include "extremal/core_form.hpp"

namespace extremal {

/// Nonnegative vertex function, zero on the grounded set.
using Potential = Vec;

struct EigenOptions {
  double tol = 1e-10;
  int max_iter = 10000;
  Index dense_limit = 512;
  /// Starting vector for inverse iteration (full length n).
  std::optional<FunctionVec> warm_start;
};

struct EigenPair {
  double lambda = 0.0;
  FunctionVec u;
  /// sqrt(sum_i r_i^2 / m_i) with r = (K + diag(V m))u - lambda M u, i.e. the
  /// m-weighted norm of (L + V)u - lambda u.
  double residual = 0.0;
  /// Plain Euclidean norm of r.
  double residual_l2 = 0.0;
  bool converged = false;
  bool degenerate = false;
  int iterations = 0;
};

inline void validate_potential(const DirichletForm& form, const Potential& V) {
  form.check_size(V);
  for (Index i = 0; i < V.size(); ++i) {
    if (!(V[i] >= 0.0) || !std::isfinite(V[i])) throw InputError("potential must be nonnegative and finite");
    if (form.grounded(i) && V[i] != 0.0) throw InputError("potential must vanish on the grounded set");
  }
}

/// R_V(u) = (a[u,u] + sum V u^2 m) / sum u^2 m.
inline double rayleigh(const MeasuredSpace& space, const DirichletForm& form, const Potential& V, const FunctionVec& u) {
  check_conforming(space, form);
  form.check_size(V);
  const FunctionVec up = form.pin(u);
  const Vec u2m = up.cwiseProduct(up).cwiseProduct(space.m());
  const double den = pairwise_sum(u2m);
  if (den == 0.0) throw InputError("Rayleigh quotient of the zero function");
  const Vec vu2m = V.cwiseProduct(u2m);
  return (a_form(form, up, up) + pairwise_sum(vu2m)) / den;
}

namespace detail {

// Largest-magnitude entry positive; ties go to the lowest index.
inline void fix_sign(Vec& u) {
  Index best = 0;
  double mag = -1.0;
  for (Index i = 0; i < u.size(); ++i) {
    if (std::abs(u[i]) > mag) {
      mag = std::abs(u[i]);
      best = i;
    }
  }
  if (u.size() > 0 && u[best] < 0.0) u = -u;
}

struct Pencil {
  SparseMat a;  // K + diag(V m) on free vertices
  Vec m;        // free measures
};

inline Pencil make_pencil(const MeasuredSpace& space, const DirichletForm& form, const Potential& V) {
  Pencil p{form.free_stiffness(), form.restrict_to_free(space.m())};
  const Vec vf = form.restrict_to_free(V);
  for (Index k = 0; k < p.a.rows(); ++k) p.a.coeffRef(k, k) += vf[k] * p.m[k];
  return p;
}

inline void fill_residual(const Pencil& p, const Vec& uf, double lambda, EigenPair& out) {
  const Vec r = p.a * uf - lambda * p.m.cwiseProduct(uf);
  out.residual_l2 = r.norm();
  out.residual = std::sqrt(r.cwiseAbs2().cwiseQuotient(p.m).sum());
}

inline bool dense_first(const Pencil& p, Vec& uf, double& lambda, double& gap) {
  const Vec s = p.m.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd d = Eigen::MatrixXd(p.a);
  d = s.asDiagonal() * d * s.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d);
  if (es.info() != Eigen::Success) return false;
  lambda = es.eigenvalues()[0];
  gap = es.eigenvalues().size() > 1 ? es.eigenvalues()[1] - lambda : kInf;
  uf = s.cwiseProduct(es.eigenvectors().col(0));
  return true;
}

// Shifted inverse iteration. The shift stays strictly below lambda_1: a
// candidate shift is accepted only when the LDL^T factor of A - sigma M has
// no nonpositive pivots.
inline int inverse_iteration(const Pencil& p, Vec& x, double& lambda, double tol, int max_iter, bool& converged) {
  const Index n = p.a.rows();
  const SparseMat mm = SparseMat(p.m.asDiagonal());
  double scale = 0.0;
  for (Index k = 0; k < n; ++k) scale = std::max(scale, p.a.coeff(k, k) / p.m[k]);
  double sigma = -1e-3 * (1.0 + scale);

  Eigen::SimplicialLDLT<SparseMat> ldlt;
  auto factor_ok = [&](double s) {
    ldlt.compute(p.a - s * mm);
    if (ldlt.info() != Eigen::Success) return false;
    return (ldlt.vectorD().array() > 0.0).all();
  };
  if (!factor_ok(sigma)) {
    // A is positive semidefinite, so any negative shift must factor.
    sigma = -1.0 - scale;
    if (!factor_ok(sigma)) throw std::runtime_error("inverse iteration: cannot factor shifted operator");
  }

  auto bnorm = [&](const Vec& v) { return std::sqrt(v.cwiseAbs2().dot(p.m)); };
  x /= bnorm(x);
  converged = false;
  int it = 0;
  for (; it < max_iter; ++it) {
    Vec y = ldlt.solve(p.m.cwiseProduct(x));
    x = y / bnorm(y);
    lambda = x.dot(p.a * x);
    const Vec r = p.a * x - lambda * p.m.cwiseProduct(x);
    if (r.norm() <= tol && std::sqrt(r.cwiseAbs2().cwiseQuotient(p.m).sum()) <= tol) {
      converged = true;
      ++it;
      break;
    }
    const double g = lambda - sigma;
    if (it % 4 == 3 && g > 1e-6 * (1.0 + std::abs(lambda))) {
      const double cand = sigma + 0.9 * g;
      if (factor_ok(cand)) {
        sigma = cand;
      } else if (!factor_ok(sigma)) {
        throw std::runtime_error("inverse iteration: lost factorization");
      }
    }
  }
  return it;
}

}  // namespace detail

/// Smallest eigenvalue of (K + diag(V m)) u = lambda M u over free vertices,
/// with ||u||_{2,m} = 1 and the largest-magnitude entry positive.
inline EigenPair lambda1(const MeasuredSpace& space, const DirichletForm& form, const Potential& V,
                         const EigenOptions& opts = {}) {
  check_conforming(space, form);
  validate_potential(form, V);
  if (form.free_size() == 0) throw InputError("free set is empty");

  const detail::Pencil p = detail::make_pencil(space, form, V);
  EigenPair out;
  Vec uf;
  double lambda = 0.0;
  const bool disconnected = form.free_components() > 1;

  if (form.free_size() <= opts.dense_limit) {
    double gap = kInf;
    if (!detail::dense_first(p, uf, lambda, gap)) throw std::runtime_error("dense eigensolver failed");
    detail::fill_residual(p, uf, lambda, out);
    out.iterations = 1;
    out.degenerate = disconnected || gap <= 1e-12 * (1.0 + std::abs(lambda));
    out.converged = out.residual <= opts.tol && out.residual_l2 <= opts.tol;
    if (!out.converged && !out.degenerate) {
      // Polish with a few inverse-iteration steps from the dense vector.
      bool conv = false;
      out.iterations += detail::inverse_iteration(p, uf, lambda, opts.tol, std::min(opts.max_iter, 50), conv);
      detail::fill_residual(p, uf, lambda, out);
      out.converged = conv;
    }
  } else {
    if (opts.warm_start) {
      uf = form.restrict_to_free(*opts.warm_start).cwiseAbs();
      if (uf.norm() == 0.0) uf = Vec::Ones(form.free_size());
    } else {
      uf = Vec::Ones(form.free_size());
    }
    bool conv = false;
    out.iterations = detail::inverse_iteration(p, uf, lambda, opts.tol, opts.max_iter, conv);
    detail::fill_residual(p, uf, lambda, out);
    out.converged = conv;
    out.degenerate = disconnected;
  }

  detail::fix_sign(uf);
  out.lambda = lambda;
  out.u = form.extend_from_free(uf);
  return out;
}

}  // namespace extremal
