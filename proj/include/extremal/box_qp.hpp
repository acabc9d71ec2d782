#pragma once

/// Box-constrained quadratic programs
///
///     minimize  f(x) = 1/2 x^T Q x - b^T x   subject to  lo <= x <= hi
///
/// by projected gradient with a fixed step 1/L (L a Gershgorin bound on ||Q||,
/// so every step is a descent step even when Q is indefinite), followed by an
/// active-set polish: freeze the coordinates sitting on a bound, solve the
/// reduced linear system exactly, and accept when the result is feasible,
/// satisfies the multiplier signs and does not raise f.

#include <Eigen/SparseCholesky>

#include <vector>

#include "extremal/core_form.hpp"

namespace extremal {

struct BoxQpOptions {
  int max_iter = 200000;
  /// Stop projected gradient when max |x_{k+1} - x_k| <= step_tol * (1 + ||x||_inf).
  double step_tol = 1e-15;
  int polish_every = 500;
  bool record_trace = false;
};

struct BoxQpResult {
  Vec x;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  bool polished = false;
  /// Objective after every projected-gradient step (when requested).
  std::vector<double> trace;
};

namespace detail {

inline double qp_objective(const SparseMat& q, const Vec& b, const Vec& x) { return 0.5 * x.dot(q * x) - b.dot(x); }

inline double gershgorin_bound(const SparseMat& q) {
  Vec rows = Vec::Zero(q.rows());
  for (Index c = 0; c < q.outerSize(); ++c)
    for (SparseMat::InnerIterator it(q, c); it; ++it) rows[it.row()] += std::abs(it.value());
  return rows.size() ? rows.maxCoeff() : 0.0;
}

// Returns true and overwrites x when the active-set solve yields a KKT point
// no worse than x.
inline bool active_set_polish(const SparseMat& q, const Vec& b, const Vec& lo, const Vec& hi, Vec& x) {
  const Index n = x.size();
  std::vector<int> state(static_cast<std::size_t>(n), 0);  // -1 at lo, +1 at hi, 0 free
  for (Index i = 0; i < n; ++i) {
    if (x[i] <= lo[i]) state[static_cast<std::size_t>(i)] = -1;
    else if (x[i] >= hi[i]) state[static_cast<std::size_t>(i)] = 1;
  }
  const double f0 = qp_objective(q, b, x);
  for (int round = 0; round < 32; ++round) {
    std::vector<Index> fr;
    Vec y = x;
    for (Index i = 0; i < n; ++i) {
      const int s = state[static_cast<std::size_t>(i)];
      if (s == 0) fr.push_back(i);
      else y[i] = s < 0 ? lo[i] : hi[i];
    }
    if (!fr.empty()) {
      std::vector<Index> pos(static_cast<std::size_t>(n), -1);
      for (std::size_t k = 0; k < fr.size(); ++k) pos[static_cast<std::size_t>(fr[k])] = static_cast<Index>(k);
      const Index nf = static_cast<Index>(fr.size());
      std::vector<Eigen::Triplet<double>> t;
      Vec rhs(nf);
      for (Index k = 0; k < nf; ++k) rhs[k] = b[fr[static_cast<std::size_t>(k)]];
      for (Index c = 0; c < q.outerSize(); ++c) {
        for (SparseMat::InnerIterator it(q, c); it; ++it) {
          const Index r = pos[static_cast<std::size_t>(it.row())];
          if (r < 0) continue;
          const Index cc = pos[static_cast<std::size_t>(it.col())];
          if (cc >= 0) t.emplace_back(r, cc, it.value());
          else rhs[r] -= it.value() * y[it.col()];
        }
      }
      SparseMat qff(nf, nf);
      qff.setFromTriplets(t.begin(), t.end());
      Eigen::SimplicialLDLT<SparseMat> ldlt(qff);
      if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) return false;
      const Vec sol = ldlt.solve(rhs);
      if (!sol.allFinite()) return false;
      for (Index k = 0; k < nf; ++k) y[fr[static_cast<std::size_t>(k)]] = sol[k];
    }
    // Primal feasibility: free coordinates that left the box become active.
    bool changed = false;
    for (Index i : fr) {
      if (y[i] < lo[i]) {
        state[static_cast<std::size_t>(i)] = -1;
        changed = true;
      } else if (y[i] > hi[i]) {
        state[static_cast<std::size_t>(i)] = 1;
        changed = true;
      }
    }
    if (changed) continue;
    // Dual feasibility: release bounds whose multiplier has the wrong sign.
    const Vec g = q * y - b;
    const double gscale = 1e-12 * (1.0 + g.cwiseAbs().maxCoeff());
    for (Index i = 0; i < n; ++i) {
      const int s = state[static_cast<std::size_t>(i)];
      if ((s < 0 && g[i] < -gscale) || (s > 0 && g[i] > gscale)) {
        state[static_cast<std::size_t>(i)] = 0;
        changed = true;
      }
    }
    if (changed) continue;
    if (qp_objective(q, b, y) > f0 + 1e-12 * (1.0 + std::abs(f0))) return false;
    x = y;
    return true;
  }
  return false;
}

}  // namespace detail

inline BoxQpResult box_qp(const SparseMat& q, const Vec& b, const Vec& lo, const Vec& hi, const Vec& x0,
                          const BoxQpOptions& opts = {}) {
  const Index n = b.size();
  if (q.rows() != n || q.cols() != n || lo.size() != n || hi.size() != n || x0.size() != n)
    throw InputError("box_qp: dimension mismatch");
  for (Index i = 0; i < n; ++i)
    if (lo[i] > hi[i]) throw InputError("box_qp: empty box");

  BoxQpResult res;
  Vec x = x0.cwiseMax(lo).cwiseMin(hi);
  const double lip = detail::gershgorin_bound(q);
  const double step = lip > 0.0 ? 1.0 / lip : 1.0;
  if (opts.record_trace) res.trace.push_back(detail::qp_objective(q, b, x));

  for (int it = 0; it < opts.max_iter; ++it) {
    const Vec g = q * x - b;
    const Vec xn = (x - step * g).cwiseMax(lo).cwiseMin(hi);
    const double dx = (xn - x).cwiseAbs().maxCoeff();
    x = xn;
    res.iterations = it + 1;
    if (opts.record_trace) res.trace.push_back(detail::qp_objective(q, b, x));
    const bool small = dx <= opts.step_tol * (1.0 + x.cwiseAbs().maxCoeff());
    if (small || (it + 1) % opts.polish_every == 0) {
      Vec y = x;
      if (detail::active_set_polish(q, b, lo, hi, y)) {
        x = y;
        res.polished = true;
        res.converged = true;
        break;
      }
      if (small) {
        res.converged = true;
        break;
      }
    }
  }
  res.x = x;
  res.objective = detail::qp_objective(q, b, x);
  return res;
}

}  // namespace extremal
