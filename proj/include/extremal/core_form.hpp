#pragma once

/// Finite measured spaces and weighted-graph Dirichlet forms.
///
/// A `DirichletForm` is a list of conductances on vertex pairs plus a set of
/// grounded vertices on which every function is pinned to zero. The induced
/// bilinear form is
///
///     a[u, v] = sum_{(i, j, w)} w (u_i - u_j)(v_i - v_j)
///
/// and the stiffness matrix K satisfies a[u, v] = u^T K v for functions that
/// vanish on the grounded set.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace extremal {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;
using SparseMat = Eigen::SparseMatrix<double>;

/// Values on all n vertices, zero on the grounded set.
using FunctionVec = Vec;

/// Raised for malformed input: bad dimensions, nonpositive weights, etc.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Pairwise (cascade) summation; keeps error growth at O(log n).
inline double pairwise_sum(std::span<const double> xs) {
  constexpr std::size_t kBlock = 16;
  if (xs.size() <= kBlock) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.subspan(0, half)) + pairwise_sum(xs.subspan(half));
}

inline double pairwise_sum(const Vec& xs) {
  return pairwise_sum(std::span<const double>(xs.data(), static_cast<std::size_t>(xs.size())));
}

class MeasuredSpace {
 public:
  MeasuredSpace() = default;

  explicit MeasuredSpace(Vec m, std::vector<std::string> labels = {})
      : m_(std::move(m)), labels_(std::move(labels)) {
    if (m_.size() < 1) throw InputError("measured space needs at least one vertex");
    for (Index i = 0; i < m_.size(); ++i) {
      if (!(m_[i] > 0.0) || !std::isfinite(m_[i]))
        throw InputError("measure weight m[" + std::to_string(i) + "] must be positive and finite");
    }
    if (!labels_.empty() && static_cast<Index>(labels_.size()) != m_.size())
      throw InputError("label count does not match vertex count");
  }

  Index size() const { return m_.size(); }
  const Vec& m() const { return m_; }
  double m(Index i) const { return m_[i]; }
  const std::vector<std::string>& labels() const { return labels_; }
  double total() const { return pairwise_sum(m_); }

 private:
  Vec m_;
  std::vector<std::string> labels_;
};

struct Edge {
  Index i = 0;
  Index j = 0;
  double w = 0.0;
};

class DirichletForm {
 public:
  DirichletForm() = default;

  DirichletForm(Index n, std::vector<Edge> edges, std::vector<Index> dirichlet = {})
      : n_(n), edges_(std::move(edges)), grounded_(static_cast<std::size_t>(n), false) {
    if (n < 1) throw InputError("form needs at least one vertex");
    for (const Edge& e : edges_) {
      if (e.i < 0 || e.i >= n || e.j < 0 || e.j >= n)
        throw InputError("edge endpoint out of range");
      if (e.i == e.j) throw InputError("self-loop at vertex " + std::to_string(e.i));
      if (!(e.w > 0.0) || !std::isfinite(e.w)) throw InputError("edge weight must be positive and finite");
    }
    for (Index d : dirichlet) {
      if (d < 0 || d >= n) throw InputError("grounded vertex out of range");
      grounded_[static_cast<std::size_t>(d)] = true;
    }
    free_pos_.assign(static_cast<std::size_t>(n), -1);
    for (Index i = 0; i < n; ++i) {
      if (!grounded_[static_cast<std::size_t>(i)]) {
        free_pos_[static_cast<std::size_t>(i)] = static_cast<Index>(free_.size());
        free_.push_back(i);
      } else {
        dirichlet_.push_back(i);
      }
    }
  }

  Index size() const { return n_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<Index>& dirichlet_set() const { return dirichlet_; }
  const std::vector<Index>& free_set() const { return free_; }
  Index free_size() const { return static_cast<Index>(free_.size()); }
  bool grounded(Index i) const { return grounded_[static_cast<std::size_t>(i)]; }
  /// Position of vertex i in the free numbering, or -1 when grounded.
  Index free_position(Index i) const { return free_pos_[static_cast<std::size_t>(i)]; }

  /// Full n x n stiffness matrix (graph Laplacian with conductances).
  SparseMat stiffness() const {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(edges_.size() * 4);
    for (const Edge& e : edges_) {
      t.emplace_back(e.i, e.i, e.w);
      t.emplace_back(e.j, e.j, e.w);
      t.emplace_back(e.i, e.j, -e.w);
      t.emplace_back(e.j, e.i, -e.w);
    }
    SparseMat k(n_, n_);
    k.setFromTriplets(t.begin(), t.end());
    return k;
  }

  /// Stiffness restricted to free vertices. Edges to grounded vertices
  /// contribute only their diagonal term.
  SparseMat free_stiffness() const {
    const Index nf = free_size();
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(edges_.size() * 4);
    for (const Edge& e : edges_) {
      const Index a = free_position(e.i);
      const Index b = free_position(e.j);
      if (a >= 0) t.emplace_back(a, a, e.w);
      if (b >= 0) t.emplace_back(b, b, e.w);
      if (a >= 0 && b >= 0) {
        t.emplace_back(a, b, -e.w);
        t.emplace_back(b, a, -e.w);
      }
    }
    SparseMat k(nf, nf);
    k.setFromTriplets(t.begin(), t.end());
    return k;
  }

  Vec restrict_to_free(const FunctionVec& u) const {
    check_size(u);
    Vec r(free_size());
    for (Index k = 0; k < free_size(); ++k) r[k] = u[free_[static_cast<std::size_t>(k)]];
    return r;
  }

  FunctionVec extend_from_free(const Vec& uf) const {
    if (uf.size() != free_size()) throw InputError("free vector has wrong length");
    FunctionVec u = FunctionVec::Zero(n_);
    for (Index k = 0; k < free_size(); ++k) u[free_[static_cast<std::size_t>(k)]] = uf[k];
    return u;
  }

  /// Copy of u with grounded entries set to zero.
  FunctionVec pin(FunctionVec u) const {
    check_size(u);
    for (Index d : dirichlet_) u[d] = 0.0;
    return u;
  }

  void check_size(const Vec& u) const {
    if (u.size() != n_)
      throw InputError("dimension mismatch: expected " + std::to_string(n_) + " values, got " +
                       std::to_string(u.size()));
  }

  /// Number of connected components of the graph induced on free vertices.
  Index free_components() const {
    std::vector<Index> parent(static_cast<std::size_t>(n_));
    std::iota(parent.begin(), parent.end(), Index{0});
    auto find = [&](Index x) {
      while (parent[static_cast<std::size_t>(x)] != x) {
        parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
        x = parent[static_cast<std::size_t>(x)];
      }
      return x;
    };
    Index comps = free_size();
    for (const Edge& e : edges_) {
      if (grounded(e.i) || grounded(e.j)) continue;
      const Index a = find(e.i), b = find(e.j);
      if (a != b) {
        parent[static_cast<std::size_t>(a)] = b;
        --comps;
      }
    }
    return comps;
  }

 private:
  Index n_ = 0;
  std::vector<Edge> edges_;
  std::vector<bool> grounded_;
  std::vector<Index> free_;
  std::vector<Index> dirichlet_;
  std::vector<Index> free_pos_;
};

/// A measured space together with a form on the same vertex set.
struct Instance {
  MeasuredSpace space;
  DirichletForm form;
};

inline void check_conforming(const MeasuredSpace& space, const DirichletForm& form) {
  if (space.size() != form.size()) throw InputError("space and form have different vertex counts");
}

/// Measure of the free set. Grounded vertices carry no mass for the solvers.
inline double free_measure(const MeasuredSpace& space, const DirichletForm& form) {
  check_conforming(space, form);
  Vec mf = form.restrict_to_free(space.m());
  return pairwise_sum(mf);
}

/// Per-edge energies e_k = w_k (u_i - u_j)(v_i - v_j), in edge order.
inline Vec edge_energy(const DirichletForm& form, const FunctionVec& u, const FunctionVec& v) {
  form.check_size(u);
  form.check_size(v);
  const auto& edges = form.edges();
  Vec e(static_cast<Index>(edges.size()));
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const Edge& ed = edges[k];
    e[static_cast<Index>(k)] = ed.w * ((u[ed.i] - u[ed.j]) * (v[ed.i] - v[ed.j]));
  }
  return e;
}

inline double a_form(const DirichletForm& form, const FunctionVec& u, const FunctionVec& v) {
  return pairwise_sum(edge_energy(form, u, v));
}

/// m-weighted L^p norm; p = infinity gives the max norm.
inline double lp_norm(const MeasuredSpace& space, const Vec& u, double p) {
  if (u.size() != space.size()) throw InputError("dimension mismatch in lp_norm");
  if (std::isnan(p) || p < 1.0) throw InputError("p must lie in [1, inf]");
  const double umax = u.cwiseAbs().maxCoeff();
  if (std::isinf(p) || umax == 0.0) return umax;
  // Scale by the max entry so large exponents neither overflow nor underflow.
  Vec terms(u.size());
  for (Index i = 0; i < u.size(); ++i) terms[i] = std::pow(std::abs(u[i]) / umax, p) * space.m(i);
  return umax * std::pow(pairwise_sum(terms), 1.0 / p);
}

/// Unit contraction min{1, max{u, 0}}.
inline FunctionVec clamp_unit(const FunctionVec& u) { return u.cwiseMax(0.0).cwiseMin(1.0); }

inline FunctionVec clamp_box(const FunctionVec& u, double lo, double hi) { return u.cwiseMax(lo).cwiseMin(hi); }

inline FunctionVec pointwise_abs(const FunctionVec& u) { return u.cwiseAbs(); }

inline FunctionVec pointwise_max(const FunctionVec& u, const FunctionVec& v) { return u.cwiseMax(v); }

inline FunctionVec pointwise_min(const FunctionVec& u, const FunctionVec& v) { return u.cwiseMin(v); }

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

using Coeff1 = std::function<double(double)>;
using Coeff2 = std::function<double(double, double)>;

namespace detail {
inline double positive_coeff(double c, const char* what) {
  if (!(c > 0.0) || !std::isfinite(c)) throw InputError(std::string(what) + " must be strictly positive");
  return c;
}
}  // namespace detail

/// Path on n vertices with unit spacing. Edge k joins k and k+1 with
/// conductance weight_fn(k); vertex i gets measure m_fn(i).
inline Instance build_path(Index n, const std::function<double(Index)>& weight_fn,
                           const std::function<double(Index)>& m_fn, bool grounded_ends) {
  if (n < 2) throw InputError("path needs n >= 2");
  if (grounded_ends && n < 3) throw InputError("grounded path needs n >= 3");
  Vec m(n);
  for (Index i = 0; i < n; ++i) m[i] = detail::positive_coeff(m_fn(i), "measure");
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(n - 1));
  for (Index k = 0; k + 1 < n; ++k) edges.push_back({k, k + 1, detail::positive_coeff(weight_fn(k), "edge weight")});
  std::vector<Index> d;
  if (grounded_ends) d = {0, n - 1};
  return {MeasuredSpace(std::move(m)), DirichletForm(n, std::move(edges), std::move(d))};
}

/// nx x ny grid with unit spacing, 5-point stencil. Vertex (i, j) has index
/// j * nx + i. Edge conductances come from coeff_fn at the edge midpoint in
/// index coordinates.
inline Instance build_grid2d(Index nx, Index ny, const Coeff2& coeff_fn, const std::function<double(Index, Index)>& m_fn,
                             bool grounded_boundary) {
  if (nx < 1 || ny < 1 || nx * ny < 2) throw InputError("grid needs at least two vertices");
  if (grounded_boundary && (nx < 3 || ny < 3)) throw InputError("grounded grid needs nx, ny >= 3");
  const Index n = nx * ny;
  auto id = [nx](Index i, Index j) { return j * nx + i; };
  Vec m(n);
  std::vector<Edge> edges;
  std::vector<Index> d;
  for (Index j = 0; j < ny; ++j) {
    for (Index i = 0; i < nx; ++i) {
      m[id(i, j)] = detail::positive_coeff(m_fn(i, j), "measure");
      if (i + 1 < nx)
        edges.push_back({id(i, j), id(i + 1, j),
                         detail::positive_coeff(coeff_fn(static_cast<double>(i) + 0.5, static_cast<double>(j)), "coefficient")});
      if (j + 1 < ny)
        edges.push_back({id(i, j), id(i, j + 1),
                         detail::positive_coeff(coeff_fn(static_cast<double>(i), static_cast<double>(j) + 0.5), "coefficient")});
      if (grounded_boundary && (i == 0 || j == 0 || i == nx - 1 || j == ny - 1)) d.push_back(id(i, j));
    }
  }
  return {MeasuredSpace(std::move(m)), DirichletForm(n, std::move(edges), std::move(d))};
}

/// Finite-difference discretization of u -> -(a u')' on [0, 1] with
/// measure k(x)^2 dx: n nodes, h = 1/(n-1), conductance a(midpoint)/h and
/// m_i = k(x_i)^2 h.
inline Instance build_interval_fd(Index n, const Coeff1& a_coeff, const Coeff1& k_fn, bool grounded_ends = true) {
  if (n < 2) throw InputError("interval needs n >= 2");
  if (grounded_ends && n < 3) throw InputError("grounded interval needs n >= 3");
  const double h = 1.0 / static_cast<double>(n - 1);
  Vec m(n);
  for (Index i = 0; i < n; ++i) {
    const double k = detail::positive_coeff(k_fn(static_cast<double>(i) * h), "k coefficient");
    m[i] = k * k * h;
  }
  std::vector<Edge> edges;
  for (Index i = 0; i + 1 < n; ++i) {
    const double mid = (static_cast<double>(i) + 0.5) * h;
    edges.push_back({i, i + 1, detail::positive_coeff(a_coeff(mid), "a coefficient") / h});
  }
  std::vector<Index> d;
  if (grounded_ends) d = {0, n - 1};
  return {MeasuredSpace(std::move(m)), DirichletForm(n, std::move(edges), std::move(d))};
}

}  // namespace extremal
