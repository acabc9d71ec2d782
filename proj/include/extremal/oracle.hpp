#pragma once

/// Brute-force cross-checks: seeded samples of the budget ball, dense
/// enumeration for tiny free sets, and central-difference gradients.
/// Everything here is independent of the extremal solvers it is used to check.

#include <algorithm>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "extremal/budget.hpp"
#include "extremal/core_form.hpp"
#include "extremal/eigensolver.hpp"

namespace extremal {

enum class SampleStrategy { random_sphere, corners, dirichlet_simplex, structured };

inline std::string to_string(SampleStrategy s) {
  switch (s) {
    case SampleStrategy::random_sphere: return "random_sphere";
    case SampleStrategy::corners: return "corners";
    case SampleStrategy::dirichlet_simplex: return "dirichlet_simplex";
    case SampleStrategy::structured: return "structured";
  }
  return "unknown";
}

inline SampleStrategy parse_strategy(const std::string& s) {
  if (s == "random_sphere") return SampleStrategy::random_sphere;
  if (s == "corners") return SampleStrategy::corners;
  if (s == "dirichlet_simplex") return SampleStrategy::dirichlet_simplex;
  if (s == "structured") return SampleStrategy::structured;
  throw InputError("unknown sampling strategy '" + s + "'");
}

struct SampleConfig {
  std::uint64_t seed = 0;
  Index count = 1000;
  SampleStrategy strategy = SampleStrategy::random_sphere;
};

namespace detail {

// Rescale a nonnegative free-set profile onto the sphere ||V||_p = A.
inline Potential to_sphere(const DirichletForm& form, const MeasuredSpace& space, const Vec& profile,
                           const LpBudget& budget) {
  Potential V = form.extend_from_free(profile);
  const double n = lp_norm(space, V, budget.p());
  if (n == 0.0) return V;
  return V * (budget.A() / n);
}

}  // namespace detail

/// Nonnegative potentials in the ball ||V||_p <= A (on the sphere for every
/// strategy), deterministic given the seed. For p = inf the constant A comes
/// first.
inline std::vector<Potential> sample_ball(const MeasuredSpace& space, const DirichletForm& form,
                                          const LpBudget& budget, const SampleConfig& config) {
  check_conforming(space, form);
  if (config.count < 1) throw InputError("sample count must be at least 1");
  if (config.strategy == SampleStrategy::dirichlet_simplex && !budget.is_one())
    throw InputError("dirichlet_simplex sampling needs p = 1");
  const Index nf = form.free_size();
  if (nf == 0) throw InputError("free set is empty");
  const Vec mf = form.restrict_to_free(space.m());

  std::vector<Potential> out;
  out.reserve(static_cast<std::size_t>(config.count));
  if (budget.is_infinite()) out.push_back(form.pin(Potential::Constant(form.size(), budget.A())));

  std::mt19937_64 rng(config.seed);
  const auto n_target = static_cast<std::size_t>(config.count);

  switch (config.strategy) {
    case SampleStrategy::random_sphere: {
      // |x|^p ~ Gamma(1/p) gives the generalized-Gaussian shape on the sphere.
      std::gamma_distribution<double> gam(budget.is_infinite() ? 1.0 : 1.0 / budget.p(), 1.0);
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      while (out.size() < n_target) {
        Vec x(nf);
        for (Index k = 0; k < nf; ++k)
          x[k] = budget.is_infinite() ? unif(rng) : std::pow(gam(rng), 1.0 / budget.p());
        out.push_back(detail::to_sphere(form, space, x, budget));
      }
      break;
    }
    case SampleStrategy::corners: {
      for (Index k = 0; out.size() < n_target; k = (k + 1) % nf) {
        Vec x = Vec::Zero(nf);
        x[k] = 1.0;
        out.push_back(detail::to_sphere(form, space, x, budget));
      }
      break;
    }
    case SampleStrategy::dirichlet_simplex: {
      std::exponential_distribution<double> ex(1.0);
      while (out.size() < n_target) {
        Vec w(nf);
        for (Index k = 0; k < nf; ++k) w[k] = ex(rng);
        w /= w.sum();
        // V_i m_i = A w_i, so sum V_i m_i = A.
        out.push_back(form.extend_from_free(budget.A() * w.cwiseQuotient(mf)));
      }
      break;
    }
    case SampleStrategy::structured: {
      // Constant, one-hot, and powers of the V = 0 ground state.
      const Vec phi = form.restrict_to_free(lambda1(space, form, Potential::Zero(form.size())).u).cwiseAbs();
      std::vector<Vec> family;
      family.push_back(Vec::Ones(nf));
      for (double e : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0}) family.push_back(phi.array().pow(e).matrix());
      for (Index k = 0; k < nf; ++k) {
        Vec x = Vec::Zero(nf);
        x[k] = 1.0;
        family.push_back(x);
      }
      for (std::size_t k = 0; out.size() < n_target; k = (k + 1) % family.size())
        out.push_back(detail::to_sphere(form, space, family[k], budget));
      break;
    }
  }
  out.resize(n_target);
  return out;
}

struct BruteForceResult {
  double best_lambda = -kInf;
  Potential best_V;
  Index best_index = -1;
  Index count = 0;
};

/// max lambda_1 over a potential stream; ties keep the lowest index. A lower
/// bound on the supremum over the ball.
inline BruteForceResult brute_force_max(const MeasuredSpace& space, const DirichletForm& form,
                                        const std::vector<Potential>& samples, unsigned jobs = 1) {
  const std::size_t n = samples.size();
  std::vector<double> lam(n, -kInf);
  jobs = std::max(1U, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) lam[s] = lambda1(space, form, samples[s]).lambda;
  };
  if (jobs == 1) {
    work(0, n);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + jobs - 1) / jobs;
    for (unsigned t = 0; t < jobs; ++t) {
      const std::size_t b = t * chunk, e = std::min(n, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
  }
  BruteForceResult r;
  r.count = static_cast<Index>(n);
  for (std::size_t s = 0; s < n; ++s) {
    if (lam[s] > r.best_lambda) {
      r.best_lambda = lam[s];
      r.best_index = static_cast<Index>(s);
    }
  }
  if (r.best_index >= 0) r.best_V = samples[static_cast<std::size_t>(r.best_index)];
  return r;
}

inline BruteForceResult brute_force_sup(const MeasuredSpace& space, const DirichletForm& form, const LpBudget& budget,
                                        const SampleConfig& config, unsigned jobs = 1) {
  return brute_force_max(space, form, sample_ball(space, form, budget, config), jobs);
}

/// Dense grid over the sphere ||V||_p = A for at most three free vertices:
/// V_i = A (t_i / m_i)^{1/p} with t on the simplex, grid step `step`.
inline BruteForceResult enumerate_ball(const MeasuredSpace& space, const DirichletForm& form, const LpBudget& budget,
                                       double step = 1e-3) {
  check_conforming(space, form);
  const Index nf = form.free_size();
  if (nf < 1 || nf > 3) throw InputError("dense enumeration supports 1 to 3 free vertices");
  if (!(step > 0.0) || step > 1.0) throw InputError("grid step must lie in (0, 1]");
  const Vec mf = form.restrict_to_free(space.m());
  std::vector<Potential> grid;
  auto emit = [&](const Vec& t) {
    Vec x(nf);
    for (Index k = 0; k < nf; ++k)
      x[k] = budget.is_infinite() ? budget.A() : budget.A() * std::pow(t[k] / mf[k], 1.0 / budget.p());
    grid.push_back(form.extend_from_free(x));
  };
  const auto steps = static_cast<Index>(std::llround(1.0 / step));
  if (budget.is_infinite() || nf == 1) {
    emit(Vec::Ones(nf) / static_cast<double>(nf));
  } else if (nf == 2) {
    for (Index a = 0; a <= steps; ++a) {
      const double t = std::min(1.0, static_cast<double>(a) / static_cast<double>(steps));
      emit(Vec{{t, 1.0 - t}});
    }
  } else {
    for (Index a = 0; a <= steps; ++a) {
      for (Index b = 0; a + b <= steps; ++b) {
        const double ta = static_cast<double>(a) / static_cast<double>(steps);
        const double tb = static_cast<double>(b) / static_cast<double>(steps);
        emit(Vec{{ta, tb, std::max(0.0, 1.0 - ta - tb)}});
      }
    }
  }
  return brute_force_max(space, form, grid, std::max(1U, std::thread::hardware_concurrency()));
}

/// Central differences, coordinate by coordinate.
inline Vec fd_gradient(const std::function<double(const Vec&)>& fn, const Vec& u, double h) {
  if (!(h > 0.0)) throw InputError("finite-difference step must be positive");
  Vec g(u.size());
  Vec x = u;
  for (Index i = 0; i < u.size(); ++i) {
    const double xi = x[i];
    x[i] = xi + h;
    const double fp = fn(x);
    x[i] = xi - h;
    const double fm = fn(x);
    x[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace extremal
