#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "extremal/core_form.hpp"
#include "extremal/eigensolver.hpp"

namespace extremal {

/// One named pass/fail item in a certificate.
struct Check {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool passed = false;
};

class CheckList {
 public:
  /// Passes when value <= threshold (NaN fails).
  void at_most(std::string name, double value, double threshold) {
    add(std::move(name), value, threshold, value <= threshold);
  }
  /// Passes when value >= threshold (NaN fails).
  void at_least(std::string name, double value, double threshold) {
    add(std::move(name), value, threshold, value >= threshold);
  }
  void flag(std::string name, bool passed) { add(std::move(name), passed ? 1.0 : 0.0, 1.0, passed); }

  void add(std::string name, double value, double threshold, bool passed) {
    checks_.push_back({std::move(name), value, threshold, passed});
  }

  bool valid() const {
    for (const Check& c : checks_)
      if (!c.passed) return false;
    return true;
  }

  const Check* find(const std::string& name) const {
    for (const Check& c : checks_)
      if (c.name == name) return &c;
    return nullptr;
  }

  bool passed(const std::string& name) const {
    const Check* c = find(name);
    return c != nullptr && c->passed;
  }

  std::vector<std::string> failures() const {
    std::vector<std::string> out;
    for (const Check& c : checks_)
      if (!c.passed) out.push_back(c.name);
    return out;
  }

  const std::vector<Check>& items() const { return checks_; }

 private:
  std::vector<Check> checks_;
};

/// Both displayed sup-norm bounds on an extremal pair, with slacks.
struct LinfBoundReport {
  double u_inf = 0.0;
  double u_bound = 0.0;
  double u_slack = 0.0;
  double v_inf = 0.0;
  double v_bound = 0.0;
  double v_slack = 0.0;
  bool valid = false;
};

/// Row-wise complementarity residuals for the p = 1 extremal function.
struct ComplementarityReport {
  double scale = 0.0;
  double off_set_residual = 0.0;   // max_{i not in I} |(K u)_i - lambda m_i u_i|
  double on_set_residual = 0.0;    // max_{i in I} |(K u)_i|
  double interior_energy = 0.0;    // max |sum of interior-of-I edge energies| over probes
  bool off_set_ok = false;
  bool on_set_ok = false;
  bool energy_ok = false;
  bool valid() const { return off_set_ok && on_set_ok && energy_ok; }
};

struct CoincidenceSet {
  std::vector<Index> indices;
  double measure = 0.0;
  bool empty() const { return indices.empty(); }
};

/// Extra output of the p = 1 solver.
struct P1Details {
  CoincidenceSet I;
  double tol_I = 1e-8;
  double t_value = 0.0;  // min of T, the discrete maximal first eigenvalue
  double vi_slack_min = 0.0;
  double vi_slack_min_left_form = 0.0;  // same probes with a[v, v-u] on the left
  Index vi_probe_count = 0;
  ComplementarityReport complementarity;
  bool regime_warning = false;
  std::vector<std::string> regime_notes;
  Index set_size_tight = 0;  // |I| at tol_I / 10
  Index set_size_loose = 0;  // |I| at tol_I * 10
  /// Potential read off the discrete optimality system: on I it equals
  /// lambda - (K u)_i / m_i, elsewhere zero. Its m-weighted mass is A.
  Potential kkt_potential;
  double kkt_lambda1 = 0.0;
};

struct ExtremalResult {
  FunctionVec u;
  Potential V;
  double lambda = 0.0;
  double j_value = 0.0;
  double eigen_residual = 0.0;
  std::map<std::string, double> residuals;
  std::optional<LinfBoundReport> bounds;
  std::optional<P1Details> p1;
  CheckList certificate;
  std::vector<double> trace;
  int iterations = 0;
  bool converged = false;
  std::string method;
  std::uint64_t seed = 0;

  bool valid() const { return certificate.valid(); }
};

}  // namespace extremal
