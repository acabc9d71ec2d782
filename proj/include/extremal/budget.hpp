#pragma once

#include <cmath>

#include "extremal/core_form.hpp"

namespace extremal {

/// The constraint ||V||_p <= A on nonnegative potentials.
class LpBudget {
 public:
  LpBudget(double p, double A) : p_(p), A_(A) {
    if (std::isnan(p) || p < 1.0) throw InputError("p must lie in [1, inf]");
    if (!(A > 0.0) || !std::isfinite(A)) throw InputError("A must be a positive finite number");
  }

  double p() const { return p_; }
  double A() const { return A_; }
  bool is_infinite() const { return std::isinf(p_); }
  bool is_one() const { return p_ == 1.0; }

  /// Conjugate exponent p/(p-1); infinity at p = 1, one at p = infinity.
  double q() const {
    if (is_infinite()) return 1.0;
    if (is_one()) return kInf;
    return p_ / (p_ - 1.0);
  }

 private:
  double p_;
  double A_;
};

}  // namespace extremal
