#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "slsrec/autodiff.hpp"
#include "slsrec/param_store.hpp"

namespace slsrec::ad {

// Rebuilds the same scalar loss from the current parameter values.
template <typename Scalar>
using LossBuilder = std::function<Var<Scalar>(Tape<Scalar>&, ParamStore<Scalar>&)>;

template <typename Scalar>
struct ParamCheck {
  std::string name;
  Scalar max_rel_error = 0;
  Eigen::Index worst_row = 0;
  Eigen::Index worst_col = 0;
  Scalar analytic = 0;
  Scalar numeric = 0;
};

template <typename Scalar>
struct GradCheckReport {
  bool deterministic = true;
  std::vector<ParamCheck<Scalar>> params;

  Scalar worst() const {
    Scalar w = 0;
    for (const auto& p : params) w = std::max(w, p.max_rel_error);
    return w;
  }
  bool passed(Scalar tol) const { return deterministic && worst() < tol; }
};

// Compares backward() against central differences coordinate by coordinate.
// Error per coordinate is |analytic - numeric| / max(1, |numeric|).
template <typename Scalar>
GradCheckReport<Scalar> finite_diff_check(const LossBuilder<Scalar>& build, ParamStore<Scalar>& params, Scalar eps) {
  GradCheckReport<Scalar> report;
  auto evaluate = [&]() {
    Tape<Scalar> tape;
    return build(tape, params).scalar();
  };

  params.zero_grad();
  Scalar base = 0;
  {
    Tape<Scalar> tape;
    Var<Scalar> loss = build(tape, params);
    base = loss.scalar();
    tape.backward(loss);
  }
  std::vector<Matrix<Scalar>> analytic;
  for (std::size_t i = 0; i < params.size(); ++i) analytic.push_back(params[i].grad);
  params.zero_grad();

  const Scalar again = evaluate();
  if (!(again == base) && !(std::isnan(again) && std::isnan(base))) {
    report.deterministic = false;
    return report;
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    ParamCheck<Scalar> check;
    check.name = p.name;
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
        const Scalar saved = p.value(r, c);
        p.value(r, c) = saved + eps;
        const Scalar plus = evaluate();
        p.value(r, c) = saved - eps;
        const Scalar minus = evaluate();
        p.value(r, c) = saved;
        const Scalar numeric = (plus - minus) / (Scalar(2) * eps);
        const Scalar a = analytic[i](r, c);
        Scalar err = std::abs(a - numeric) / std::max(Scalar(1), std::abs(numeric));
        if (!std::isfinite(err)) err = std::numeric_limits<Scalar>::infinity();
        if (err >= check.max_rel_error) {
          check.max_rel_error = err;
          check.worst_row = r;
          check.worst_col = c;
          check.analytic = a;
          check.numeric = numeric;
        }
      }
    }
    report.params.push_back(check);
  }
  return report;
}

}  // namespace slsrec::ad
