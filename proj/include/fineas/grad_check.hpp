#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fineas/tensor.hpp"

namespace fineas::num {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  size_t coordinates = 0;
  std::string worst;  // "leaf[i]" of the worst coordinate

  bool passes(double rtol) const { return max_rel_error < rtol; }
};

// Central finite-difference check against reverse-mode gradients, always
// run in double. `f` receives freshly built parameter leaves (one per
// entry of points/shapes) and returns a scalar tensor; it must be
// deterministic (dropout off).
//
// The per-coordinate error is |analytic - numeric| / max(1, |analytic|,
// |numeric|), so near-zero gradients are judged on absolute error.
inline GradCheckReport finite_diff_check(
    const std::function<TensorD(const std::vector<TensorD>&)>& f,
    const std::vector<std::vector<double>>& points,
    const std::vector<std::vector<int>>& shapes, double h = 1e-5) {
  if (points.size() != shapes.size()) {
    raise(Errc::ShapeMismatch, "finite_diff_check: points vs shapes");
  }

  auto build = [&](const std::vector<std::vector<double>>& values) {
    std::vector<TensorD> leaves;
    leaves.reserve(values.size());
    for (size_t i = 0; i < values.size(); ++i) {
      leaves.push_back(TensorD::param(shapes[i], values[i],
                                      "leaf" + std::to_string(i)));
    }
    return leaves;
  };

  auto eval = [&](const std::vector<std::vector<double>>& values) {
    const auto leaves = build(values);
    const TensorD out = f(leaves);
    if (out.size() != 1) raise(Errc::NotScalarLoss, "f must return a scalar");
    return out.values()[0];
  };

  // Analytic gradients.
  auto leaves = build(points);
  TensorD loss = f(leaves);
  backward(loss);
  std::vector<std::vector<double>> analytic;
  for (const auto& leaf : leaves) {
    analytic.push_back(leaf.has_grad()
                           ? leaf.grad()
                           : std::vector<double>(leaf.size(), 0.0));
  }

  GradCheckReport report;
  auto mutated = points;
  for (size_t li = 0; li < points.size(); ++li) {
    for (size_t i = 0; i < points[li].size(); ++i) {
      const double orig = mutated[li][i];
      mutated[li][i] = orig + h;
      const double up = eval(mutated);
      mutated[li][i] = orig - h;
      const double down = eval(mutated);
      mutated[li][i] = orig;

      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[li][i];
      const double abs_err = std::abs(a - numeric);
      const double rel_err =
          abs_err / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++report.coordinates;
      if (abs_err > report.max_abs_error) report.max_abs_error = abs_err;
      if (rel_err > report.max_rel_error) {
        report.max_rel_error = rel_err;
        report.worst =
            "leaf" + std::to_string(li) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

// Single-point convenience form.
inline GradCheckReport finite_diff_check(
    const std::function<TensorD(const TensorD&)>& f,
    const std::vector<double>& point, const std::vector<int>& shape,
    double h = 1e-5) {
  return finite_diff_check(
      [&](const std::vector<TensorD>& leaves) { return f(leaves[0]); },
      {point}, {shape}, h);
}

}  // namespace fineas::num
