#ifndef STEERING_LAB_NELDER_MEAD_HPP
#define STEERING_LAB_NELDER_MEAD_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace steering_lab {

struct NelderMeadOptions {
  double reflection = 1.0;
  double expansion = 2.0;
  double contraction = 0.5;
  double shrink = 0.5;
  double initial_step = 0.3;
  double diameter_tol = 1e-3;
  int max_evaluations = 2000;
};

struct NelderMeadResult {
  std::vector<double> point;
  double value = 0.0;
  int evaluations = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> best_history;  // incumbent value after each iteration
};

/// Downhill simplex minimization of f: R^n -> R. The start vertex is
/// evaluated first, so the result is never worse than f(start).
template <typename F>
NelderMeadResult nelder_mead(F&& f, std::vector<double> start, const NelderMeadOptions& opt = {}) {
  const std::size_t n = start.size();
  NelderMeadResult res;
  if (n == 0) {
    res.point = start;
    res.value = f(start);
    res.evaluations = 1;
    res.converged = true;
    return res;
  }

  std::vector<std::vector<double>> simplex(n + 1, start);
  for (std::size_t i = 0; i < n; ++i) simplex[i + 1][i] += opt.initial_step;
  std::vector<double> values(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    values[i] = f(simplex[i]);
    ++res.evaluations;
  }

  std::vector<std::size_t> order(n + 1);
  auto diameter = [&] {
    double d = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
      double dist = 0.0;
      for (std::size_t k = 0; k < n; ++k) dist = std::max(dist, std::abs(simplex[i][k] - simplex[0][k]));
      d = std::max(d, dist);
    }
    return d;
  };
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), 0);
    // Stable so that ties keep the older vertex first.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<std::vector<double>> s2(n + 1);
    std::vector<double> v2(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
      s2[i] = simplex[order[i]];
      v2[i] = values[order[i]];
    }
    simplex.swap(s2);
    values.swap(v2);
  };
  auto blend = [&](const std::vector<double>& from, const std::vector<double>& to, double coeff) {
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = from[k] + coeff * (to[k] - from[k]);
    return out;
  };

  sort_simplex();
  while (res.evaluations < opt.max_evaluations) {
    if (diameter() < opt.diameter_tol) {
      res.converged = true;
      break;
    }
    ++res.iterations;
    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < n; ++k) centroid[k] += simplex[i][k] / static_cast<double>(n);
    }
    const std::vector<double>& worst = simplex[n];

    const auto reflected = blend(centroid, worst, -opt.reflection);
    const double f_r = f(reflected);
    ++res.evaluations;

    if (f_r < values[0]) {
      const auto expanded = blend(centroid, worst, -opt.reflection * opt.expansion);
      const double f_e = f(expanded);
      ++res.evaluations;
      if (f_e < f_r) {
        simplex[n] = expanded;
        values[n] = f_e;
      } else {
        simplex[n] = reflected;
        values[n] = f_r;
      }
    } else if (f_r < values[n - 1]) {
      simplex[n] = reflected;
      values[n] = f_r;
    } else {
      const bool outside = f_r < values[n];
      const auto contracted =
          outside ? blend(centroid, reflected, opt.contraction) : blend(centroid, worst, opt.contraction);
      const double f_c = f(contracted);
      ++res.evaluations;
      if (f_c < (outside ? f_r : values[n])) {
        simplex[n] = contracted;
        values[n] = f_c;
      } else {
        for (std::size_t i = 1; i <= n; ++i) {
          simplex[i] = blend(simplex[0], simplex[i], opt.shrink);
          values[i] = f(simplex[i]);
          ++res.evaluations;
        }
      }
    }
    sort_simplex();
    res.best_history.push_back(values[0]);
  }
  res.point = simplex[0];
  res.value = values[0];
  return res;
}

}  // namespace steering_lab

#endif  // STEERING_LAB_NELDER_MEAD_HPP
