#pragma once

#include <functional>
#include <vector>

namespace twoscale {

// Adaptive Simpson quadrature of f on [lo, hi] with absolute tolerance tol.
double adaptive_simpson(const std::function<double(double)>& f, double lo, double hi, double tol, int max_depth = 50);

// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace twoscale
