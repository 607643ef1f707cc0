#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "twoscale/cell_problem.hpp"
#include "twoscale/potentials.hpp"

namespace twoscale {

using ScalarField = std::function<double(const double*)>;

// Polyline gamma with parameters t in [-1, 1], strictly increasing.
struct Curve {
  std::vector<Eigen::VectorXd> nodes;
  std::vector<double> t;

  int M() const { return nodes.empty() ? 0 : static_cast<int>(nodes.front().size()); }
  std::size_t size() const { return nodes.size(); }
  void validate() const;
  double length() const;

  static Curve segment(const Eigen::VectorXd& p, const Eigen::VectorXd& q, int nodes);
  // Uniform-in-t samples of a parametrized path s in [-1, 1] -> R^M.
  static Curve sample(const std::function<Eigen::VectorXd(double)>& path, int nodes);
};

// Closed balls inside which travel is free.
struct WellBalls {
  std::vector<Eigen::VectorXd> centers;
  std::vector<double> radii;
  bool inside(const double* z, int M) const;
  int which(const double* z, int M) const;  // index of the first ball containing z, or -1
};

// Trapezoidal line integral of 2 sqrt(W) |gamma'| along the polyline.
double line_energy(const ScalarField& W, const Curve& gamma, const WellBalls* balls = nullptr);

struct TensionResult {
  double value = 0.0;
  Curve curve;
  std::string method;  // "closed-form" or "optimized"
  int nodes = 0;
  std::vector<double> trace;  // energy after each descent sweep
};

struct GeodesicOptions {
  int nodes = 129;
  int max_nodes = 1025;
  int sweeps = 200;
  double refine_tol = 1e-3;  // relative change that stops resolution doubling
  int cloud = 0;             // grid points per axis for the graph; 0 = by dimension
  double inflate = 0.5;      // relative inflation of the bounding box
  double quad_tol = 1e-12;   // scalar fast path
};

// sigma^h between the wells of W^h. M = 1 uses quadrature of 2 sqrt(W^h) over [a, b].
TensionResult sigma_h(const HomogenizedPotential& Wh, const GeodesicOptions& opts = {});
// Same for a plain field with given wells.
TensionResult sigma_field(const ScalarField& W, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                          const GeodesicOptions& opts = {});

// Graph initialization followed by node descent between arbitrary endpoints.
TensionResult optimize_path(const ScalarField& W, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                            const GeodesicOptions& opts = {}, const WellBalls* balls = nullptr);

double geodesic_distance(const ScalarField& W, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                         const WellBalls* balls = nullptr, const GeodesicOptions& opts = {});

// Reparametrizes so gamma stays in ball 0 on [-1, -1/3] and in ball 1 on [1/3, 1].
Curve normalize_one_third(const Curve& gamma, const WellBalls& balls);
bool is_one_third_normalized(const Curve& gamma, const WellBalls& balls);

// Zero-set radii read off a cache by walking along axis rays from each well.
ZeroSetRadius cache_zero_radius(const CellCache& cache, double zero_tol = 1e-12, int steps = 4000);

// sigma^xi from a W^xi cache; the curve is normalized to the one-third convention.
TensionResult sigma_xi(const CellCache& cache, const ZeroSetRadius* radii = nullptr, const GeodesicOptions& opts = {});

}  // namespace twoscale
