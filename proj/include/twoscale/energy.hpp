#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "twoscale/grid_field.hpp"
#include "twoscale/potentials.hpp"

namespace twoscale {

struct Scales {
  double eps = 0.1, delta = 0.01, eta = 1e-4;
  void validate() const;
};

// W({x/delta}, {x/eta}, z) at the cell centres of a grid. Aligned unit-lattice scales use
// exact integer fractional parts; anything else goes through the lattice reduction.
class FieldPotential {
 public:
  FieldPotential(const TwoScalePotential& p, const GridBox& box, double delta, double eta);

  const TwoScalePotential& potential() const { return *p_; }
  bool aligned() const { return aligned_; }
  void cell_coords(std::int64_t cell, double* t1, double* t2) const;
  double value(std::int64_t cell, const double* z) const;
  void gradient(std::int64_t cell, const double* z, double* g) const;
  void hessian(std::int64_t cell, const double* z, double* H) const;

 private:
  const TwoScalePotential* p_;
  GridBox box_;
  double delta_, eta_;
  bool aligned_ = false;
  std::int64_t k1_ = 0, k2_ = 0;
};

struct EnergyBreakdown {
  double potential = 0.0;  // (1/eps) int W
  double gradient = 0.0;   // eps int |grad u|^2
  double total = 0.0;
  std::vector<double> region_potential, region_gradient;  // filled when a partition is given
};

// Optional partition of the cells: label[i] in [0, count).
struct RegionLabels {
  std::vector<int> label;
  int count = 0;
};

// Midpoint-rule potential term and forward-difference gradient term with Neumann boundary.
// Requires h <= eta / resolve.
EnergyBreakdown energy(const GridField& u, const Scales& s, const TwoScalePotential& p,
                       const RegionLabels* regions = nullptr, double resolve = 8.0);

// L2 gradient samples (1/eps) dW/dz - 2 eps Lap_h u; <grad, v> h^N is the directional derivative.
GridField energy_gradient(const GridField& u, const Scales& s, const TwoScalePotential& p, double resolve = 8.0);

struct MinimizeOptions {
  enum class Step { fixed, backtracking };
  enum class Method { automatic, gradient, preconditioned, newton };
  Step step = Step::backtracking;
  Method method = Method::automatic;  // automatic: newton for N = M = 1, preconditioned otherwise
  int max_iter = 2000;
  double tol = 1e-10;          // relative energy change per iteration that counts as stalled
  int stall = 3;               // consecutive stalled iterations before stopping
  std::optional<double> mass;  // target fraction m with mean(u) = m a + (1 - m) b
  double fixed_step = 0.0;     // 0 = eps h^2 / 4
  double resolve = 8.0;
  void validate() const;
};

struct MinimizeResult {
  GridField u;
  std::vector<double> trace;  // energy of every accepted iterate, starting with the initial one
  EnergyBreakdown energy;
  int iterations = 0;
  bool converged = false;
  std::string method;
  double max_mass_error = 0.0;  // worst |mean(u) - target| over the iterates
};

MinimizeResult minimize(const GridField& u0, const Scales& s, const TwoScalePotential& p, const MinimizeOptions& opts = {});

// Adds the constant (m a + (1 - m) b) - mean(u) to every sample.
GridField project_mass(const GridField& u, double m, const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// 1 where the projection of u on b - a passes the midpoint.
std::vector<std::uint8_t> threshold_phase(const GridField& u, const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Relative perimeter of {u = b} in the grid box: 1D jump count, 2D marching squares on the
// smoothed indicator, N >= 3 face count divided by the isotropic mean of |n|_1.
double perimeter(const GridField& u, const Eigen::VectorXd& a, const Eigen::VectorXd& b);
double face_count_correction(int N);

// L1 distance from u to its nearest-well thresholding.
double bv_projection_distance(const GridField& u, const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Uniform samples on the segment [a, b] plus a small isotropic perturbation.
GridField random_field(const GridBox& box, const Eigen::VectorXd& a, const Eigen::VectorXd& b, unsigned seed,
                       double noise = 0.05);

}  // namespace twoscale
