#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "twoscale/geodesic.hpp"
#include "twoscale/grid_field.hpp"

namespace twoscale {

// g : (-tau, tau) -> [-1, 1] with (g')^2 = (lambda + W(gamma(g))) / (eps^2 |gamma'(g)|^2).
class TransitionProfile {
 public:
  double tau = 0.0, eps = 0.0, lambda = 0.0;
  double length = 0.0;  // L(gamma)
  double max_W = 0.0;   // max of W along gamma
  Curve gamma;
  ScalarField W;

  // Knots s_k in [-1, 1] with t_k = T(s_k) - tau.
  std::vector<double> s, t;

  double g(double time) const;
  double g_prime(double time) const;
  Eigen::VectorXd gamma_at(double s) const;
  Eigen::VectorXd u(double time) const;  // gamma(g(time)), clamped to the wells outside (-tau, tau)
  double speed(double s) const;         // |gamma'(s)|

  // Integral of W/eps + eps |(gamma o g)'|^2 over (-tau, tau), computed in the s variable.
  double energy() const;
  // Right-hand side of the Lemma's estimate: int 2 sqrt(W)|gamma'| + 2 sqrt(lambda) L.
  double energy_bound() const;
  // Explicit constant with C eps <= tau.
  double lower_constant() const;
  double upper_tau() const { return eps / std::sqrt(lambda) * length; }
  // Max relative residual of the ODE at interior samples of t.
  double ode_residual(int samples = 257) const;

 private:
  friend TransitionProfile build_profile(const Curve&, const ScalarField&, double, double, int);
  // dt/ds at both ends of interval k, one-sided inside the curve segment holding it.
  std::vector<double> d0_, d1_;
  double hermite(std::size_t k, double theta) const;
  double s_of(double time) const;
};

// Cubic Hermite table of g and g' on a uniform t-grid over [-tau, tau], for bulk evaluation.
class ProfileTable {
 public:
  explicit ProfileTable(const TransitionProfile& profile, int samples = 65537);
  double g(double time) const;
  void u(double time, double* out) const;

 private:
  const TransitionProfile* p_;
  double dt_ = 0.0;
  std::vector<double> g_, gp_;
};

// Inverts t(g) = int eps |gamma'| / sqrt(lambda + W(gamma)) by adaptive Simpson on each curve segment.
TransitionProfile build_profile(const Curve& gamma, const ScalarField& W, double eps, double lambda,
                                int samples = 2049);

// Default lambda = (varsigma / L)^2 with varsigma = 0.01 sigma.
double default_lambda(double sigma, double length);

// Phase mask on a grid: 1 inside A.
struct PhaseMask {
  GridBox box;
  std::vector<std::uint8_t> inside;
};

// Exact Euclidean distance transform (lower envelope of parabolas per axis), signed:
// negative inside A, positive outside, with the interface midway between cell centres.
GridField signed_distance(const PhaseMask& A);

// u_n = a where h < -tau, gamma(g(h)) in the layer, b where h > tau.
GridField recovery_sequence(const GridField& dist, const TransitionProfile& profile);

struct BubbleCenter {
  Eigen::VectorXd x0;
  double clearance = 0.0;  // min(distance to the interface, distance to the boundary)
};

// Cell centre inside A maximising the clearance.
BubbleCenter choose_bubble_center(const GridField& dist);

struct MassRepair {
  GridField v;
  double c_analytic = 0.0;    // -(N+1)/(omega_N r^N)
  double c_grid = 0.0;        // after the discrete correction
  Eigen::VectorXd m_n;        // mean of u_n before repair
  std::vector<std::uint8_t> ball;
};

double unit_ball_volume(int N);

// Bubble correction on B(x0, r) enforcing mean(v) = m a + (1 - m) b.
MassRepair mass_repair(const GridField& u_n, double m, const Eigen::VectorXd& x0, double r);

}  // namespace twoscale
