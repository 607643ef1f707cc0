#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "twoscale/potentials.hpp"

namespace twoscale {

struct CellGrid {
  int R1 = 32;  // nodes per axis on Q1
  int R2 = 32;  // nodes per axis on Q2
};

struct CellSolverOptions {
  int max_iter = 500;
  double tol = 1e-9;      // objective change stop per sweep
  double sup_M = 0.0;     // truncation level M of the competitors; 0 = growth_R + |z| + 1
  bool multi_start = true;
  double armijo = 1e-4;
};

// Discrete perturbations: psi1 is [R1^N][M], psi2 is [R1^N][R2^N][M].
struct Perturbations {
  std::vector<double> psi1, psi2;
};

struct CellSolution {
  double value = 0.0;
  Perturbations psi;
  int iterations = 0;
  double step_norm = 0.0;
  bool converged = false;
  bool feasible = false;
  std::vector<double> trace;  // objective after each sweep, starting at the initial value
};

// Discrete norms used by the admissible classes.
struct PerturbationNorms {
  double psi1_l2 = 0.0, psi1_grad = 0.0;
  double psi2_l2 = 0.0, psi2_grad_max = 0.0;  // max over y1 nodes of the y2-gradient norm
  double sup = 0.0;
};

PerturbationNorms perturbation_norms(const Perturbations& psi, int N, int M, const CellGrid& grid);

// Cell objective: mean over nodes of W(y1, y2, z + psi1 + psi2).
double cell_objective(const TwoScalePotential& p, const Eigen::VectorXd& z, const Perturbations& psi,
                      const CellGrid& grid);

// W^xi(z) by alternating projected descent over (psi1, psi2). `warm` seeds an extra start.
CellSolution solve_W_xi(const TwoScalePotential& p, const Eigen::VectorXd& z, double xi, const CellGrid& grid = {},
                        const CellSolverOptions& opts = {}, const Perturbations* warm = nullptr);

struct ZeroSetRadius {
  double r_a = 0.0, r_b = 0.0;
};

// Largest radius along rays from each well with W^xi <= zero_tol (bisection).
ZeroSetRadius zero_set_radius(const TwoScalePotential& p, double xi, const CellGrid& grid = {},
                              const CellSolverOptions& opts = {}, double zero_tol = 1e-12, int bisections = 30);

struct ConvergenceTable {
  std::vector<double> xi;                    // strictly decreasing ladder
  std::vector<Eigen::VectorXd> z;
  std::vector<std::vector<double>> value;    // value[i][k] = W^{xi_i}(z_k)
  std::vector<double> W_h;                   // discrete W^h(z_k) on the solver grid
  std::vector<std::vector<int>> iterations;
  std::vector<std::vector<std::uint8_t>> feasible;
  std::vector<double> sup_gap;               // max_k (W_h - W^xi) per row
  int monotone_violations = 0;               // entries decreasing as xi decreases, beyond 2 tol
};

// Solves the ladder in ascending xi, warm-starting each row from the next smaller xi.
ConvergenceTable convergence_scan(const TwoScalePotential& p, const std::vector<Eigen::VectorXd>& z,
                                  const std::vector<double>& ladder, const CellGrid& grid = {},
                                  const CellSolverOptions& opts = {});

// W^xi sampled on a regular z-lattice with multilinear interpolation.
class CellCache {
 public:
  CellCache() = default;
  CellCache(Eigen::VectorXd lo, Eigen::VectorXd hi, int nodes, double xi);

  int M() const { return static_cast<int>(lo_.size()); }
  int nodes() const { return nodes_; }
  double xi() const { return xi_; }
  const Eigen::VectorXd& lo() const { return lo_; }
  const Eigen::VectorXd& hi() const { return hi_; }
  std::int64_t size() const;
  Eigen::VectorXd node(std::int64_t lin) const;
  bool contains(const double* z) const;

  double operator()(const double* z) const;
  double operator()(const Eigen::VectorXd& z) const { return (*this)(z.data()); }

  std::vector<double> values;
  std::vector<Perturbations> solutions;
  Eigen::VectorXd a, b;

 private:
  Eigen::VectorXd lo_, hi_;
  int nodes_ = 0;
  double xi_ = 0.0;
};

// Fills a cache on the box [lo, hi] with `nodes` per axis. `warm` (same lattice, smaller xi) seeds each node.
CellCache build_cell_cache(const TwoScalePotential& p, double xi, const Eigen::VectorXd& lo,
                           const Eigen::VectorXd& hi, int nodes, const CellGrid& grid = {},
                           const CellSolverOptions& opts = {}, const CellCache* warm = nullptr);

// Caches for an xi ladder, built in ascending xi with warm starts; returned in the ladder's order.
std::vector<CellCache> build_cache_ladder(const TwoScalePotential& p, const std::vector<double>& ladder,
                                          const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, int nodes,
                                          const CellGrid& grid = {}, const CellSolverOptions& opts = {});

}  // namespace twoscale
