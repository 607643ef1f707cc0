#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "twoscale/grid_field.hpp"
#include "twoscale/lattice.hpp"
#include "twoscale/potentials.hpp"

namespace twoscale {

// Number of grid cells per `scale`; throws unless scale is an integer multiple of h.
std::int64_t cells_per_scale(double scale, double h, const char* what);

// Interior delta-cells Xi_1 (per-axis absolute index ranges), the union Omega_hat and remainder Lambda.
struct DomainDecomposition {
  GridBox box;
  double delta = 0.0;
  std::int64_t K = 0;                 // grid cells per delta along each axis
  std::vector<std::int64_t> xi_lo;    // first interior delta index per axis
  std::vector<std::int64_t> xi_count; // interior delta cells per axis
  std::vector<std::uint8_t> interior; // per grid cell: 1 on Omega_hat, 0 on Lambda

  std::int64_t generator_count() const;
  std::vector<std::int64_t> generator(std::int64_t lin) const;  // absolute delta index of the lin-th generator
  std::int64_t interior_cells() const;
  std::int64_t remainder_cells() const;
  double remainder_measure() const { return static_cast<double>(remainder_cells()) * box.cell_volume(); }
};

DomainDecomposition decompose(const GridBox& box, double delta, const Lattice& lattice);
DomainDecomposition decompose(const GridBox& box, double delta);

// Fractional part of (delta/eta) floor(x/delta) per axis (unit lattices); constant on each delta-cell.
Eigen::VectorXd iota2(const Eigen::VectorXd& x, double delta, double eta);

// Per-cell rearrangement. Values are stored for the interior delta-cells only; Lambda carries `fill`.
// Layout: [generator][y1 node][y2 node][component], nodes row-major with the last axis fastest.
struct UnfoldedField {
  int stage = 1;
  int M = 1;
  DomainDecomposition dec;
  double eta = 0.0;
  std::int64_t k = 1;        // grid cells per eta (stage 2)
  std::int64_t nodes1 = 1;   // K^N
  std::int64_t nodes2 = 1;   // k^N (1 for stage 1)
  Eigen::VectorXd fill;
  std::vector<double> values;
  std::vector<std::uint8_t> proper;  // stage 2: per (generator, y1 node), 1 on Q_hat_{1,eta}

  int N() const { return dec.box.N; }
  std::int64_t entry(std::int64_t g, std::int64_t j, std::int64_t l) const { return (g * nodes1 + j) * nodes2 + l; }
  const double* at(std::int64_t g, std::int64_t j, std::int64_t l) const { return values.data() + entry(g, j, l) * M; }
  double* at(std::int64_t g, std::int64_t j, std::int64_t l) { return values.data() + entry(g, j, l) * M; }
};

UnfoldedField unfold1(const GridField& u, double delta, const Eigen::VectorXd& fill);
UnfoldedField unfold2(const GridField& u, double delta, double eta, const Eigen::VectorXd& fill);
// Second partial unfolding applied cell by cell to a first unfolding, using iota2.
UnfoldedField partial_unfold(const UnfoldedField& U1, double eta, const Eigen::VectorXd& fill);

// Integral over Omega x Q1 (x Q2) with unit cells, including the fill on the boundary sets.
Eigen::VectorXd unfolded_integral(const UnfoldedField& U);
// Integral of W(y1, y2, U) over Omega x Q1 x Q2 at the y-nodes of a stage-2 field.
double unfolded_potential_integral(const TwoScalePotential& p, const UnfoldedField& U2);

// Pointwise product of two unfolded fields with identical layout (component-wise for M > 1).
UnfoldedField unfolded_product(const UnfoldedField& A, const UnfoldedField& B);
GridField field_product(const GridField& v, const GridField& w);

// Masks of the image sets Omega_hat_1 = G1(Omega_hat x Q1) and Omega_hat_2.
std::vector<std::uint8_t> image_mask1(const GridBox& box, double delta);
std::vector<std::uint8_t> image_mask2(const GridBox& box, double delta, double eta);
Eigen::VectorXd masked_integral(const GridField& u, const std::vector<std::uint8_t>& mask, bool inside, bool absolute);

// Forward difference along `axis`, backward at the last cell.
GridField forward_difference(const GridField& u, int axis);
// Forward difference in y1 along `axis` (step 1/K) on nodes with j_axis < K-1; others set to 0.
UnfoldedField y1_forward_difference(const UnfoldedField& U1, int axis);

struct DefectNorms {
  double d1 = 0.0, d2 = 0.0;  // L2 norms of U1 u - u and U2 u - U1 u
};

DefectNorms defect_norms(const GridField& u, double delta, double eta, const Eigen::VectorXd& fill);

}  // namespace twoscale
