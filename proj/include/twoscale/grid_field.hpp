#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace twoscale {

// Regular cell-centred grid: cell i along an axis covers [(origin+i) h, (origin+i+1) h).
// Origins are absolute integer offsets so sub-boxes share the global lattice exactly.
struct GridBox {
  int N = 1;
  std::vector<std::int64_t> origin;
  std::vector<std::int64_t> count;
  double h = 1.0;

  static GridBox unit_domain(int N, std::int64_t cells_per_axis, double length = 1.0);

  std::int64_t size() const;
  // Row-major linear index, last axis fastest.
  std::int64_t linear(const std::int64_t* idx) const;
  void unravel(std::int64_t lin, std::int64_t* idx) const;
  std::int64_t stride(int axis) const;
  double center(int axis, std::int64_t i) const { return (static_cast<double>(origin[axis] + i) + 0.5) * h; }
  double cell_volume() const;
  double volume() const { return cell_volume() * static_cast<double>(size()); }
  bool same_as(const GridBox& o) const;
};

struct GridField {
  GridBox box;
  int M = 1;
  std::vector<double> values;  // size() * M, components contiguous per cell
  Eigen::VectorXd a, b;         // wells recorded in the file header

  GridField() = default;
  GridField(GridBox bx, int M_, double fill = 0.0);
  GridField(GridBox bx, const Eigen::VectorXd& constant);

  std::int64_t cells() const { return box.size(); }
  double* at(std::int64_t cell) { return values.data() + cell * M; }
  const double* at(std::int64_t cell) const { return values.data() + cell * M; }
  bool all_finite() const;
  // Integral of each component (midpoint rule, compensated).
  Eigen::VectorXd integral() const;
  Eigen::VectorXd mean() const;
};

void write_grid_field(const GridField& f, const std::string& path);
GridField read_grid_field(const std::string& path);

// Neumaier compensated accumulator.
struct CompensatedSum {
  double sum = 0.0, c = 0.0;
  void add(double v) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v))
      c += (sum - t) + v;
    else
      c += (v - t) + sum;
    sum = t;
  }
  double value() const { return sum + c; }
};

}  // namespace twoscale
