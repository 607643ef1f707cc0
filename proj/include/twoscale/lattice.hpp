#pragma once

#include <Eigen/Dense>

namespace twoscale {

// Rank-N lattice G = basis * Z^N with fundamental cell basis * [0,1)^N.
class Lattice {
 public:
  Lattice() = default;
  explicit Lattice(const Eigen::MatrixXd& basis);

  static Lattice unit(int dim);

  int dim() const { return static_cast<int>(basis_.rows()); }
  const Eigen::MatrixXd& basis() const { return basis_; }
  double cell_volume() const { return volume_; }
  bool is_unit() const { return unit_; }

  // z = floor(z) + frac(z) with floor(z) in G and frac(z) in the fundamental cell.
  Eigen::VectorXd floor(const Eigen::VectorXd& z) const;
  Eigen::VectorXd frac(const Eigen::VectorXd& z) const;
  // Integer coordinates of floor(z).
  Eigen::VectorXi floor_index(const Eigen::VectorXd& z) const;
  Eigen::VectorXd point(const Eigen::VectorXi& k) const { return basis_ * k.cast<double>(); }

 private:
  Eigen::MatrixXd basis_;
  Eigen::MatrixXd inverse_;
  double volume_ = 0.0;
  bool unit_ = false;
};

}  // namespace twoscale
