#include "twoscale/lattice.hpp"

#include <cmath>
#include <stdexcept>

namespace twoscale {

Lattice::Lattice(const Eigen::MatrixXd& basis) : basis_(basis) {
  if (basis.rows() != basis.cols() || basis.rows() < 1)
    throw std::invalid_argument("lattice basis must be square");
  const double det = basis.determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-14)
    throw std::invalid_argument("lattice basis is not invertible");
  inverse_ = basis.inverse();
  volume_ = std::abs(det);
  unit_ = basis.isIdentity(0.0);
}

Lattice Lattice::unit(int dim) { return Lattice(Eigen::MatrixXd::Identity(dim, dim)); }

Eigen::VectorXi Lattice::floor_index(const Eigen::VectorXd& z) const {
  Eigen::VectorXd c = unit_ ? z : Eigen::VectorXd(inverse_ * z);
  Eigen::VectorXi k(c.size());
  for (int i = 0; i < c.size(); ++i) k[i] = static_cast<int>(std::floor(c[i]));
  return k;
}

Eigen::VectorXd Lattice::floor(const Eigen::VectorXd& z) const { return point(floor_index(z)); }

Eigen::VectorXd Lattice::frac(const Eigen::VectorXd& z) const {
  if (unit_) {
    Eigen::VectorXd f(z.size());
    for (int i = 0; i < z.size(); ++i) f[i] = z[i] - std::floor(z[i]);
    return f;
  }
  return z - floor(z);
}

}  // namespace twoscale
