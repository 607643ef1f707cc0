#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "twoscale/lattice.hpp"

namespace twoscale {

using Vec = Eigen::VectorXd;

// Double-well energy density z -> [0, inf) on R^M, independent of the cell variables.
class BasePotential {
 public:
  virtual ~BasePotential() = default;
  virtual int dim() const = 0;
  virtual double value(const double* z) const = 0;
  virtual void gradient(const double* z, double* g) const = 0;
  // Row-major M x M.
  virtual void hessian(const double* z, double* H) const = 0;
  // Upper bound of value on |z| <= S.
  virtual double bound(double S) const = 0;
  // Bases with equal non-empty shape keys differ only by the factor scale().
  virtual std::string shape_key() const { return {}; }
  virtual double scale() const { return 1.0; }
  virtual std::shared_ptr<const BasePotential> unit_shape() const { return nullptr; }
  // Declared wells, when known.
  virtual bool wells(Vec& a, Vec& b) const {
    (void)a;
    (void)b;
    return false;
  }
};

using BasePtr = std::shared_ptr<const BasePotential>;

// c |z-a|^2 |z-b|^2 / s^4 with s = |b-a|/2; equals c (1-u^2)^2 for a=-1, b=1.
class QuarticWell final : public BasePotential {
 public:
  QuarticWell(double c, Vec a, Vec b);
  int dim() const override { return static_cast<int>(a_.size()); }
  double value(const double* z) const override;
  void gradient(const double* z, double* g) const override;
  void hessian(const double* z, double* H) const override;
  double bound(double S) const override;
  std::string shape_key() const override;
  double scale() const override { return c_; }
  std::shared_ptr<const BasePotential> unit_shape() const override;
  bool wells(Vec& a, Vec& b) const override;

  double c() const { return c_; }
  const Vec& a() const { return a_; }
  const Vec& b() const { return b_; }

 private:
  double c_;
  Vec a_, b_;
  double inv_s4_;
};

// Base built from callables; the hessian falls back to central differences of the gradient.
class FunctionBase final : public BasePotential {
 public:
  using ValueFn = std::function<double(const double*)>;
  using GradFn = std::function<void(const double*, double*)>;
  FunctionBase(Vec a, Vec b, ValueFn value, GradFn gradient, double bound_scale, double bound_power);
  int dim() const override { return M_; }
  double value(const double* z) const override { return value_(z); }
  void gradient(const double* z, double* g) const override;
  void hessian(const double* z, double* H) const override;
  double bound(double S) const override;
  bool wells(Vec& a, Vec& b) const override;

 private:
  int M_;
  Vec a_, b_;
  ValueFn value_;
  GradFn grad_;
  double bound_scale_, bound_power_;
};

// phi_M(|z|) base(z) + (1 - phi_M(|z|)) |z|/R with phi_M = 1 on [0,M], 0 on [2M, inf).
class TruncatedBase final : public BasePotential {
 public:
  TruncatedBase(BasePtr base, double M, double R);
  int dim() const override { return base_->dim(); }
  double value(const double* z) const override;
  void gradient(const double* z, double* g) const override;
  void hessian(const double* z, double* H) const override;
  double bound(double S) const override;
  bool wells(Vec& a, Vec& b) const override { return base_->wells(a, b); }

 private:
  BasePtr base_;
  double M_, R_;
};

// Quintic smoothstep cutoff: 1 on [0,M], 0 on [2M,inf), C^2 in between.
double cutoff(double t, double M);
double cutoff_d1(double t, double M);
double cutoff_d2(double t, double M);

// Axis-aligned box in cell coordinates [0,1)^N.
struct CellBox {
  std::vector<double> lo, hi;
  double volume() const;
  bool contains(const double* t) const;
};

// W(y1, y2, z) = sum_k w_k(y1, y2) base_k(z) with sum_k w_k = 1 and w_k >= 0.
// Weights are evaluated on cell coordinates t_i = frac(B_i^{-1} y_i) in [0,1)^N.
class TwoScalePotential {
 public:
  using WeightFn = std::function<void(const double* t1, const double* t2, double* w)>;

  TwoScalePotential(int N, std::vector<BasePtr> bases, WeightFn weights, Lattice cell1, Lattice cell2,
                    Vec a, Vec b, double growth_R);

  int N() const { return N_; }
  int M() const { return M_; }
  int components() const { return static_cast<int>(bases_.size()); }
  const Vec& a() const { return a_; }
  const Vec& b() const { return b_; }
  double growth_R() const { return growth_R_; }
  const Lattice& cell1() const { return cell1_; }
  const Lattice& cell2() const { return cell2_; }
  const BasePotential& base(int k) const { return *bases_[k]; }
  const std::vector<BasePtr>& bases() const { return bases_; }

  // Cell coordinates of a physical cell variable.
  void to_cell(const Lattice& L, const double* y, double* t) const;

  // Evaluation on raw cell variables (periodic reduction applied).
  double value(const double* y1, const double* y2, const double* z) const;
  // Evaluation on reduced cell coordinates.
  double value_cell(const double* t1, const double* t2, const double* z) const;
  void gradient_cell(const double* t1, const double* t2, const double* z, double* g) const;
  void hessian_cell(const double* t1, const double* t2, const double* z, double* H) const;
  void weights(const double* t1, const double* t2, double* w) const { weights_(t1, t2, w); }

  // Common-shape fast path: W = coefficient(t1, t2) * shape(z).
  bool has_common_shape() const { return static_cast<bool>(shape_); }
  const BasePotential& shape() const { return *shape_; }
  double coefficient(const double* t1, const double* t2) const;
  const std::vector<double>& base_scales() const { return scales_; }

  double bound(double S) const;
  double lower_envelope(const double* z) const;

  // Optional label used in reports.
  std::string name = "custom";

 private:
  int N_, M_;
  std::vector<BasePtr> bases_;
  WeightFn weights_;
  Lattice cell1_, cell2_;
  Vec a_, b_;
  double growth_R_;
  BasePtr shape_;
  std::vector<double> scales_;
};

using PotentialPtr = std::shared_ptr<const TwoScalePotential>;

struct CompositeLayout {
  CellBox inclusion1, inclusion2;
  double theta1_actual = 0.0, theta2_actual = 0.0;
  bool snapped1 = false, snapped2 = false;
};

// Centered inclusion box of volume theta in [0,1)^N with faces on the midpoint grid of
// `resolution` nodes per axis when an exact integer factorization exists.
CellBox centered_box(int N, double theta, int resolution, bool* snapped);

struct CompositeOptions {
  int resolution = 64;       // quadrature nodes per axis used for snapping
  double ramp_cells = 0.0;   // indicator ramp width in quadrature cells (0 = sharp)
  double growth_R = 0.0;     // 0 = derive from the bases
};

// W = 1_{I1}(y1) [1_{I2}(y2) W1 + 1_{Q2\I2}(y2) W2] + 1_{Q1\I1}(y1) W3.
PotentialPtr make_composite(int N, double theta1, double theta2, BasePtr W1, BasePtr W2, BasePtr W3,
                            const CompositeOptions& opts = {}, CompositeLayout* layout = nullptr);
// Potential independent of the cell variables.
PotentialPtr make_uniform(int N, BasePtr base, double growth_R = 0.0);

// Smallest R (on a ladder) with f(z) >= |z|/R for |z| >= R, checked on sampled rays.
double estimate_growth_R(const std::function<double(const double*)>& f, int M);

// Double cell average of W(.,.,z) by the midpoint rule with R1, R2 nodes per axis.
double homogenize(const TwoScalePotential& p, const Vec& z, int R1 = 64, int R2 = 64);

class HomogenizedPotential {
 public:
  explicit HomogenizedPotential(PotentialPtr p, int R1 = 64, int R2 = 64);
  HomogenizedPotential(const HomogenizedPotential&) = default;

  int M() const { return source_->M(); }
  double operator()(const double* z) const;
  double operator()(const Vec& z) const { return (*this)(z.data()); }
  void gradient(const double* z, double* g) const;
  const Vec& a() const { return source_->a(); }
  const Vec& b() const { return source_->b(); }
  const TwoScalePotential& source() const { return *source_; }
  PotentialPtr source_ptr() const { return source_; }
  const std::vector<double>& mean_weights() const { return mean_w_; }
  int resolution1() const { return R1_; }
  int resolution2() const { return R2_; }

 private:
  PotentialPtr source_;
  int R1_, R2_;
  std::vector<double> mean_w_;
};

PotentialPtr truncate(const PotentialPtr& p, double M, double R);

struct HypothesisCheck {
  std::string name;
  bool pass = true;
  double worst = 0.0;
  std::string witness;
};

struct HypothesisReport {
  std::vector<HypothesisCheck> checks;
  bool all_pass() const;
  const HypothesisCheck& get(const std::string& name) const;
};

HypothesisReport validate_hypotheses(const TwoScalePotential& p, int sample_budget, unsigned seed = 7);

}  // namespace twoscale
