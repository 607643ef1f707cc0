#include "twoscale/potentials.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace twoscale {

namespace {

constexpr int kMaxComponents = 16;

std::string fmt_vec(const double* z, int M) {
  std::ostringstream os;
  os.precision(17);
  os << "(";
  for (int i = 0; i < M; ++i) os << (i ? "," : "") << z[i];
  os << ")";
  return os.str();
}

double sq_dist(const double* z, const Vec& p) {
  double s = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    const double d = z[i] - p[i];
    s += d * d;
  }
  return s;
}

}  // namespace

// ---------------------------------------------------------------- QuarticWell

QuarticWell::QuarticWell(double c, Vec a, Vec b) : c_(c), a_(std::move(a)), b_(std::move(b)) {
  if (a_.size() != b_.size() || a_.size() < 1) throw std::invalid_argument("quartic: well dimension mismatch");
  if (!(c_ > 0.0) || !std::isfinite(c_)) throw std::invalid_argument("quartic: scale must be positive");
  const double s = 0.5 * (b_ - a_).norm();
  if (!(s > 0.0)) throw std::invalid_argument("quartic: wells must differ");
  inv_s4_ = 1.0 / (s * s * s * s);
}

double QuarticWell::value(const double* z) const {
  return c_ * inv_s4_ * sq_dist(z, a_) * sq_dist(z, b_);
}

void QuarticWell::gradient(const double* z, double* g) const {
  const double A = sq_dist(z, a_), B = sq_dist(z, b_);
  const double k = 2.0 * c_ * inv_s4_;
  for (int i = 0; i < a_.size(); ++i) g[i] = k * ((z[i] - a_[i]) * B + (z[i] - b_[i]) * A);
}

void QuarticWell::hessian(const double* z, double* H) const {
  const int M = static_cast<int>(a_.size());
  const double A = sq_dist(z, a_), B = sq_dist(z, b_);
  const double k = c_ * inv_s4_;
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < M; ++j) {
      const double za_i = z[i] - a_[i], zb_i = z[i] - b_[i];
      const double za_j = z[j] - a_[j], zb_j = z[j] - b_[j];
      double v = 4.0 * (za_i * zb_j + zb_i * za_j);
      if (i == j) v += 2.0 * (A + B);
      H[i * M + j] = k * v;
    }
}

double QuarticWell::bound(double S) const {
  const double ra = S + a_.norm(), rb = S + b_.norm();
  return c_ * inv_s4_ * ra * ra * rb * rb;
}

std::string QuarticWell::shape_key() const {
  return "quartic" + fmt_vec(a_.data(), static_cast<int>(a_.size())) + fmt_vec(b_.data(), static_cast<int>(b_.size()));
}

std::shared_ptr<const BasePotential> QuarticWell::unit_shape() const {
  return std::make_shared<QuarticWell>(1.0, a_, b_);
}

bool QuarticWell::wells(Vec& a, Vec& b) const {
  a = a_;
  b = b_;
  return true;
}

// ---------------------------------------------------------------- FunctionBase

FunctionBase::FunctionBase(Vec a, Vec b, ValueFn value, GradFn gradient, double bound_scale, double bound_power)
    : M_(static_cast<int>(a.size())),
      a_(std::move(a)),
      b_(std::move(b)),
      value_(std::move(value)),
      grad_(std::move(gradient)),
      bound_scale_(bound_scale),
      bound_power_(bound_power) {
  if (a_.size() != b_.size() || M_ < 1) throw std::invalid_argument("function base: well dimension mismatch");
  if (!value_) throw std::invalid_argument("function base: missing value callable");
}

void FunctionBase::gradient(const double* z, double* g) const {
  if (grad_) {
    grad_(z, g);
    return;
  }
  std::vector<double> p(z, z + M_);
  for (int i = 0; i < M_; ++i) {
    const double t = 1e-6 * std::max(1.0, std::abs(z[i]));
    p[i] = z[i] + t;
    const double fp = value_(p.data());
    p[i] = z[i] - t;
    const double fm = value_(p.data());
    p[i] = z[i];
    g[i] = (fp - fm) / (2.0 * t);
  }
}

void FunctionBase::hessian(const double* z, double* H) const {
  std::vector<double> p(z, z + M_), gp(M_), gm(M_);
  for (int j = 0; j < M_; ++j) {
    const double t = 1e-5 * std::max(1.0, std::abs(z[j]));
    p[j] = z[j] + t;
    gradient(p.data(), gp.data());
    p[j] = z[j] - t;
    gradient(p.data(), gm.data());
    p[j] = z[j];
    for (int i = 0; i < M_; ++i) H[i * M_ + j] = (gp[i] - gm[i]) / (2.0 * t);
  }
  for (int i = 0; i < M_; ++i)
    for (int j = i + 1; j < M_; ++j) {
      const double s = 0.5 * (H[i * M_ + j] + H[j * M_ + i]);
      H[i * M_ + j] = H[j * M_ + i] = s;
    }
}

double FunctionBase::bound(double S) const { return bound_scale_ * std::pow(1.0 + S, bound_power_); }

bool FunctionBase::wells(Vec& a, Vec& b) const {
  a = a_;
  b = b_;
  return true;
}

// ---------------------------------------------------------------- cutoff

double cutoff(double t, double M) {
  if (t <= M) return 1.0;
  if (t >= 2.0 * M) return 0.0;
  const double s = (t - M) / M;
  return 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
}

double cutoff_d1(double t, double M) {
  if (t <= M || t >= 2.0 * M) return 0.0;
  const double s = (t - M) / M;
  return -30.0 * s * s * (1.0 - s) * (1.0 - s) / M;
}

double cutoff_d2(double t, double M) {
  if (t <= M || t >= 2.0 * M) return 0.0;
  const double s = (t - M) / M;
  return -60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / (M * M);
}

// ---------------------------------------------------------------- TruncatedBase

TruncatedBase::TruncatedBase(BasePtr base, double M, double R) : base_(std::move(base)), M_(M), R_(R) {
  if (!base_) throw std::invalid_argument("truncate: null base");
  if (!(R > 0.0)) throw std::invalid_argument("truncate: R must be positive");
  if (!(M > R)) throw std::invalid_argument("truncate: requires M > R");
}

double TruncatedBase::value(const double* z) const {
  const int M = dim();
  double r = 0.0;
  for (int i = 0; i < M; ++i) r += z[i] * z[i];
  r = std::sqrt(r);
  if (r <= M_) return base_->value(z);
  if (r >= 2.0 * M_) return r / R_;
  const double f = cutoff(r, M_);
  return f * base_->value(z) + (1.0 - f) * r / R_;
}

void TruncatedBase::gradient(const double* z, double* g) const {
  const int M = dim();
  double r = 0.0;
  for (int i = 0; i < M; ++i) r += z[i] * z[i];
  r = std::sqrt(r);
  if (r <= M_) {
    base_->gradient(z, g);
    return;
  }
  if (r >= 2.0 * M_) {
    for (int i = 0; i < M; ++i) g[i] = z[i] / (r * R_);
    return;
  }
  const double f = cutoff(r, M_), f1 = cutoff_d1(r, M_);
  const double B = base_->value(z), L = r / R_;
  std::vector<double> gb(M);
  base_->gradient(z, gb.data());
  for (int i = 0; i < M; ++i) {
    const double e = z[i] / r;
    g[i] = f1 * e * (B - L) + f * gb[i] + (1.0 - f) * e / R_;
  }
}

void TruncatedBase::hessian(const double* z, double* H) const {
  const int M = dim();
  double r = 0.0;
  for (int i = 0; i < M; ++i) r += z[i] * z[i];
  r = std::sqrt(r);
  if (r <= M_) {
    base_->hessian(z, H);
    return;
  }
  std::vector<double> e(M);
  for (int i = 0; i < M; ++i) e[i] = z[i] / r;
  auto P = [&](int i, int j) { return (i == j ? 1.0 : 0.0) - e[i] * e[j]; };
  if (r >= 2.0 * M_) {
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < M; ++j) H[i * M + j] = P(i, j) / (r * R_);
    return;
  }
  const double f = cutoff(r, M_), f1 = cutoff_d1(r, M_), f2 = cutoff_d2(r, M_);
  const double B = base_->value(z), L = r / R_;
  std::vector<double> gb(M), hb(static_cast<std::size_t>(M) * M);
  base_->gradient(z, gb.data());
  base_->hessian(z, hb.data());
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < M; ++j) {
      const double dgi = gb[i] - e[i] / R_, dgj = gb[j] - e[j] / R_;
      H[i * M + j] = (f2 * e[i] * e[j] + f1 * P(i, j) / r) * (B - L) + f1 * (e[i] * dgj + dgi * e[j]) +
                     f * hb[i * M + j] + (1.0 - f) * P(i, j) / (r * R_);
    }
}

double TruncatedBase::bound(double S) const {
  return std::max(base_->bound(std::min(S, 2.0 * M_)), S / R_);
}

// ---------------------------------------------------------------- CellBox

double CellBox::volume() const {
  double v = 1.0;
  for (std::size_t i = 0; i < lo.size(); ++i) v *= std::max(0.0, hi[i] - lo[i]);
  return v;
}

bool CellBox::contains(const double* t) const {
  for (std::size_t i = 0; i < lo.size(); ++i)
    if (!(t[i] >= lo[i] && t[i] < hi[i])) return false;
  return true;
}

// ---------------------------------------------------------------- TwoScalePotential

TwoScalePotential::TwoScalePotential(int N, std::vector<BasePtr> bases, WeightFn weights, Lattice cell1,
                                     Lattice cell2, Vec a, Vec b, double growth_R)
    : N_(N),
      M_(static_cast<int>(a.size())),
      bases_(std::move(bases)),
      weights_(std::move(weights)),
      cell1_(std::move(cell1)),
      cell2_(std::move(cell2)),
      a_(std::move(a)),
      b_(std::move(b)),
      growth_R_(growth_R) {
  if (N_ < 1) throw std::invalid_argument("potential: spatial dimension must be >= 1");
  if (bases_.empty() || static_cast<int>(bases_.size()) > kMaxComponents)
    throw std::invalid_argument("potential: bad component count");
  if (!weights_) throw std::invalid_argument("potential: missing weight function");
  if (cell1_.dim() != N_ || cell2_.dim() != N_) throw std::invalid_argument("potential: lattice dimension mismatch");
  if (a_.size() != b_.size()) throw std::invalid_argument("potential: well dimension mismatch");
  for (const auto& b_k : bases_)
    if (!b_k || b_k->dim() != M_) throw std::invalid_argument("potential: base dimension mismatch");
  const std::string key = bases_[0]->shape_key();
  bool common = !key.empty();
  for (const auto& b_k : bases_) common = common && b_k->shape_key() == key;
  if (common) {
    shape_ = bases_[0]->unit_shape();
    for (const auto& b_k : bases_) scales_.push_back(b_k->scale());
  }
}

void TwoScalePotential::to_cell(const Lattice& L, const double* y, double* t) const {
  if (L.is_unit()) {
    for (int i = 0; i < N_; ++i) t[i] = y[i] - std::floor(y[i]);
    return;
  }
  const Eigen::Map<const Eigen::VectorXd> yv(y, N_);
  const Eigen::VectorXd c = L.basis().inverse() * yv;
  for (int i = 0; i < N_; ++i) t[i] = c[i] - std::floor(c[i]);
}

double TwoScalePotential::value(const double* y1, const double* y2, const double* z) const {
  double t1[8], t2[8];
  if (N_ > 8) throw std::invalid_argument("potential: N > 8 unsupported");
  to_cell(cell1_, y1, t1);
  to_cell(cell2_, y2, t2);
  return value_cell(t1, t2, z);
}

double TwoScalePotential::value_cell(const double* t1, const double* t2, const double* z) const {
  double w[kMaxComponents];
  weights_(t1, t2, w);
  double v = 0.0;
  for (std::size_t k = 0; k < bases_.size(); ++k)
    if (w[k] != 0.0) v += w[k] * bases_[k]->value(z);
  return v;
}

void TwoScalePotential::gradient_cell(const double* t1, const double* t2, const double* z, double* g) const {
  double w[kMaxComponents];
  weights_(t1, t2, w);
  std::fill(g, g + M_, 0.0);
  std::vector<double> gk(M_);
  for (std::size_t k = 0; k < bases_.size(); ++k) {
    if (w[k] == 0.0) continue;
    bases_[k]->gradient(z, gk.data());
    for (int i = 0; i < M_; ++i) g[i] += w[k] * gk[i];
  }
}

void TwoScalePotential::hessian_cell(const double* t1, const double* t2, const double* z, double* H) const {
  double w[kMaxComponents];
  weights_(t1, t2, w);
  const int MM = M_ * M_;
  std::fill(H, H + MM, 0.0);
  std::vector<double> hk(MM);
  for (std::size_t k = 0; k < bases_.size(); ++k) {
    if (w[k] == 0.0) continue;
    bases_[k]->hessian(z, hk.data());
    for (int i = 0; i < MM; ++i) H[i] += w[k] * hk[i];
  }
}

double TwoScalePotential::coefficient(const double* t1, const double* t2) const {
  double w[kMaxComponents];
  weights_(t1, t2, w);
  double c = 0.0;
  for (std::size_t k = 0; k < scales_.size(); ++k) c += w[k] * scales_[k];
  return c;
}

double TwoScalePotential::bound(double S) const {
  double m = 0.0;
  for (const auto& b_k : bases_) m = std::max(m, b_k->bound(S));
  return m;
}

double TwoScalePotential::lower_envelope(const double* z) const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& b_k : bases_) m = std::min(m, b_k->value(z));
  return std::max(0.0, m);
}

// ---------------------------------------------------------------- construction

CellBox centered_box(int N, double theta, int resolution, bool* snapped) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("volume fraction outside [0,1]");
  CellBox box;
  box.lo.assign(N, 0.5);
  box.hi.assign(N, 0.5);
  if (snapped) *snapped = true;
  if (theta == 0.0) return box;
  const double R = resolution;
  const double target = theta * std::pow(R, N);
  const double nearest = std::round(target);
  std::vector<int> best;
  if (resolution >= 1 && std::abs(target - nearest) < 1e-9 * std::max(1.0, target) && N <= 3) {
    const long long want = static_cast<long long>(nearest);
    double best_aspect = std::numeric_limits<double>::infinity();
    std::vector<int> m(N, 1);
    // Enumerate per-axis node counts with product equal to want, preferring even margins and low aspect.
    std::function<void(int, long long)> rec = [&](int axis, long long rem) {
      if (axis == N - 1) {
        if (rem < 1 || rem > resolution) return;
        m[axis] = static_cast<int>(rem);
        int lo = *std::min_element(m.begin(), m.end()), hi = *std::max_element(m.begin(), m.end());
        bool even = true;
        for (int v : m) even = even && ((resolution - v) % 2 == 0);
        const double aspect = static_cast<double>(hi) / lo + (even ? 0.0 : 1e6);
        if (aspect < best_aspect) {
          best_aspect = aspect;
          best = m;
        }
        return;
      }
      for (int v = 1; v <= resolution; ++v)
        if (rem % v == 0) {
          m[axis] = v;
          rec(axis + 1, rem / v);
        }
    };
    rec(0, want);
    if (!best.empty()) {
      bool even = true;
      for (int v : best) even = even && ((resolution - v) % 2 == 0);
      if (!even) best.clear();
    }
  }
  if (!best.empty()) {
    for (int i = 0; i < N; ++i) {
      const int margin = (resolution - best[i]) / 2;
      box.lo[i] = static_cast<double>(margin) / R;
      box.hi[i] = static_cast<double>(margin + best[i]) / R;
    }
    return box;
  }
  if (snapped) *snapped = false;
  const double side = std::pow(theta, 1.0 / N);
  for (int i = 0; i < N; ++i) {
    box.lo[i] = 0.5 - 0.5 * side;
    box.hi[i] = 0.5 + 0.5 * side;
  }
  return box;
}

namespace {

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Indicator of a box, optionally replaced by a linear ramp of width w centred on each face.
double box_weight(const CellBox& box, const double* t, double w) {
  const std::size_t N = box.lo.size();
  if (w <= 0.0) return box.contains(t) ? 1.0 : 0.0;
  double s = 1.0;
  for (std::size_t i = 0; i < N; ++i) {
    if (box.hi[i] - box.lo[i] <= 0.0) return 0.0;
    if (box.lo[i] <= 0.0 && box.hi[i] >= 1.0) continue;
    s *= clamp01((t[i] - box.lo[i]) / w + 0.5) * clamp01((box.hi[i] - t[i]) / w + 0.5);
    if (s == 0.0) return 0.0;
  }
  return s;
}

}  // namespace

double estimate_growth_R(const std::function<double(const double*)>& f, int M) {
  std::vector<Vec> dirs;
  if (M == 1) {
    dirs.push_back(Vec::Constant(1, 1.0));
    dirs.push_back(Vec::Constant(1, -1.0));
  } else {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd;
    for (int k = 0; k < 32; ++k) {
      Vec d(M);
      for (int i = 0; i < M; ++i) d[i] = nd(rng);
      dirs.push_back(d / d.norm());
    }
    for (int i = 0; i < M; ++i) {
      Vec d = Vec::Zero(M);
      d[i] = 1.0;
      dirs.push_back(d);
      dirs.push_back(-d);
    }
  }
  for (double R = 1.0; R <= 1024.0; R *= 1.25) {
    bool ok = true;
    for (const auto& d : dirs) {
      for (int k = 0; k <= 64 && ok; ++k) {
        const double r = R * std::pow(64.0, k / 64.0);
        const Vec z = r * d;
        if (f(z.data()) < r / R) ok = false;
      }
      if (!ok) break;
    }
    if (ok) return R;
  }
  throw std::invalid_argument("potential violates the linear growth bound on every tested radius");
}

PotentialPtr make_composite(int N, double theta1, double theta2, BasePtr W1, BasePtr W2, BasePtr W3,
                            const CompositeOptions& opts, CompositeLayout* layout) {
  if (!(theta1 >= 0.0 && theta1 <= 1.0) || !(theta2 >= 0.0 && theta2 <= 1.0))
    throw std::invalid_argument("composite: volume fraction outside [0,1]");
  if (!W1 || !W2 || !W3) throw std::invalid_argument("composite: null base");
  Vec a1, b1, a, b;
  if (!W1->wells(a1, b1)) throw std::invalid_argument("composite: base without declared wells");
  for (const auto& w : {W2, W3}) {
    if (!w->wells(a, b) || a.size() != a1.size() || (a - a1).norm() > 1e-14 || (b - b1).norm() > 1e-14)
      throw std::invalid_argument("composite: mismatched wells across bases");
  }
  bool s1 = false, s2 = false;
  CellBox I1 = centered_box(N, theta1, opts.resolution, &s1);
  CellBox I2 = centered_box(N, theta2, opts.resolution, &s2);
  if (layout) {
    layout->inclusion1 = I1;
    layout->inclusion2 = I2;
    layout->theta1_actual = I1.volume();
    layout->theta2_actual = I2.volume();
    layout->snapped1 = s1;
    layout->snapped2 = s2;
  }
  const double ramp = opts.ramp_cells > 0.0 ? opts.ramp_cells / opts.resolution : 0.0;
  auto weights = [I1, I2, ramp](const double* t1, const double* t2, double* w) {
    const double x1 = box_weight(I1, t1, ramp);
    const double x2 = x1 == 0.0 ? 0.0 : box_weight(I2, t2, ramp);
    w[0] = x1 * x2;
    w[1] = x1 * (1.0 - x2);
    w[2] = 1.0 - x1;
  };
  std::vector<BasePtr> bases{W1, W2, W3};
  double R = opts.growth_R;
  if (R <= 0.0) {
    auto env = [&bases](const double* z) {
      double m = std::numeric_limits<double>::infinity();
      for (const auto& b_k : bases) m = std::min(m, b_k->value(z));
      return m;
    };
    R = estimate_growth_R(env, static_cast<int>(a1.size()));
  }
  auto p = std::make_shared<TwoScalePotential>(N, bases, weights, Lattice::unit(N), Lattice::unit(N), a1, b1, R);
  p->name = "composite";
  return p;
}

PotentialPtr make_uniform(int N, BasePtr base, double growth_R) {
  if (!base) throw std::invalid_argument("uniform: null base");
  Vec a, b;
  if (!base->wells(a, b)) throw std::invalid_argument("uniform: base without declared wells");
  double R = growth_R;
  if (R <= 0.0) R = estimate_growth_R([&base](const double* z) { return base->value(z); }, base->dim());
  auto p = std::make_shared<TwoScalePotential>(
      N, std::vector<BasePtr>{base}, [](const double*, const double*, double* w) { w[0] = 1.0; }, Lattice::unit(N),
      Lattice::unit(N), a, b, R);
  p->name = "uniform";
  return p;
}

// ---------------------------------------------------------------- homogenization

namespace {

// Calls f(t) for every midpoint node t of [0,1)^N with R nodes per axis.
template <class F>
void for_each_node(int N, int R, F&& f) {
  std::vector<int> idx(N, 0);
  std::vector<double> t(N);
  while (true) {
    for (int i = 0; i < N; ++i) t[i] = (idx[i] + 0.5) / R;
    f(t.data());
    int ax = N - 1;
    while (ax >= 0 && ++idx[ax] == R) idx[ax--] = 0;
    if (ax < 0) break;
  }
}

}  // namespace

double homogenize(const TwoScalePotential& p, const Vec& z, int R1, int R2) {
  if (R1 < 1 || R2 < 1) throw std::invalid_argument("homogenize: resolution must be positive");
  if (z.size() != p.M()) throw std::invalid_argument("homogenize: z has wrong dimension");
  const int N = p.N();
  const Eigen::MatrixXd B1 = p.cell1().basis(), B2 = p.cell2().basis();
  std::vector<double> y1(N), y2(N);
  // Kahan-compensated sum of W over the node product set, in physical cell variables.
  double sum = 0.0, comp = 0.0;
  long long count = 0;
  for_each_node(N, R1, [&](const double* t1) {
    const Eigen::VectorXd Y1 = B1 * Eigen::Map<const Eigen::VectorXd>(t1, N);
    for (int i = 0; i < N; ++i) y1[i] = Y1[i];
    for_each_node(N, R2, [&](const double* t2) {
      const Eigen::VectorXd Y2 = B2 * Eigen::Map<const Eigen::VectorXd>(t2, N);
      for (int i = 0; i < N; ++i) y2[i] = Y2[i];
      const double v = p.value(y1.data(), y2.data(), z.data()) - comp;
      const double s = sum + v;
      comp = (s - sum) - v;
      sum = s;
      ++count;
    });
  });
  return sum / static_cast<double>(count);
}

HomogenizedPotential::HomogenizedPotential(PotentialPtr p, int R1, int R2) : source_(std::move(p)), R1_(R1), R2_(R2) {
  if (!source_) throw std::invalid_argument("homogenized: null potential");
  if (R1 < 1 || R2 < 1) throw std::invalid_argument("homogenized: resolution must be positive");
  const int K = source_->components();
  const int N = source_->N();
  mean_w_.assign(K, 0.0);
  std::vector<double> w(K);
  long long count = 0;
  for_each_node(N, R1, [&](const double* t1) {
    for_each_node(N, R2, [&](const double* t2) {
      source_->weights(t1, t2, w.data());
      for (int k = 0; k < K; ++k) mean_w_[k] += w[k];
      ++count;
    });
  });
  for (double& m : mean_w_) m /= static_cast<double>(count);
}

double HomogenizedPotential::operator()(const double* z) const {
  double v = 0.0;
  for (int k = 0; k < source_->components(); ++k)
    if (mean_w_[k] != 0.0) v += mean_w_[k] * source_->base(k).value(z);
  return v;
}

void HomogenizedPotential::gradient(const double* z, double* g) const {
  const int M = source_->M();
  std::fill(g, g + M, 0.0);
  std::vector<double> gk(M);
  for (int k = 0; k < source_->components(); ++k) {
    if (mean_w_[k] == 0.0) continue;
    source_->base(k).gradient(z, gk.data());
    for (int i = 0; i < M; ++i) g[i] += mean_w_[k] * gk[i];
  }
}

// ---------------------------------------------------------------- truncation

PotentialPtr truncate(const PotentialPtr& p, double M, double R) {
  if (!p) throw std::invalid_argument("truncate: null potential");
  if (!(R > 0.0) || !(M > R)) throw std::invalid_argument("truncate: requires M > R > 0");
  std::vector<BasePtr> bases;
  for (const auto& b_k : p->bases()) bases.push_back(std::make_shared<TruncatedBase>(b_k, M, R));
  auto src = p;
  auto q = std::make_shared<TwoScalePotential>(
      p->N(), bases, [src](const double* t1, const double* t2, double* w) { src->weights(t1, t2, w); },
      p->cell1(), p->cell2(), p->a(), p->b(), R);
  q->name = p->name + "+truncated";
  return q;
}

// ---------------------------------------------------------------- hypotheses

bool HypothesisReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const HypothesisCheck& c) { return c.pass; });
}

const HypothesisCheck& HypothesisReport::get(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return c;
  throw std::out_of_range("no hypothesis entry " + name);
}

HypothesisReport validate_hypotheses(const TwoScalePotential& p, int sample_budget, unsigned seed) {
  if (sample_budget < 1) throw std::invalid_argument("validate_hypotheses: budget must be >= 1");
  const int N = p.N(), M = p.M();
  std::mt19937_64 rng(seed);
  // Dyadic cell samples keep lattice shifts exact in floating point.
  std::uniform_int_distribution<long long> dy(0, (1LL << 20) - 1);
  std::uniform_int_distribution<int> shift(-1000, 1000);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  auto cell_sample = [&](const Lattice& L) {
    Eigen::VectorXd t(N);
    for (int i = 0; i < N; ++i) t[i] = (static_cast<double>(dy(rng)) + 0.5) / static_cast<double>(1LL << 20);
    return Eigen::VectorXd(L.basis() * t);
  };
  const double span = std::max(p.a().norm(), p.b().norm()) + 1.0;
  auto ball_sample = [&](double r_lo, double r_hi) {
    Vec d(M);
    for (int i = 0; i < M; ++i) d[i] = nd(rng);
    d /= d.norm();
    const double r = r_lo + (r_hi - r_lo) * ud(rng);
    return Vec(r * d);
  };

  HypothesisReport rep;

  {  // periodicity in both cell variables
    HypothesisCheck c{"H1", true, 0.0, ""};
    for (int s = 0; s < sample_budget; ++s) {
      const Eigen::VectorXd y1 = cell_sample(p.cell1()), y2 = cell_sample(p.cell2());
      const Vec z = ball_sample(0.0, 2.0 * span);
      Eigen::VectorXi k1(N), k2(N);
      for (int i = 0; i < N; ++i) {
        k1[i] = shift(rng);
        k2[i] = shift(rng);
      }
      const Eigen::VectorXd y1s = y1 + p.cell1().point(k1), y2s = y2 + p.cell2().point(k2);
      const double v0 = p.value(y1.data(), y2.data(), z.data());
      const double d1 = std::abs(p.value(y1s.data(), y2.data(), z.data()) - v0);
      const double d2 = std::abs(p.value(y1.data(), y2s.data(), z.data()) - v0);
      const double d = std::max(d1, d2);
      if (d > c.worst) {
        c.worst = d;
        c.witness = "y1=" + fmt_vec(y1.data(), N) + " y2=" + fmt_vec(y2.data(), N) + " z=" + fmt_vec(z.data(), M);
      }
    }
    const double tol = (p.cell1().is_unit() && p.cell2().is_unit()) ? 0.0 : 1e-12 * p.bound(2.0 * span);
    c.pass = c.worst <= tol;
    rep.checks.push_back(c);
  }

  {  // zero set is exactly {a, b}
    HypothesisCheck c{"H2", true, 0.0, ""};
    for (int s = 0; s < sample_budget; ++s) {
      const Eigen::VectorXd y1 = cell_sample(p.cell1()), y2 = cell_sample(p.cell2());
      for (const Vec* w : {&p.a(), &p.b()}) {
        const double v = p.value(y1.data(), y2.data(), w->data());
        if (std::abs(v) > c.worst) {
          c.worst = std::abs(v);
          c.witness = "W(" + fmt_vec(w->data(), M) + ")=" + std::to_string(v) + " at y1=" + fmt_vec(y1.data(), N);
        }
      }
    }
    if (c.worst > 1e-14) c.pass = false;
    // Search for spurious zeros: descend from the lowest samples away from the wells.
    const int ycount = std::max(1, std::min(sample_budget, 8));
    const double sep = 0.5 * (p.b() - p.a()).norm();
    for (int s = 0; s < ycount && c.pass; ++s) {
      double t1[8], t2[8];
      const Eigen::VectorXd y1 = cell_sample(p.cell1()), y2 = cell_sample(p.cell2());
      p.to_cell(p.cell1(), y1.data(), t1);
      p.to_cell(p.cell2(), y2.data(), t2);
      std::vector<std::pair<double, Vec>> pts;
      for (int k = 0; k < sample_budget; ++k) {
        Vec z = ball_sample(0.0, span);
        if (k % 2 == 0) z = 0.5 * (p.a() + p.b()) + (z / span) * sep * 1.5;
        const double da = (z - p.a()).norm(), db = (z - p.b()).norm();
        if (std::min(da, db) < 0.05 * sep) continue;
        pts.emplace_back(p.value_cell(t1, t2, z.data()), z);
      }
      std::sort(pts.begin(), pts.end(), [](const auto& l, const auto& r) { return l.first < r.first; });
      const int starts = std::min<int>(8, static_cast<int>(pts.size()));
      std::vector<double> g(M);
      for (int k = 0; k < starts; ++k) {
        Vec z = pts[k].second;
        double f = pts[k].first, step = 0.1;
        for (int it = 0; it < 400 && f > 1e-15; ++it) {
          p.gradient_cell(t1, t2, z.data(), g.data());
          double gn = 0.0;
          for (double v : g) gn += v * v;
          gn = std::sqrt(gn);
          if (gn == 0.0) break;
          bool moved = false;
          while (step > 1e-14) {
            Vec zt = z;
            for (int i = 0; i < M; ++i) zt[i] -= step * g[i] / gn;
            const double ft = p.value_cell(t1, t2, zt.data());
            if (ft < f) {
              z = zt;
              f = ft;
              step *= 2.0;
              moved = true;
              break;
            }
            step *= 0.5;
          }
          if (!moved) break;
        }
        const double dist = std::min((z - p.a()).norm(), (z - p.b()).norm());
        if (f < 1e-10 && dist > 1e-3 * std::max(1.0, sep)) {
          c.pass = false;
          c.worst = std::max(c.worst, dist);
          c.witness = "spurious zero near z=" + fmt_vec(z.data(), M) + " W=" + std::to_string(f);
          break;
        }
      }
    }
    rep.checks.push_back(c);
  }

  {  // linear growth
    HypothesisCheck c{"H3", true, 0.0, ""};
    const double R = p.growth_R();
    for (int s = 0; s < sample_budget; ++s) {
      const Eigen::VectorXd y1 = cell_sample(p.cell1()), y2 = cell_sample(p.cell2());
      const Vec z = ball_sample(R, 4.0 * R);
      const double lin = z.norm() / R;
      const double gap = lin - std::min(p.value(y1.data(), y2.data(), z.data()), p.lower_envelope(z.data()));
      if (gap > c.worst) {
        c.worst = gap;
        c.witness = "z=" + fmt_vec(z.data(), M);
      }
    }
    c.pass = c.worst <= 0.0;
    rep.checks.push_back(c);
  }

  {  // local boundedness
    HypothesisCheck c{"H4", true, 0.0, ""};
    for (double S : {0.5 * span, span, 2.0 * span, 4.0 * span}) {
      const double CS = p.bound(S);
      for (int s = 0; s < sample_budget; ++s) {
        const Eigen::VectorXd y1 = cell_sample(p.cell1()), y2 = cell_sample(p.cell2());
        const Vec z = ball_sample(0.0, S);
        const double gap = p.value(y1.data(), y2.data(), z.data()) - CS;
        if (gap > c.worst) {
          c.worst = gap;
          c.witness = "S=" + std::to_string(S) + " z=" + fmt_vec(z.data(), M);
        }
      }
    }
    c.pass = c.worst <= 0.0;
    rep.checks.push_back(c);
  }

  {  // uniform lower envelope
    HypothesisCheck c{"H5", true, 0.0, ""};
    for (int s = 0; s < sample_budget; ++s) {
      const Eigen::VectorXd y1 = cell_sample(p.cell1()), y2 = cell_sample(p.cell2());
      const Vec z = ball_sample(0.0, 2.0 * span);
      const double w1 = p.lower_envelope(z.data());
      const double gap = std::max(w1 - p.value(y1.data(), y2.data(), z.data()), -w1);
      if (gap > c.worst) {
        c.worst = gap;
        c.witness = "z=" + fmt_vec(z.data(), M);
      }
    }
    c.pass = c.worst <= 1e-14 * std::max(1.0, p.bound(2.0 * span));
    rep.checks.push_back(c);
  }
  return rep;
}

}  // namespace twoscale
