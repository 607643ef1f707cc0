#include "twoscale/energy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <stdexcept>

#include "twoscale/parallel.hpp"

namespace twoscale {

using Eigen::VectorXd;

namespace {

constexpr int kMaxM = 8;
constexpr int kMaxBases = 16;
constexpr std::int64_t kChunk = 1 << 15;

std::int64_t positive_mod(std::int64_t a, std::int64_t m) { return ((a % m) + m) % m; }

// Integer ratio scale/h when it is one up to rounding, else 0.
std::int64_t integer_ratio(double scale, double h) {
  const double r = scale / h;
  const double n = std::round(r);
  return (n >= 1.0 && std::abs(r - n) <= 1e-9 * n) ? static_cast<std::int64_t>(n) : 0;
}

// Ordered reduction over fixed chunks so the result does not depend on the worker count.
template <class F>
double chunked_sum(std::int64_t n, F&& body) {
  const std::int64_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(static_cast<std::size_t>(chunks), 0.0);
  parallel_for(chunks, [&](std::int64_t c) {
    CompensatedSum s;
    body(c * kChunk, std::min(n, (c + 1) * kChunk), s);
    partial[c] = s.value();
  });
  CompensatedSum total;
  for (double v : partial) total.add(v);
  return total.value();
}

void check_inputs(const GridField& u, const Scales& s, const TwoScalePotential& p, double resolve) {
  s.validate();
  if (u.box.N != p.N()) throw std::invalid_argument("energy: grid dimension differs from the potential");
  if (u.M != p.M()) throw std::invalid_argument("energy: field components differ from the potential");
  if (u.M > kMaxM) throw std::invalid_argument("energy: at most 8 components supported");
  if (u.box.h > s.eta / resolve * (1.0 + 1e-12)) throw std::invalid_argument("energy: grid does not resolve eta");
  if (!u.all_finite()) throw std::invalid_argument("energy: non-finite field");
}

// Axis coordinate of a linear index.
inline std::int64_t coord(const GridBox& b, std::int64_t i, int ax) { return (i / b.stride(ax)) % b.count[ax]; }

double potential_sum(const FieldPotential& fp, const GridField& u, std::int64_t lo, std::int64_t hi, CompensatedSum& s) {
  for (std::int64_t i = lo; i < hi; ++i) s.add(fp.value(i, u.at(i)));
  return s.value();
}

double gradient_sum(const GridField& u, std::int64_t lo, std::int64_t hi, CompensatedSum& s) {
  const GridBox& b = u.box;
  const int M = u.M;
  for (std::int64_t i = lo; i < hi; ++i) {
    const double* ui = u.at(i);
    for (int ax = 0; ax < b.N; ++ax) {
      if (coord(b, i, ax) + 1 >= b.count[ax]) continue;
      const double* uj = u.at(i + b.stride(ax));
      double q = 0.0;
      for (int c = 0; c < M; ++c) q += (uj[c] - ui[c]) * (uj[c] - ui[c]);
      s.add(q);
    }
  }
  return s.value();
}

double total_energy(const FieldPotential& fp, const GridField& u, const Scales& s) {
  const double vol = u.box.cell_volume(), h2 = u.box.h * u.box.h;
  const double pot = chunked_sum(u.cells(), [&](std::int64_t lo, std::int64_t hi, CompensatedSum& acc) { potential_sum(fp, u, lo, hi, acc); });
  const double grad = chunked_sum(u.cells(), [&](std::int64_t lo, std::int64_t hi, CompensatedSum& acc) { gradient_sum(u, lo, hi, acc); });
  return pot * vol / s.eps + s.eps * grad * vol / h2;
}

// y = (kappa/eps) x - 2 eps Lap_h x, componentwise with Neumann boundary.
void apply_preconditioner(const GridBox& b, int M, double diag, double coupling, const std::vector<double>& x,
                          std::vector<double>& y) {
  parallel_for((b.size() + kChunk - 1) / kChunk, [&](std::int64_t c) {
    const std::int64_t lo = c * kChunk, hi = std::min(b.size(), lo + kChunk);
    for (std::int64_t i = lo; i < hi; ++i)
      for (int k = 0; k < M; ++k) {
        const double xi = x[i * M + k];
        double v = diag * xi;
        for (int ax = 0; ax < b.N; ++ax) {
          const std::int64_t ci = coord(b, i, ax), st = b.stride(ax);
          if (ci > 0) v += coupling * (xi - x[(i - st) * M + k]);
          if (ci + 1 < b.count[ax]) v += coupling * (xi - x[(i + st) * M + k]);
        }
        y[i * M + k] = v;
      }
  });
}

// Tridiagonal solve with constant off-diagonal `off` and diagonal d (Thomas algorithm).
void thomas(const std::vector<double>& d, double off, const double* rhs, std::int64_t stride, double* x, std::int64_t n,
            std::vector<double>& cp) {
  cp.resize(static_cast<std::size_t>(n));
  double denom = d[0];
  cp[0] = off / denom;
  x[0] = rhs[0] / denom;
  for (std::int64_t i = 1; i < n; ++i) {
    denom = d[i] - off * cp[i - 1];
    cp[i] = off / denom;
    x[i * stride] = (rhs[i * stride] - off * x[(i - 1) * stride]) / denom;
  }
  for (std::int64_t i = n - 2; i >= 0; --i) x[i * stride] -= cp[i] * x[(i + 1) * stride];
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  CompensatedSum s;
  for (std::size_t i = 0; i < a.size(); ++i) s.add(a[i] * b[i]);
  return s.value();
}

}  // namespace

void Scales::validate() const {
  if (!(eps > 0.0 && delta > 0.0 && eta > 0.0)) throw std::invalid_argument("scales must be positive");
}

FieldPotential::FieldPotential(const TwoScalePotential& p, const GridBox& box, double delta, double eta)
    : p_(&p), box_(box), delta_(delta), eta_(eta) {
  if (box.N != p.N()) throw std::invalid_argument("FieldPotential: dimension mismatch");
  if (p.N() > 8) throw std::invalid_argument("FieldPotential: N > 8 unsupported");
  if (p.components() > kMaxBases) throw std::invalid_argument("FieldPotential: too many components");
  if (p.cell1().is_unit() && p.cell2().is_unit()) {
    k1_ = integer_ratio(delta, box.h);
    k2_ = integer_ratio(eta, box.h);
    aligned_ = k1_ > 0 && k2_ > 0;
  }
}

void FieldPotential::cell_coords(std::int64_t cell, double* t1, double* t2) const {
  for (int ax = 0; ax < box_.N; ++ax) {
    const std::int64_t g = box_.origin[ax] + coord(box_, cell, ax);
    if (aligned_) {
      t1[ax] = (static_cast<double>(positive_mod(g, k1_)) + 0.5) / static_cast<double>(k1_);
      t2[ax] = (static_cast<double>(positive_mod(g, k2_)) + 0.5) / static_cast<double>(k2_);
    } else {
      t1[ax] = (static_cast<double>(g) + 0.5) * box_.h / delta_;
      t2[ax] = (static_cast<double>(g) + 0.5) * box_.h / eta_;
    }
  }
  if (!aligned_) {
    double y1[8], y2[8];
    std::copy(t1, t1 + box_.N, y1);
    std::copy(t2, t2 + box_.N, y2);
    p_->to_cell(p_->cell1(), y1, t1);
    p_->to_cell(p_->cell2(), y2, t2);
  }
}

double FieldPotential::value(std::int64_t cell, const double* z) const {
  double t1[8], t2[8];
  cell_coords(cell, t1, t2);
  return p_->value_cell(t1, t2, z);
}

void FieldPotential::gradient(std::int64_t cell, const double* z, double* g) const {
  double t1[8], t2[8], w[kMaxBases], gk[kMaxM];
  cell_coords(cell, t1, t2);
  p_->weights(t1, t2, w);
  const int M = p_->M();
  std::fill(g, g + M, 0.0);
  for (int k = 0; k < p_->components(); ++k) {
    if (w[k] == 0.0) continue;
    p_->base(k).gradient(z, gk);
    for (int c = 0; c < M; ++c) g[c] += w[k] * gk[c];
  }
}

void FieldPotential::hessian(std::int64_t cell, const double* z, double* H) const {
  double t1[8], t2[8], w[kMaxBases], hk[kMaxM * kMaxM];
  cell_coords(cell, t1, t2);
  p_->weights(t1, t2, w);
  const int MM = p_->M() * p_->M();
  std::fill(H, H + MM, 0.0);
  for (int k = 0; k < p_->components(); ++k) {
    if (w[k] == 0.0) continue;
    p_->base(k).hessian(z, hk);
    for (int c = 0; c < MM; ++c) H[c] += w[k] * hk[c];
  }
}

EnergyBreakdown energy(const GridField& u, const Scales& s, const TwoScalePotential& p, const RegionLabels* regions,
                       double resolve) {
  check_inputs(u, s, p, resolve);
  FieldPotential fp(p, u.box, s.delta, s.eta);
  const double vol = u.box.cell_volume(), h2 = u.box.h * u.box.h;
  EnergyBreakdown e;
  e.potential = chunked_sum(u.cells(), [&](std::int64_t lo, std::int64_t hi, CompensatedSum& acc) { potential_sum(fp, u, lo, hi, acc); }) *
                vol / s.eps;
  e.gradient = s.eps * vol / h2 *
               chunked_sum(u.cells(), [&](std::int64_t lo, std::int64_t hi, CompensatedSum& acc) { gradient_sum(u, lo, hi, acc); });
  e.total = e.potential + e.gradient;
  if (regions) {
    if (static_cast<std::int64_t>(regions->label.size()) != u.cells()) throw std::invalid_argument("energy: region labels size mismatch");
    std::vector<CompensatedSum> pot(regions->count), grad(regions->count);
    for (std::int64_t i = 0; i < u.cells(); ++i) {
      const int r = regions->label[i];
      if (r < 0 || r >= regions->count) throw std::invalid_argument("energy: region label out of range");
      pot[r].add(fp.value(i, u.at(i)));
      CompensatedSum g;
      gradient_sum(u, i, i + 1, g);
      grad[r].add(g.value());
    }
    for (int r = 0; r < regions->count; ++r) {
      e.region_potential.push_back(pot[r].value() * vol / s.eps);
      e.region_gradient.push_back(grad[r].value() * s.eps * vol / h2);
    }
  }
  return e;
}

GridField energy_gradient(const GridField& u, const Scales& s, const TwoScalePotential& p, double resolve) {
  check_inputs(u, s, p, resolve);
  FieldPotential fp(p, u.box, s.delta, s.eta);
  GridField g(u.box, u.M);
  g.a = u.a;
  g.b = u.b;
  const GridBox& b = u.box;
  const int M = u.M;
  const double coupling = 2.0 * s.eps / (b.h * b.h);
  parallel_for((b.size() + kChunk - 1) / kChunk, [&](std::int64_t c) {
    const std::int64_t lo = c * kChunk, hi = std::min(b.size(), lo + kChunk);
    double gw[kMaxM];
    for (std::int64_t i = lo; i < hi; ++i) {
      const double* ui = u.at(i);
      double* gi = g.at(i);
      fp.gradient(i, ui, gw);
      for (int k = 0; k < M; ++k) gi[k] = gw[k] / s.eps;
      for (int ax = 0; ax < b.N; ++ax) {
        const std::int64_t ci = coord(b, i, ax), st = b.stride(ax);
        if (ci > 0)
          for (int k = 0; k < M; ++k) gi[k] += coupling * (ui[k] - u.at(i - st)[k]);
        if (ci + 1 < b.count[ax])
          for (int k = 0; k < M; ++k) gi[k] += coupling * (ui[k] - u.at(i + st)[k]);
      }
    }
  });
  return g;
}

void MinimizeOptions::validate() const {
  if (!(tol > 0.0)) throw std::invalid_argument("minimize: stop tolerance must be positive");
  if (max_iter < 0 || stall < 1) throw std::invalid_argument("minimize: bad iteration limits");
  if (mass && !(*mass > 0.0 && *mass < 1.0)) throw std::invalid_argument("minimize: mass fraction must lie in (0, 1)");
  if (fixed_step < 0.0) throw std::invalid_argument("minimize: negative step");
}

GridField project_mass(const GridField& u, double m, const VectorXd& a, const VectorXd& b) {
  if (a.size() != u.M || b.size() != u.M) throw std::invalid_argument("project_mass: well dimension mismatch");
  const VectorXd shift = (m * a + (1.0 - m) * b) - u.mean();
  GridField out = u;
  const double scale = 1.0 + std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  // A shift below rounding level would only perturb last bits; leaving it keeps projection idempotent.
  if (shift.lpNorm<Eigen::Infinity>() <= 1e-15 * scale) return out;
  for (std::int64_t i = 0; i < u.cells(); ++i)
    for (int c = 0; c < u.M; ++c) out.at(i)[c] += shift[c];
  return out;
}

MinimizeResult minimize(const GridField& u0, const Scales& s, const TwoScalePotential& p, const MinimizeOptions& opts) {
  opts.validate();
  check_inputs(u0, s, p, opts.resolve);
  const GridBox& box = u0.box;
  const int M = u0.M;
  const std::int64_t n = box.size() * M;
  const double vol = box.cell_volume();
  FieldPotential fp(p, box, s.delta, s.eta);

  using Method = MinimizeOptions::Method;
  Method method = opts.method;
  if (method == Method::automatic) method = (box.N == 1 && M == 1) ? Method::newton : Method::preconditioned;
  if (method == Method::newton && M != 1) throw std::invalid_argument("minimize: newton requires a scalar field");
  if (method == Method::newton && box.N != 1) throw std::invalid_argument("minimize: newton requires a one-dimensional grid");

  MinimizeResult res;
  res.method = method == Method::newton ? "newton" : method == Method::preconditioned ? "preconditioned" : "gradient";
  VectorXd target;
  if (opts.mass) {
    target = *opts.mass * p.a() + (1.0 - *opts.mass) * p.b();
    res.u = project_mass(u0, *opts.mass, p.a(), p.b());
  } else {
    res.u = u0;
  }
  if (res.u.a.size() == 0) res.u.a = p.a();
  if (res.u.b.size() == 0) res.u.b = p.b();
  auto mass_error = [&](const GridField& f) { return opts.mass ? (f.mean() - target).lpNorm<Eigen::Infinity>() : 0.0; };
  res.max_mass_error = mass_error(res.u);

  double E = total_energy(fp, res.u, s);
  const double E0 = E;
  res.trace.push_back(E);

  // Curvature scale for the preconditioner: largest Hessian norm of the bases at the wells.
  double kappa = 1e-12;
  if (method == Method::preconditioned) {
    std::vector<double> H(M * M);
    for (int k = 0; k < p.components(); ++k)
      for (const VectorXd* z : {&p.a(), &p.b()}) {
        p.base(k).hessian(z->data(), H.data());
        Eigen::Map<Eigen::MatrixXd> Hm(H.data(), M, M);
        kappa = std::max(kappa, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(0.5 * (Hm + Hm.transpose())).eigenvalues().cwiseAbs().maxCoeff());
      }
  }

  const double coupling = 2.0 * s.eps / (box.h * box.h);
  double step = opts.fixed_step > 0.0 ? opts.fixed_step : s.eps * box.h * box.h / 4.0;
  std::vector<double> dir(static_cast<std::size_t>(n)), work, cp, diag;
  int stalled = 0;

  for (int it = 0; it < opts.max_iter; ++it) {
    const GridField G = energy_gradient(res.u, s, p, opts.resolve);
    const std::vector<double>& g = G.values;

    if (method == Method::newton) {
      diag.assign(static_cast<std::size_t>(box.size()), 0.0);
      double dmax = 0.0;
      for (std::int64_t i = 0; i < box.size(); ++i) {
        double H;
        fp.hessian(i, res.u.at(i), &H);
        const double nb = (i > 0 ? 1.0 : 0.0) + (i + 1 < box.size() ? 1.0 : 0.0);
        diag[i] = std::max(H, 0.0) / s.eps + coupling * nb;
        dmax = std::max(dmax, diag[i]);
      }
      for (double& d : diag) d += 1e-12 * dmax;
      thomas(diag, -coupling, g.data(), 1, dir.data(), box.size(), cp);
    } else if (method == Method::preconditioned) {
      const double d0 = kappa / s.eps;
      if (box.N == 1) {
        diag.assign(static_cast<std::size_t>(box.size()), 0.0);
        for (std::int64_t i = 0; i < box.size(); ++i)
          diag[i] = d0 + coupling * ((i > 0 ? 1.0 : 0.0) + (i + 1 < box.size() ? 1.0 : 0.0));
        for (int c = 0; c < M; ++c) thomas(diag, -coupling, g.data() + c, M, dir.data() + c, box.size(), cp);
      } else {
        // Conjugate gradients on the constant-curvature model Hessian.
        std::fill(dir.begin(), dir.end(), 0.0);
        std::vector<double> r = g, q = g, Aq(static_cast<std::size_t>(n));
        double rr = dot(r, r);
        const double stop = 1e-6 * rr;
        for (int k = 0; k < 500 && rr > stop; ++k) {
          apply_preconditioner(box, M, d0, coupling, q, Aq);
          const double alpha = rr / dot(q, Aq);
          for (std::int64_t j = 0; j < n; ++j) {
            dir[j] += alpha * q[j];
            r[j] -= alpha * Aq[j];
          }
          const double rr_new = dot(r, r);
          for (std::int64_t j = 0; j < n; ++j) q[j] = r[j] + rr_new / rr * q[j];
          rr = rr_new;
        }
      }
    } else {
      dir = g;
    }

    auto remove_mean = [&](std::vector<double>& v) {
      if (!opts.mass) return;
      for (int c = 0; c < M; ++c) {
        CompensatedSum m;
        for (std::int64_t i = 0; i < box.size(); ++i) m.add(v[i * M + c]);
        const double mean = m.value() / static_cast<double>(box.size());
        for (std::int64_t i = 0; i < box.size(); ++i) v[i * M + c] -= mean;
      }
    };
    remove_mean(dir);
    double slope = dot(g, dir) * vol;
    if (!(slope > 0.0) && method != Method::gradient) {
      dir = g;
      remove_mean(dir);
      slope = dot(g, dir) * vol;
    }
    if (!(slope > 0.0)) {
      res.converged = true;
      break;
    }

    const bool fixed = opts.step == MinimizeOptions::Step::fixed;
    double alpha = method == Method::gradient ? (fixed ? step : 2.0 * step) : 1.0;
    GridField trial = res.u;
    double Et = E;
    bool accepted = false;
    for (int ls = 0; ls < 80; ++ls) {
      for (std::int64_t j = 0; j < n; ++j) trial.values[j] = res.u.values[j] - alpha * dir[j];
      if (opts.mass) trial = project_mass(trial, *opts.mass, p.a(), p.b());
      Et = trial.all_finite() ? total_energy(fp, trial, s) : HUGE_VAL;
      if (fixed && method == Method::gradient) {
        accepted = std::isfinite(Et);
        break;
      }
      if (Et <= E - 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!std::isfinite(Et) || (E0 > 0.0 && Et > 10.0 * E0)) throw std::runtime_error("minimize: diverged (energy above 10x initial)");
    if (!accepted) {
      res.converged = true;
      break;
    }
    if (method == Method::gradient) step = alpha;
    const double rel = (E - Et) / std::max(std::abs(Et), 1e-300);
    res.u = std::move(trial);
    E = Et;
    res.trace.push_back(E);
    res.iterations = it + 1;
    res.max_mass_error = std::max(res.max_mass_error, mass_error(res.u));
    stalled = rel < opts.tol ? stalled + 1 : 0;
    if (stalled >= opts.stall) {
      res.converged = true;
      break;
    }
  }
  res.energy = energy(res.u, s, p, nullptr, opts.resolve);
  return res;
}

std::vector<std::uint8_t> threshold_phase(const GridField& u, const VectorXd& a, const VectorXd& b) {
  if (a.size() != u.M || b.size() != u.M) throw std::invalid_argument("threshold: well dimension mismatch");
  const VectorXd d = b - a;
  const VectorXd mid = 0.5 * (a + b);
  std::vector<std::uint8_t> phase(static_cast<std::size_t>(u.cells()));
  for (std::int64_t i = 0; i < u.cells(); ++i) {
    double proj = 0.0;
    for (int c = 0; c < u.M; ++c) proj += (u.at(i)[c] - mid[c]) * d[c];
    phase[i] = proj > 0.0 ? 1 : 0;
  }
  return phase;
}

double face_count_correction(int N) {
  // Mean of |n|_1 over the unit sphere is N Gamma(N/2) / (sqrt(pi) Gamma((N+1)/2)).
  return std::sqrt(M_PI) * std::tgamma(0.5 * (N + 1)) / (N * std::tgamma(0.5 * N));
}

namespace {

double marching_squares(const std::vector<double>& f, std::int64_t nx, std::int64_t ny, double level) {
  auto at = [&](std::int64_t i, std::int64_t j) { return f[i * ny + j] - level; };
  auto cross = [](double v0, double v1) { return v0 / (v0 - v1); };
  double length = 0.0;
  for (std::int64_t i = 0; i + 1 < nx; ++i)
    for (std::int64_t j = 0; j + 1 < ny; ++j) {
      // Corners in counter-clockwise order: (i,j), (i+1,j), (i+1,j+1), (i,j+1).
      const std::array<double, 4> v{at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)};
      const std::array<std::array<double, 2>, 4> corner{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
      std::array<std::array<double, 2>, 4> pts;
      int np = 0;
      for (int e = 0; e < 4; ++e) {
        const double v0 = v[e], v1 = v[(e + 1) % 4];
        if ((v0 > 0) != (v1 > 0)) {
          const double s = cross(v0, v1);
          const auto& c0 = corner[e];
          const auto& c1 = corner[(e + 1) % 4];
          pts[np++] = {c0[0] + s * (c1[0] - c0[0]), c0[1] + s * (c1[1] - c0[1])};
        }
      }
      auto seg = [&](int p0, int p1) { return std::hypot(pts[p0][0] - pts[p1][0], pts[p0][1] - pts[p1][1]); };
      if (np == 2) {
        length += seg(0, 1);
      } else if (np == 4) {
        // Saddle: the centre value decides which corner pairs are connected.
        const double centre = 0.25 * (v[0] + v[1] + v[2] + v[3]);
        length += ((centre > 0) == (v[0] > 0)) ? seg(0, 3) + seg(1, 2) : seg(0, 1) + seg(2, 3);
      }
    }
  return length;
}

}  // namespace

double perimeter(const GridField& u, const VectorXd& a, const VectorXd& b) {
  const auto phase = threshold_phase(u, a, b);
  const GridBox& box = u.box;
  if (box.N == 1) {
    double jumps = 0.0;
    for (std::int64_t i = 0; i + 1 < box.size(); ++i) jumps += phase[i] != phase[i + 1] ? 1.0 : 0.0;
    return jumps;
  }
  if (box.N == 2) {
    const std::int64_t nx = box.count[0], ny = box.count[1];
    std::vector<double> f(phase.begin(), phase.end()), tmp(f.size());
    // One pass of the [1 2 1]/4 filter per axis with replicated edges.
    for (std::int64_t i = 0; i < nx; ++i)
      for (std::int64_t j = 0; j < ny; ++j) {
        const std::int64_t im = std::max<std::int64_t>(i - 1, 0), ip = std::min(i + 1, nx - 1);
        tmp[i * ny + j] = 0.25 * f[im * ny + j] + 0.5 * f[i * ny + j] + 0.25 * f[ip * ny + j];
      }
    for (std::int64_t i = 0; i < nx; ++i)
      for (std::int64_t j = 0; j < ny; ++j) {
        const std::int64_t jm = std::max<std::int64_t>(j - 1, 0), jp = std::min(j + 1, ny - 1);
        f[i * ny + j] = 0.25 * tmp[i * ny + jm] + 0.5 * tmp[i * ny + j] + 0.25 * tmp[i * ny + jp];
      }
    return marching_squares(f, nx, ny, 0.5) * box.h;
  }
  double faces = 0.0;
  for (std::int64_t i = 0; i < box.size(); ++i)
    for (int ax = 0; ax < box.N; ++ax)
      if (coord(box, i, ax) + 1 < box.count[ax] && phase[i] != phase[i + box.stride(ax)]) faces += 1.0;
  return faces * std::pow(box.h, box.N - 1) * face_count_correction(box.N);
}

double bv_projection_distance(const GridField& u, const VectorXd& a, const VectorXd& b) {
  const auto phase = threshold_phase(u, a, b);
  CompensatedSum s;
  for (std::int64_t i = 0; i < u.cells(); ++i) {
    const VectorXd& w = phase[i] ? b : a;
    double d2 = 0.0;
    for (int c = 0; c < u.M; ++c) d2 += (u.at(i)[c] - w[c]) * (u.at(i)[c] - w[c]);
    s.add(std::sqrt(d2));
  }
  return s.value() * u.box.cell_volume();
}

GridField random_field(const GridBox& box, const VectorXd& a, const VectorXd& b, unsigned seed, double noise) {
  if (a.size() != b.size()) throw std::invalid_argument("random_field: well dimension mismatch");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double span = (b - a).norm();
  GridField u(box, static_cast<int>(a.size()));
  u.a = a;
  u.b = b;
  for (std::int64_t i = 0; i < box.size(); ++i) {
    const double t = unit(rng);
    for (int c = 0; c < u.M; ++c) u.at(i)[c] = a[c] + t * (b[c] - a[c]) + noise * span * gauss(rng);
  }
  return u;
}

}  // namespace twoscale
