#include "twoscale/profile.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "twoscale/parallel.hpp"
#include "twoscale/quadrature.hpp"

namespace twoscale {

using Eigen::VectorXd;

namespace {

std::size_t segment_of(const Curve& c, double s) {
  auto it = std::upper_bound(c.t.begin(), c.t.end(), s);
  std::size_t j = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - c.t.begin() - 1, 0));
  return std::min(j, c.size() - 2);
}

VectorXd point_on(const Curve& c, std::size_t j, double s) {
  const double th = (s - c.t[j]) / (c.t[j + 1] - c.t[j]);
  return (1.0 - th) * c.nodes[j] + th * c.nodes[j + 1];
}

double checked_W(const ScalarField& W, const VectorXd& z) {
  const double w = W(z.data());
  if (!(w >= 0.0)) throw std::domain_error("build_profile: W must be nonnegative along the curve");
  return w;
}

}  // namespace

double TransitionProfile::speed(double sv) const {
  const std::size_t j = segment_of(gamma, sv);
  return (gamma.nodes[j + 1] - gamma.nodes[j]).norm() / (gamma.t[j + 1] - gamma.t[j]);
}

VectorXd TransitionProfile::gamma_at(double sv) const {
  return point_on(gamma, segment_of(gamma, std::clamp(sv, -1.0, 1.0)), std::clamp(sv, -1.0, 1.0));
}

double TransitionProfile::hermite(std::size_t k, double th) const {
  const double ds = s[k + 1] - s[k];
  const double th2 = th * th, th3 = th2 * th;
  return (2 * th3 - 3 * th2 + 1) * t[k] + (th3 - 2 * th2 + th) * ds * d0_[k] + (-2 * th3 + 3 * th2) * t[k + 1] +
         (th3 - th2) * ds * d1_[k];
}

double TransitionProfile::s_of(double time) const {
  auto it = std::upper_bound(t.begin(), t.end(), time);
  std::size_t k = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - t.begin() - 1, 0));
  k = std::min(k, t.size() - 2);
  double lo = 0.0, hi = 1.0;
  for (int it2 = 0; it2 < 60; ++it2) {
    const double mid = 0.5 * (lo + hi);
    (hermite(k, mid) < time ? lo : hi) = mid;
  }
  const double ds = s[k + 1] - s[k];
  double sv = s[k] + 0.5 * (lo + hi) * ds;
  // Newton on the exact integral; the Hermite inverse is only a starting point.
  const std::size_t j = segment_of(gamma, 0.5 * (s[k] + s[k + 1]));
  const double sp = (gamma.nodes[j + 1] - gamma.nodes[j]).norm() / (gamma.t[j + 1] - gamma.t[j]);
  auto f = [&](double x) { return eps * sp / std::sqrt(lambda + W(point_on(gamma, j, x).data())); };
  const double scale = ds * std::max(d0_[k], d1_[k]);
  for (int it2 = 0; it2 < 8; ++it2) {
    const double F = t[k] + adaptive_simpson(f, s[k], sv, 1e-13 * scale) - time;
    const double next = sv - F / f(sv);
    if (!(next >= s[k] && next <= s[k + 1])) break;
    const bool done = std::abs(next - sv) <= 1e-15 * ds;
    sv = next;
    if (done) break;
  }
  return sv;
}

double TransitionProfile::g(double time) const {
  if (time <= -tau) return -1.0;
  if (time >= tau) return 1.0;
  return s_of(time);
}

double TransitionProfile::g_prime(double time) const {
  if (time <= -tau || time >= tau) return 0.0;
  const double sv = s_of(time);
  return std::sqrt(lambda + W(gamma_at(sv).data())) / (eps * speed(sv));
}

VectorXd TransitionProfile::u(double time) const {
  if (time <= -tau) return gamma.nodes.front();
  if (time >= tau) return gamma.nodes.back();
  return gamma_at(s_of(time));
}

double TransitionProfile::energy() const {
  double e = 0.0;
  for (std::size_t k = 0; k + 1 < s.size(); ++k) {
    const std::size_t j = segment_of(gamma, 0.5 * (s[k] + s[k + 1]));
    const double sp = (gamma.nodes[j + 1] - gamma.nodes[j]).norm() / (gamma.t[j + 1] - gamma.t[j]);
    auto f = [&](double sv) {
      const double w = W(point_on(gamma, j, sv).data());
      return sp * (2 * w + lambda) / std::sqrt(lambda + w);
    };
    e += adaptive_simpson(f, s[k], s[k + 1], 1e-13 * (s[k + 1] - s[k]));
  }
  return e;
}

double TransitionProfile::energy_bound() const {
  double e = 0.0;
  for (std::size_t k = 0; k + 1 < s.size(); ++k) {
    const std::size_t j = segment_of(gamma, 0.5 * (s[k] + s[k + 1]));
    const double sp = (gamma.nodes[j + 1] - gamma.nodes[j]).norm() / (gamma.t[j + 1] - gamma.t[j]);
    auto f = [&](double sv) { return 2 * std::sqrt(W(point_on(gamma, j, sv).data())) * sp; };
    e += adaptive_simpson(f, s[k], s[k + 1], 1e-13 * (s[k + 1] - s[k]));
  }
  return e + 2 * std::sqrt(lambda) * length;
}

double TransitionProfile::lower_constant() const { return length / (2 * std::sqrt(lambda + max_W)); }

double TransitionProfile::ode_residual(int samples) const {
  double worst = 0.0;
  const double step = 1e-6 * tau;
  for (int i = 1; i <= samples; ++i) {
    const double tm = -tau + 2 * tau * i / (samples + 1.0);
    const double gp = (g(tm + step) - g(tm - step)) / (2 * step);
    const double sv = g(tm);
    const double sp = speed(sv);
    const double rhs = (lambda + W(gamma_at(sv).data())) / (eps * eps * sp * sp);
    worst = std::max(worst, std::abs(gp * gp - rhs) / rhs);
  }
  return worst;
}

TransitionProfile build_profile(const Curve& gamma, const ScalarField& W, double eps, double lambda, int samples) {
  gamma.validate();
  if (!(lambda > 0.0)) throw std::invalid_argument("build_profile: lambda must be positive");
  if (!(eps > 0.0)) throw std::invalid_argument("build_profile: eps must be positive");
  if (samples < 3) throw std::invalid_argument("build_profile: need at least three samples");

  TransitionProfile p;
  p.gamma = gamma;
  p.W = W;
  p.eps = eps;
  p.lambda = lambda;
  p.length = gamma.length();

  std::vector<double> speeds(gamma.size() - 1);
  for (std::size_t j = 0; j + 1 < gamma.size(); ++j) {
    speeds[j] = (gamma.nodes[j + 1] - gamma.nodes[j]).norm() / (gamma.t[j + 1] - gamma.t[j]);
    if (!(speeds[j] > 0.0)) throw std::invalid_argument("build_profile: vanishing gamma' on a curve segment");
  }

  std::vector<std::size_t> seg;
  p.s.push_back(-1.0);
  for (std::size_t j = 0; j + 1 < gamma.size(); ++j) {
    const double dt = gamma.t[j + 1] - gamma.t[j];
    const long n = std::max(1L, std::lround((samples - 1) * dt / 2.0));
    for (long i = 1; i <= n; ++i) {
      p.s.push_back(i == n ? gamma.t[j + 1] : gamma.t[j] + dt * static_cast<double>(i) / static_cast<double>(n));
      seg.push_back(j);
    }
  }

  const std::size_t K = p.s.size();
  std::vector<double> T(K, 0.0);
  p.d0_.resize(K - 1);
  p.d1_.resize(K - 1);
  for (std::size_t k = 0; k + 1 < K; ++k) {
    const std::size_t j = seg[k];
    auto f = [&](double sv) { return eps * speeds[j] / std::sqrt(lambda + checked_W(W, point_on(gamma, j, sv))); };
    const double f0 = f(p.s[k]), f1 = f(p.s[k + 1]);
    const double fm = f(0.5 * (p.s[k] + p.s[k + 1]));
    p.max_W = std::max({p.max_W, W(point_on(gamma, j, p.s[k]).data()), W(point_on(gamma, j, p.s[k + 1]).data()),
                        W(point_on(gamma, j, 0.5 * (p.s[k] + p.s[k + 1])).data())});
    p.d0_[k] = f0;
    p.d1_[k] = f1;
    const double ds = p.s[k + 1] - p.s[k];
    T[k + 1] = T[k] + adaptive_simpson(f, p.s[k], p.s[k + 1], 1e-12 * ds * std::max({f0, f1, fm}));
  }
  p.tau = 0.5 * T.back();
  p.t.resize(K);
  for (std::size_t k = 0; k < K; ++k) p.t[k] = T[k] - p.tau;
  p.t.back() = p.tau;
  p.t.front() = -p.tau;
  return p;
}

ProfileTable::ProfileTable(const TransitionProfile& profile, int samples) : p_(&profile) {
  if (samples < 3) throw std::invalid_argument("ProfileTable: need at least three samples");
  dt_ = 2 * profile.tau / (samples - 1);
  g_.resize(samples);
  gp_.resize(samples);
  for (int i = 0; i < samples; ++i) {
    const double tm = -profile.tau + i * dt_;
    g_[i] = i == 0 ? -1.0 : i == samples - 1 ? 1.0 : profile.g(tm);
    const double sv = g_[i];
    gp_[i] = std::sqrt(profile.lambda + profile.W(profile.gamma_at(sv).data())) / (profile.eps * profile.speed(sv));
  }
}

double ProfileTable::g(double time) const {
  if (time <= -p_->tau) return -1.0;
  if (time >= p_->tau) return 1.0;
  const double x = (time + p_->tau) / dt_;
  const std::size_t k = std::min(static_cast<std::size_t>(x), g_.size() - 2);
  const double th = x - static_cast<double>(k), th2 = th * th, th3 = th2 * th;
  const double v = (2 * th3 - 3 * th2 + 1) * g_[k] + (th3 - 2 * th2 + th) * dt_ * gp_[k] + (-2 * th3 + 3 * th2) * g_[k + 1] +
                   (th3 - th2) * dt_ * gp_[k + 1];
  return std::clamp(v, -1.0, 1.0);
}

void ProfileTable::u(double time, double* out) const {
  const Curve& c = p_->gamma;
  const double sv = g(time);
  const std::size_t j = segment_of(c, sv);
  const double th = (sv - c.t[j]) / (c.t[j + 1] - c.t[j]);
  for (Eigen::Index k = 0; k < c.nodes[j].size(); ++k) out[k] = (1.0 - th) * c.nodes[j][k] + th * c.nodes[j + 1][k];
}

double default_lambda(double sigma, double length) {
  if (!(length > 0.0)) throw std::invalid_argument("default_lambda: curve length must be positive");
  const double varsigma = 0.01 * sigma;
  return varsigma * varsigma / (length * length);
}

namespace {

constexpr double kFar = 1e20;

// Squared distance transform of f along one line (lower envelope of parabolas).
void edt_line(const double* f, double* d, std::int64_t n, std::vector<std::int64_t>& v, std::vector<double>& z) {
  v.assign(static_cast<std::size_t>(n), 0);
  z.assign(static_cast<std::size_t>(n + 1), 0.0);
  std::int64_t k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (std::int64_t q = 1; q < n; ++q) {
    auto cut = [&](std::int64_t p) { return ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * double(q - p)); };
    double sv = cut(v[k]);
    while (sv <= z[k]) sv = cut(v[--k]);
    ++k;
    v[k] = q;
    z[k] = sv;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (std::int64_t q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = double(q - v[k]);
    d[q] = std::min(dq * dq + f[v[k]], kFar);
  }
}

// Squared index distance from every cell to the nearest source cell.
std::vector<double> squared_edt(const GridBox& box, const std::vector<std::uint8_t>& source) {
  const std::int64_t size = box.size();
  std::vector<double> f(static_cast<std::size_t>(size));
  for (std::int64_t i = 0; i < size; ++i) f[i] = source[i] ? 0.0 : kFar;
  for (int ax = 0; ax < box.N; ++ax) {
    const std::int64_t n = box.count[ax], stride = box.stride(ax);
    const std::int64_t blocks = size / (n * stride);
    parallel_for(blocks * stride, [&](std::int64_t line) {
      const std::int64_t start = (line / stride) * n * stride + line % stride;
      std::vector<double> in(static_cast<std::size_t>(n)), out(static_cast<std::size_t>(n)), z;
      std::vector<std::int64_t> v;
      for (std::int64_t q = 0; q < n; ++q) in[q] = f[start + q * stride];
      edt_line(in.data(), out.data(), n, v, z);
      for (std::int64_t q = 0; q < n; ++q) f[start + q * stride] = out[q];
    });
  }
  return f;
}

}  // namespace

GridField signed_distance(const PhaseMask& A) {
  const std::int64_t size = A.box.size();
  if (static_cast<std::int64_t>(A.inside.size()) != size) throw std::invalid_argument("signed_distance: mask size mismatch");
  std::int64_t in = 0;
  for (auto c : A.inside) in += c ? 1 : 0;
  if (in == 0 || in == size) throw std::invalid_argument("signed_distance: empty phase");

  std::vector<std::uint8_t> outside(A.inside.size());
  for (std::size_t i = 0; i < outside.size(); ++i) outside[i] = A.inside[i] ? 0 : 1;
  const auto to_out = squared_edt(A.box, outside);
  const auto to_in = squared_edt(A.box, A.inside);

  GridField h(A.box, 1);
  for (std::int64_t i = 0; i < size; ++i)
    h.values[i] = A.inside[i] ? -(std::sqrt(to_out[i]) - 0.5) * A.box.h : (std::sqrt(to_in[i]) - 0.5) * A.box.h;
  return h;
}

GridField recovery_sequence(const GridField& dist, const TransitionProfile& profile) {
  if (dist.M != 1) throw std::invalid_argument("recovery_sequence: distance field must be scalar");
  if (dist.box.h > profile.tau / 4) throw std::invalid_argument("recovery_sequence: layer unresolved by grid (h > tau/4)");
  const VectorXd& a = profile.gamma.nodes.front();
  const VectorXd& b = profile.gamma.nodes.back();
  const int M = static_cast<int>(a.size());
  GridField u(dist.box, M);
  u.a = a;
  u.b = b;
  const ProfileTable table(profile);
  parallel_for(dist.cells(), [&](std::int64_t i) {
    const double d = dist.values[i];
    double* out = u.at(i);
    if (d < -profile.tau) {
      for (int c = 0; c < M; ++c) out[c] = a[c];
    } else if (d > profile.tau) {
      for (int c = 0; c < M; ++c) out[c] = b[c];
    } else {
      table.u(d, out);
    }
  });
  return u;
}

BubbleCenter choose_bubble_center(const GridField& dist) {
  const GridBox& box = dist.box;
  std::vector<std::int64_t> idx(box.N);
  double best = -1.0;
  std::int64_t arg = -1;
  for (std::int64_t i = 0; i < box.size(); ++i) {
    if (!(dist.values[i] < 0.0)) continue;
    box.unravel(i, idx.data());
    double c = -dist.values[i];
    for (int ax = 0; ax < box.N; ++ax) {
      const double x = box.center(ax, idx[ax]);
      c = std::min({c, x - box.origin[ax] * box.h, (box.origin[ax] + box.count[ax]) * box.h - x});
    }
    if (c > best) {
      best = c;
      arg = i;
    }
  }
  if (arg < 0) throw std::invalid_argument("choose_bubble_center: phase A is empty");
  BubbleCenter out;
  out.x0.resize(box.N);
  box.unravel(arg, idx.data());
  for (int ax = 0; ax < box.N; ++ax) out.x0[ax] = box.center(ax, idx[ax]);
  out.clearance = best;
  return out;
}

double unit_ball_volume(int N) { return std::pow(M_PI, 0.5 * N) / std::tgamma(0.5 * N + 1.0); }

MassRepair mass_repair(const GridField& u_n, double m, const VectorXd& x0, double r) {
  const GridBox& box = u_n.box;
  const int N = box.N, M = u_n.M;
  if (N < 2) throw std::invalid_argument("mass_repair: bubble repair needs N >= 2");
  if (!(m >= 0.0 && m <= 1.0)) throw std::invalid_argument("mass_repair: m must lie in [0, 1]");
  if (!(r > 0.0)) throw std::invalid_argument("mass_repair: radius must be positive");
  if (x0.size() != N) throw std::invalid_argument("mass_repair: centre dimension mismatch");
  if (u_n.a.size() != M || u_n.b.size() != M) throw std::invalid_argument("mass_repair: wells missing from field");
  for (int ax = 0; ax < N; ++ax)
    if (x0[ax] - r < box.origin[ax] * box.h || x0[ax] + r > (box.origin[ax] + box.count[ax]) * box.h)
      throw std::invalid_argument("mass_repair: ball leaves the domain");

  MassRepair out;
  out.v = u_n;
  out.ball.assign(static_cast<std::size_t>(box.size()), 0);
  out.m_n = u_n.mean();
  out.c_analytic = -(N + 1) / (unit_ball_volume(N) * std::pow(r, N));

  const VectorXd& a = u_n.a;
  const double vol = box.cell_volume();
  const double scale = 1.0 + a.cwiseAbs().maxCoeff();
  std::vector<double> phi(static_cast<std::size_t>(box.size()), 0.0);
  std::vector<std::int64_t> idx(N);
  CompensatedSum Phi;
  std::vector<CompensatedSum> off(M);
  for (std::int64_t i = 0; i < box.size(); ++i) {
    box.unravel(i, idx.data());
    double d2 = 0.0;
    for (int ax = 0; ax < N; ++ax) d2 += std::pow(box.center(ax, idx[ax]) - x0[ax], 2);
    const double ph = 1.0 - std::sqrt(d2) / r;
    if (ph <= 0.0) continue;
    const double* u = u_n.at(i);
    for (int c = 0; c < M; ++c) {
      if (std::abs(u[c] - a[c]) > 1e-12 * scale) throw std::invalid_argument("mass_repair: ball intersects the interface layer");
      off[c].add((a[c] - u[c]) * vol);
    }
    out.ball[i] = 1;
    phi[i] = ph;
    Phi.add(ph * vol);
  }
  if (Phi.value() <= 0.0) throw std::invalid_argument("mass_repair: ball contains no cell centre");

  const VectorXd target = box.volume() * (m * a + (1.0 - m) * u_n.b);
  const VectorXd d = u_n.integral() - target;
  if (d.lpNorm<Eigen::Infinity>() <= 1e-14 * box.volume() * scale) {
    out.c_grid = out.c_analytic;
    return out;
  }
  VectorXd res(M);
  for (int c = 0; c < M; ++c) res[c] = off[c].value();
  out.c_grid = (-d - res).dot(d) / (d.squaredNorm() * Phi.value());
  for (std::int64_t i = 0; i < box.size(); ++i) {
    if (!out.ball[i]) continue;
    double* v = out.v.at(i);
    for (int c = 0; c < M; ++c) v[c] = a[c] + out.c_grid * d[c] * phi[i];
  }
  return out;
}

}  // namespace twoscale
