#include "twoscale/geodesic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <stdexcept>

#include "twoscale/quadrature.hpp"

namespace twoscale {

using Eigen::VectorXd;

void Curve::validate() const {
  if (nodes.size() < 2 || t.size() != nodes.size()) throw std::invalid_argument("Curve: need at least two nodes");
  if (t.front() != -1.0 || t.back() != 1.0) throw std::invalid_argument("Curve: parameters must span [-1, 1]");
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (nodes[k].size() != nodes[0].size() || !nodes[k].allFinite())
      throw std::invalid_argument("Curve: non-finite or inconsistent node");
    if (k > 0 && !(t[k] > t[k - 1])) throw std::invalid_argument("Curve: parameters must increase strictly");
  }
}

double Curve::length() const {
  double L = 0.0;
  for (std::size_t k = 0; k + 1 < nodes.size(); ++k) L += (nodes[k + 1] - nodes[k]).norm();
  return L;
}

namespace {

std::vector<double> uniform_t(std::size_t n) {
  std::vector<double> t(n);
  for (std::size_t k = 0; k < n; ++k) t[k] = -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(n - 1);
  t.front() = -1.0;
  t.back() = 1.0;
  return t;
}

}  // namespace

Curve Curve::segment(const VectorXd& p, const VectorXd& q, int n) {
  if (n < 2) throw std::invalid_argument("Curve::segment: need at least two nodes");
  Curve c;
  c.t = uniform_t(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double s = static_cast<double>(k) / (n - 1);
    c.nodes.push_back((1.0 - s) * p + s * q);
  }
  c.nodes.back() = q;
  return c;
}

Curve Curve::sample(const std::function<VectorXd(double)>& path, int n) {
  if (n < 2) throw std::invalid_argument("Curve::sample: need at least two nodes");
  Curve c;
  c.t = uniform_t(static_cast<std::size_t>(n));
  for (double t : c.t) c.nodes.push_back(path(t));
  return c;
}

int WellBalls::which(const double* z, int M) const {
  for (std::size_t i = 0; i < centers.size(); ++i) {
    double d2 = 0.0;
    for (int m = 0; m < M; ++m) d2 += (z[m] - centers[i][m]) * (z[m] - centers[i][m]);
    if (std::sqrt(d2) <= radii[i]) return static_cast<int>(i);
  }
  return -1;
}

bool WellBalls::inside(const double* z, int M) const { return which(z, M) >= 0; }

namespace {

double root_density(const ScalarField& W, const double* z, int M, const WellBalls* balls) {
  if (balls && balls->inside(z, M)) return 0.0;
  const double w = W(z);
  if (!(w >= 0.0)) throw std::domain_error("line_energy: negative or non-finite potential sample");
  return std::sqrt(w);
}

}  // namespace

double line_energy(const ScalarField& W, const Curve& gamma, const WellBalls* balls) {
  gamma.validate();
  const int M = gamma.M();
  double E = 0.0;
  double f0 = root_density(W, gamma.nodes[0].data(), M, balls);
  for (std::size_t k = 0; k + 1 < gamma.size(); ++k) {
    const double f1 = root_density(W, gamma.nodes[k + 1].data(), M, balls);
    E += (gamma.nodes[k + 1] - gamma.nodes[k]).norm() * (f0 + f1);
    f0 = f1;
  }
  return E;
}

namespace {

// Scalar line integral of 2 sqrt(W) from p to q, skipping ball intervals.
double scalar_integral(const ScalarField& W, double p, double q, const WellBalls* balls, double tol) {
  const double lo = std::min(p, q), hi = std::max(p, q);
  std::vector<std::pair<double, double>> cuts;
  if (balls)
    for (std::size_t i = 0; i < balls->centers.size(); ++i)
      cuts.emplace_back(balls->centers[i][0] - balls->radii[i], balls->centers[i][0] + balls->radii[i]);
  std::sort(cuts.begin(), cuts.end());
  std::vector<std::pair<double, double>> pieces;
  double cur = lo;
  for (const auto& c : cuts) {
    if (c.second <= cur) continue;
    if (c.first >= hi) break;
    if (c.first > cur) pieces.emplace_back(cur, c.first);
    cur = std::max(cur, c.second);
  }
  if (cur < hi) pieces.emplace_back(cur, hi);
  auto f = [&](double s) {
    const double w = W(&s);
    if (!(w >= -1e-300)) throw std::domain_error("sigma: negative potential sample");
    return 2.0 * std::sqrt(std::max(w, 0.0));
  };
  double total = 0.0;
  for (const auto& pc : pieces)
    if (pc.second > pc.first) total += adaptive_simpson(f, pc.first, pc.second, tol);
  return total;
}

Curve resample(const Curve& c, int n) {
  const std::size_t K = c.size();
  std::vector<double> s(K, 0.0);
  for (std::size_t k = 1; k < K; ++k) s[k] = s[k - 1] + (c.nodes[k] - c.nodes[k - 1]).norm();
  Curve out;
  out.t = uniform_t(static_cast<std::size_t>(n));
  const double L = s.back();
  if (L == 0.0) {
    out.nodes.assign(static_cast<std::size_t>(n), c.nodes.front());
    return out;
  }
  std::size_t seg = 0;
  for (int i = 0; i < n; ++i) {
    const double target = L * static_cast<double>(i) / (n - 1);
    while (seg + 2 < K && s[seg + 1] < target) ++seg;
    const double len = s[seg + 1] - s[seg];
    const double f = len > 0.0 ? std::clamp((target - s[seg]) / len, 0.0, 1.0) : 0.0;
    out.nodes.push_back((1.0 - f) * c.nodes[seg] + f * c.nodes[seg + 1]);
  }
  out.nodes.front() = c.nodes.front();
  out.nodes.back() = c.nodes.back();
  return out;
}

// Chord energy with four trapezoid panels.
double chord_energy(const ScalarField& W, const VectorXd& x, const VectorXd& y, const WellBalls* balls) {
  const int M = static_cast<int>(x.size());
  const double L = (y - x).norm();
  if (L == 0.0) return 0.0;
  double s = 0.0;
  for (int i = 0; i <= 4; ++i) {
    const VectorXd z = x + (y - x) * (i / 4.0);
    s += (i == 0 || i == 4 ? 0.5 : 1.0) * root_density(W, z.data(), M, balls);
  }
  return 2.0 * L * s / 4.0;
}

Curve graph_init(const ScalarField& W, const VectorXd& p, const VectorXd& q, const GeodesicOptions& opts,
                 const WellBalls* balls, const VectorXd* clip_lo, const VectorXd* clip_hi) {
  const int M = static_cast<int>(p.size());
  const int G = opts.cloud > 0 ? opts.cloud : (M == 2 ? 41 : M == 3 ? 15 : 7);
  const double span = std::max((q - p).norm(), 1e-3);
  VectorXd lo(M), hi(M);
  for (int m = 0; m < M; ++m) {
    const double ext = std::max(std::abs(q[m] - p[m]), 0.25 * span);
    lo[m] = std::min(p[m], q[m]) - opts.inflate * ext;
    hi[m] = std::max(p[m], q[m]) + opts.inflate * ext;
    if (clip_lo) lo[m] = std::max(lo[m], (*clip_lo)[m]);
    if (clip_hi) hi[m] = std::min(hi[m], (*clip_hi)[m]);
  }
  std::int64_t total = 1;
  for (int m = 0; m < M; ++m) total *= G;
  std::vector<VectorXd> pts(static_cast<std::size_t>(total));
  for (std::int64_t i = 0; i < total; ++i) {
    std::int64_t r = i;
    VectorXd z(M);
    for (int m = M - 1; m >= 0; --m) {
      z[m] = lo[m] + (hi[m] - lo[m]) * static_cast<double>(r % G) / (G - 1);
      r /= G;
    }
    pts[i] = z;
  }
  const std::int64_t src = total, dst = total + 1;
  pts.push_back(p);
  pts.push_back(q);

  // Neighbour offsets in {-2..2}^M with coprime entries.
  std::vector<std::vector<int>> offs;
  std::int64_t combos = 1;
  for (int m = 0; m < M; ++m) combos *= 5;
  for (std::int64_t c = 0; c < combos; ++c) {
    std::vector<int> o(M);
    std::int64_t r = c;
    int g = 0;
    for (int m = 0; m < M; ++m) {
      o[m] = static_cast<int>(r % 5) - 2;
      r /= 5;
      g = std::gcd(g, std::abs(o[m]));
    }
    if (g == 1) offs.push_back(o);
  }
  VectorXd cell(M);
  for (int m = 0; m < M; ++m) cell[m] = (hi[m] - lo[m]) / (G - 1);
  auto attach = [&](const VectorXd& x) {
    std::vector<std::int64_t> near;
    for (std::int64_t i = 0; i < total; ++i) {
      bool ok = true;
      for (int m = 0; m < M && ok; ++m) ok = std::abs(pts[i][m] - x[m]) <= 2.5 * cell[m];
      if (ok) near.push_back(i);
    }
    return near;
  };
  const auto near_src = attach(p), near_dst = attach(q);

  std::vector<double> dist(pts.size(), std::numeric_limits<double>::infinity());
  std::vector<std::int64_t> prev(pts.size(), -1);
  using Item = std::pair<double, std::int64_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
  dist[src] = 0.0;
  heap.emplace(0.0, src);
  auto relax = [&](std::int64_t u, std::int64_t v) {
    const double nd = dist[u] + chord_energy(W, pts[u], pts[v], balls);
    if (nd < dist[v]) {
      dist[v] = nd;
      prev[v] = u;
      heap.emplace(nd, v);
    }
  };
  while (!heap.empty()) {
    auto [d, u] = heap.top();
    heap.pop();
    if (d > dist[u]) continue;
    if (u == dst) break;
    if (u == src) {
      for (auto v : near_src) relax(u, v);
      relax(u, dst);
      continue;
    }
    std::vector<std::int64_t> idx(M);
    std::int64_t r = u;
    for (int m = M - 1; m >= 0; --m) {
      idx[m] = r % G;
      r /= G;
    }
    for (const auto& o : offs) {
      std::int64_t v = 0;
      bool ok = true;
      for (int m = 0; m < M && ok; ++m) {
        const std::int64_t j = idx[m] + o[m];
        ok = j >= 0 && j < G;
        v = v * G + j;
      }
      if (ok) relax(u, v);
    }
    if (std::find(near_dst.begin(), near_dst.end(), u) != near_dst.end()) relax(u, dst);
  }
  Curve raw;
  for (std::int64_t v = dst; v != -1; v = prev[v]) raw.nodes.push_back(pts[v]);
  std::reverse(raw.nodes.begin(), raw.nodes.end());
  if (raw.nodes.size() < 2) raw.nodes = {p, q};
  raw.t = uniform_t(raw.nodes.size());
  return resample(raw, opts.nodes);
}

struct PathDescent {
  const ScalarField& W;
  const WellBalls* balls;
  int M;

  double density(const VectorXd& z) const { return root_density(W, z.data(), M, balls); }

  VectorXd density_grad(const VectorXd& z, double f0) const {
    VectorXd g = VectorXd::Zero(M);
    if (balls && balls->inside(z.data(), M)) return g;
    for (int m = 0; m < M; ++m) {
      const double h = 1e-7 * (1.0 + std::abs(z[m]));
      VectorXd zp = z, zm = z;
      zp[m] += h;
      zm[m] -= h;
      const double fp = density(zp), fm = density(zm);
      // One-sided near the zero set, where sqrt(W) has a kink.
      if (f0 == 0.0)
        g[m] = 0.0;
      else
        g[m] = (fp - fm) / (2.0 * h);
    }
    return g;
  }

  double energy(const std::vector<VectorXd>& x, std::vector<double>& f) const {
    f.resize(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) f[k] = density(x[k]);
    double E = 0.0;
    for (std::size_t k = 0; k + 1 < x.size(); ++k) E += (x[k + 1] - x[k]).norm() * (f[k] + f[k + 1]);
    return E;
  }

  void run(Curve& c, int sweeps, std::vector<double>& trace) const {
    std::vector<double> f;
    double E = energy(c.nodes, f);
    trace.push_back(E);
    const std::size_t K = c.size();
    if (K < 3) return;
    double alpha = 0.0;
    for (int it = 0; it < sweeps; ++it) {
      std::vector<VectorXd> g(K, VectorXd::Zero(M));
      double gmax = 0.0, g2 = 0.0;
      for (std::size_t k = 1; k + 1 < K; ++k) {
        const VectorXd d0 = c.nodes[k] - c.nodes[k - 1], d1 = c.nodes[k + 1] - c.nodes[k];
        const double L0 = d0.norm(), L1 = d1.norm();
        VectorXd gk = (L0 + L1) * density_grad(c.nodes[k], f[k]);
        if (L0 > 0.0) gk += (f[k - 1] + f[k]) * d0 / L0;
        if (L1 > 0.0) gk -= (f[k] + f[k + 1]) * d1 / L1;
        g[k] = gk;
        gmax = std::max(gmax, gk.norm());
        g2 += gk.squaredNorm();
      }
      if (gmax == 0.0) break;
      const double clamp = 0.5 * c.length() / static_cast<double>(K - 1);
      alpha = alpha > 0.0 ? std::min(2.0 * alpha, clamp / gmax) : clamp / gmax;
      bool moved = false;
      std::vector<double> ft;
      for (int ls = 0; ls < 30; ++ls, alpha *= 0.5) {
        std::vector<VectorXd> trial = c.nodes;
        for (std::size_t k = 1; k + 1 < K; ++k) trial[k] -= alpha * g[k];
        const double Et = energy(trial, ft);
        if (Et <= E - 1e-4 * alpha * g2) {
          c.nodes = std::move(trial);
          f = ft;
          E = Et;
          moved = true;
          break;
        }
      }
      if (moved && (it + 1) % 10 == 0) {
        Curve r = resample(c, static_cast<int>(K));
        const double Er = energy(r.nodes, ft);
        if (Er <= E) {
          c.nodes = std::move(r.nodes);
          f = ft;
          E = Er;
        }
      }
      trace.push_back(E);
      if (!moved) break;
    }
  }
};

TensionResult optimize_impl(const ScalarField& W, const VectorXd& p, const VectorXd& q, const GeodesicOptions& opts,
                            const WellBalls* balls, const VectorXd* clip_lo, const VectorXd* clip_hi) {
  const int M = static_cast<int>(p.size());
  TensionResult res;
  res.method = "optimized";
  Curve c = graph_init(W, p, q, opts, balls, clip_lo, clip_hi);
  PathDescent pd{W, balls, M};
  pd.run(c, opts.sweeps, res.trace);
  double E = line_energy(W, c, balls);
  int n = opts.nodes;
  while (2 * n - 1 <= opts.max_nodes) {
    Curve finer = resample(c, 2 * n - 1);
    pd.run(finer, opts.sweeps, res.trace);
    const double Ef = line_energy(W, finer, balls);
    const double change = std::abs(Ef - E) / std::max(E, 1e-300);
    c = std::move(finer);
    E = Ef;
    n = 2 * n - 1;
    if (change < opts.refine_tol) break;
  }
  res.curve = std::move(c);
  res.value = E;
  res.nodes = static_cast<int>(res.curve.size());
  return res;
}

void check_wells(const ScalarField& W, const VectorXd& a, const VectorXd& b) {
  const double wa = W(a.data()), wb = W(b.data());
  if (std::abs(wa) > 1e-10 || std::abs(wb) > 1e-10) throw std::invalid_argument("sigma: wells not at zero energy");
}

}  // namespace

TensionResult sigma_field(const ScalarField& W, const VectorXd& a, const VectorXd& b, const GeodesicOptions& opts) {
  if (a.size() != b.size() || a.size() == 0) throw std::invalid_argument("sigma: well dimension mismatch");
  check_wells(W, a, b);
  if (a.size() == 1) {
    TensionResult res;
    res.method = "closed-form";
    res.value = scalar_integral(W, a[0], b[0], nullptr, opts.quad_tol);
    res.curve = Curve::segment(a, b, opts.nodes);
    res.nodes = opts.nodes;
    return res;
  }
  return optimize_impl(W, a, b, opts, nullptr, nullptr, nullptr);
}

TensionResult sigma_h(const HomogenizedPotential& Wh, const GeodesicOptions& opts) {
  auto W = [&Wh](const double* z) { return Wh(z); };
  return sigma_field(W, Wh.a(), Wh.b(), opts);
}

TensionResult optimize_path(const ScalarField& W, const VectorXd& p, const VectorXd& q, const GeodesicOptions& opts,
                            const WellBalls* balls) {
  if (p.size() != q.size() || p.size() == 0) throw std::invalid_argument("optimize_path: endpoint dimension mismatch");
  if (p.size() == 1) {
    TensionResult res;
    res.method = "closed-form";
    res.value = scalar_integral(W, p[0], q[0], balls, opts.quad_tol);
    res.curve = Curve::segment(p, q, opts.nodes);
    res.nodes = opts.nodes;
    return res;
  }
  return optimize_impl(W, p, q, opts, balls, nullptr, nullptr);
}

double geodesic_distance(const ScalarField& W, const VectorXd& p, const VectorXd& q, const WellBalls* balls,
                         const GeodesicOptions& opts) {
  if ((p - q).norm() == 0.0) return 0.0;
  const int M = static_cast<int>(p.size());
  if (balls) {
    const int bp = balls->which(p.data(), M), bq = balls->which(q.data(), M);
    if (bp >= 0 && bp == bq) return 0.0;
  }
  return optimize_path(W, p, q, opts, balls).value;
}

bool is_one_third_normalized(const Curve& gamma, const WellBalls& balls) {
  if (balls.centers.size() < 2) return false;
  const int M = gamma.M();
  const WellBalls A{{balls.centers[0]}, {balls.radii[0]}}, B{{balls.centers[1]}, {balls.radii[1]}};
  bool has_lo = false, has_hi = false;
  for (std::size_t k = 0; k < gamma.size(); ++k) {
    const double t = gamma.t[k];
    if (t <= -1.0 / 3.0 && !A.inside(gamma.nodes[k].data(), M)) return false;
    if (t >= 1.0 / 3.0 && !B.inside(gamma.nodes[k].data(), M)) return false;
    has_lo = has_lo || t == -1.0 / 3.0;
    has_hi = has_hi || t == 1.0 / 3.0;
  }
  return has_lo && has_hi;
}

Curve normalize_one_third(const Curve& gamma, const WellBalls& balls) {
  gamma.validate();
  if (balls.centers.size() < 2) throw std::invalid_argument("normalize_one_third: need two well balls");
  if (is_one_third_normalized(gamma, balls)) return gamma;
  const int M = gamma.M();
  const WellBalls A{{balls.centers[0]}, {balls.radii[0]}}, B{{balls.centers[1]}, {balls.radii[1]}};
  const std::size_t K = gamma.size();
  if (!A.inside(gamma.nodes.front().data(), M) || !B.inside(gamma.nodes.back().data(), M))
    throw std::invalid_argument("normalize_one_third: endpoints outside their balls");
  std::size_t ka = 0;
  while (ka + 1 < K && A.inside(gamma.nodes[ka + 1].data(), M)) ++ka;
  std::size_t kb = K - 1;
  while (kb > 0 && B.inside(gamma.nodes[kb - 1].data(), M)) --kb;
  if (kb <= ka) ka = kb;

  Curve out;
  auto piece = [&](std::size_t from, std::size_t to, double t0, double t1, bool skip_first) {
    std::vector<std::size_t> idx;
    for (std::size_t k = from; k <= to; ++k) idx.push_back(k);
    if (idx.size() == 1) idx.push_back(idx.front());
    const std::size_t n = idx.size();
    for (std::size_t i = skip_first ? 1 : 0; i < n; ++i) {
      out.nodes.push_back(gamma.nodes[idx[i]]);
      out.t.push_back(i + 1 == n ? t1 : t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(n - 1));
    }
  };
  piece(0, ka, -1.0, -1.0 / 3.0, false);
  piece(ka, kb, -1.0 / 3.0, 1.0 / 3.0, true);
  piece(kb, K - 1, 1.0 / 3.0, 1.0, true);
  out.t.front() = -1.0;
  out.t.back() = 1.0;
  return out;
}

ZeroSetRadius cache_zero_radius(const CellCache& cache, double zero_tol, int steps) {
  const int M = cache.M();
  const double reach = 0.5 * (cache.b - cache.a).norm();
  auto radius = [&](const VectorXd& w) {
    double best = std::numeric_limits<double>::infinity();
    for (int dir = 0; dir < 2 * M; ++dir) {
      VectorXd e = VectorXd::Zero(M);
      e[dir / 2] = dir % 2 == 0 ? 1.0 : -1.0;
      double r = 0.0;
      bool bounded = false;
      for (int s = 1; s <= steps; ++s) {
        const double rr = reach * s / steps;
        const VectorXd z = w + rr * e;
        if (!cache.contains(z.data())) break;
        if (cache(z) > zero_tol) {
          bounded = true;
          break;
        }
        r = rr;
      }
      // Rays leaving the cache box carry no information.
      if (bounded || r > 0.0) best = std::min(best, r);
    }
    return std::isfinite(best) ? best : 0.0;
  };
  return {radius(cache.a), radius(cache.b)};
}

TensionResult sigma_xi(const CellCache& cache, const ZeroSetRadius* radii, const GeodesicOptions& opts) {
  const int M = cache.M();
  if (cache.a.size() != M || cache.b.size() != M) throw std::invalid_argument("sigma_xi: cache without wells");
  if (!cache.contains(cache.a.data()) || !cache.contains(cache.b.data()))
    throw std::invalid_argument("sigma_xi: cache box does not contain the wells");
  const ZeroSetRadius r = radii ? *radii : cache_zero_radius(cache);
  WellBalls balls{{cache.a, cache.b}, {r.r_a, r.r_b}};
  auto W = [&cache](const double* z) { return cache(z); };
  TensionResult res;
  if (M == 1) {
    // Exact integral of 2 sqrt of the piecewise-linear interpolant.
    const double lo = std::min(cache.a[0], cache.b[0]), hi = std::max(cache.a[0], cache.b[0]);
    const double x0 = cache.lo()[0], dx = (cache.hi()[0] - x0) / (cache.nodes() - 1);
    auto sqrt_int = [](double w0, double w1, double L) {
      w0 = std::max(w0, 0.0);
      w1 = std::max(w1, 0.0);
      if (std::abs(w1 - w0) <= 1e-14 * std::max(w0, w1)) return L * std::sqrt(0.5 * (w0 + w1));
      return L * (2.0 / 3.0) * (w1 * std::sqrt(w1) - w0 * std::sqrt(w0)) / (w1 - w0);
    };
    double total = 0.0;
    for (int i = 0; i + 1 < cache.nodes(); ++i) {
      const double s0 = std::max(lo, x0 + i * dx), s1 = std::min(hi, x0 + (i + 1) * dx);
      if (s1 <= s0) continue;
      total += 2.0 * sqrt_int(cache(&s0), cache(&s1), s1 - s0);
    }
    res.method = "closed-form";
    res.value = total;
    res.curve = Curve::segment(cache.a, cache.b, opts.nodes);
  } else {
    VectorXd lo = cache.lo(), hi = cache.hi();
    res = optimize_impl(W, cache.a, cache.b, opts, &balls, &lo, &hi);
    for (const auto& z : res.curve.nodes)
      for (int m = 0; m < M; ++m)
        if (z[m] <= lo[m] + 1e-12 || z[m] >= hi[m] - 1e-12)
          throw std::runtime_error("sigma_xi: cache box too small (curve reaches the boundary)");
  }
  res.curve = normalize_one_third(res.curve, balls);
  res.nodes = static_cast<int>(res.curve.size());
  return res;
}

}  // namespace twoscale
