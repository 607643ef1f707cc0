#include "twoscale/cell_problem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "twoscale/parallel.hpp"

namespace twoscale {

namespace {

std::int64_t ipow(int base, int e) {
  std::int64_t r = 1;
  for (int i = 0; i < e; ++i) r *= base;
  return r;
}

// Node coordinates (j + 1/2)/R on [0,1)^N, row-major with the last axis fastest.
std::vector<double> node_coords(int N, int R) {
  const std::int64_t n = ipow(R, N);
  std::vector<double> t(static_cast<std::size_t>(n * N));
  for (std::int64_t j = 0; j < n; ++j) {
    std::int64_t r = j;
    for (int a = N - 1; a >= 0; --a) {
      t[j * N + a] = (static_cast<double>(r % R) + 0.5) / R;
      r /= R;
    }
  }
  return t;
}

// Weighted node table: W(node, z) = sum_k w[node][k] * base_k(z).
struct NodeTable {
  int N = 1, M = 1, R1 = 1, R2 = 1;
  std::int64_t n1 = 1, n2 = 1;
  int K = 1;
  std::vector<double> w;                       // [n1*n2][K]
  std::vector<const BasePotential*> bases;     // size K

  NodeTable(const TwoScalePotential& p, const CellGrid& g) : N(p.N()), M(p.M()), R1(g.R1), R2(g.R2) {
    if (g.R1 < 2 || g.R2 < 2) throw std::invalid_argument("cell grid: at least 2 nodes per axis");
    n1 = ipow(R1, N);
    n2 = ipow(R2, N);
    const auto t1 = node_coords(N, R1), t2 = node_coords(N, R2);
    if (p.has_common_shape()) {
      K = 1;
      bases = {&p.shape()};
      w.resize(static_cast<std::size_t>(n1 * n2));
      for (std::int64_t j = 0; j < n1; ++j)
        for (std::int64_t l = 0; l < n2; ++l) w[j * n2 + l] = p.coefficient(&t1[j * N], &t2[l * N]);
    } else {
      K = p.components();
      for (int k = 0; k < K; ++k) bases.push_back(&p.base(k));
      w.resize(static_cast<std::size_t>(n1 * n2 * K));
      for (std::int64_t j = 0; j < n1; ++j)
        for (std::int64_t l = 0; l < n2; ++l) p.weights(&t1[j * N], &t2[l * N], &w[(j * n2 + l) * K]);
    }
  }

  double value(std::int64_t node, const double* u) const {
    double s = 0.0;
    for (int k = 0; k < K; ++k) {
      const double wk = w[node * K + k];
      if (wk != 0.0) s += wk * bases[k]->value(u);
    }
    return s;
  }

  double value_grad(std::int64_t node, const double* u, double* g, double* scratch) const {
    double s = 0.0;
    for (int m = 0; m < M; ++m) g[m] = 0.0;
    for (int k = 0; k < K; ++k) {
      const double wk = w[node * K + k];
      if (wk == 0.0) continue;
      s += wk * bases[k]->value(u);
      bases[k]->gradient(u, scratch);
      for (int m = 0; m < M; ++m) g[m] += wk * scratch[m];
    }
    return s;
  }
};

struct Problem {
  const NodeTable& T;
  Eigen::VectorXd z;
  double xi;
  double sup;

  double objective(const Perturbations& q) const {
    const int M = T.M;
    std::vector<double> u(M);
    double s = 0.0;
    for (std::int64_t j = 0; j < T.n1; ++j) {
      double row = 0.0;
      for (std::int64_t l = 0; l < T.n2; ++l) {
        const std::int64_t node = j * T.n2 + l;
        for (int m = 0; m < M; ++m) u[m] = z[m] + q.psi1[j * M + m] + q.psi2[node * M + m];
        row += T.value(node, u.data());
      }
      s += row;
    }
    return s / static_cast<double>(T.n1 * T.n2);
  }

  // L2-gradients of the objective in psi1 and psi2.
  double gradients(const Perturbations& q, std::vector<double>& g1, std::vector<double>& g2) const {
    const int M = T.M;
    std::vector<double> u(M), g(M), scratch(M);
    g1.assign(q.psi1.size(), 0.0);
    g2.assign(q.psi2.size(), 0.0);
    double s = 0.0;
    for (std::int64_t j = 0; j < T.n1; ++j)
      for (std::int64_t l = 0; l < T.n2; ++l) {
        const std::int64_t node = j * T.n2 + l;
        for (int m = 0; m < M; ++m) u[m] = z[m] + q.psi1[j * M + m] + q.psi2[node * M + m];
        s += T.value_grad(node, u.data(), g.data(), scratch.data());
        for (int m = 0; m < M; ++m) {
          g2[node * M + m] = g[m];
          g1[j * M + m] += g[m] / static_cast<double>(T.n2);
        }
      }
    return s / static_cast<double>(T.n1 * T.n2);
  }
};

// Discrete W^{1,2} seminorm of a block of R^N nodes with spacing 1/R.
double grad_norm(const double* v, int N, int R, int M) {
  const std::int64_t n = ipow(R, N);
  double s = 0.0;
  for (int a = 0; a < N; ++a) {
    const std::int64_t stride = ipow(R, N - 1 - a);
    for (std::int64_t j = 0; j < n; ++j) {
      if ((j / stride) % R == R - 1) continue;
      for (int m = 0; m < M; ++m) {
        const double d = (v[(j + stride) * M + m] - v[j * M + m]) * R;
        s += d * d;
      }
    }
  }
  return std::sqrt(s / static_cast<double>(n));
}

double l2_norm(const double* v, std::int64_t n, int M) {
  double s = 0.0;
  for (std::int64_t i = 0; i < n * M; ++i) s += v[i] * v[i];
  return std::sqrt(s / static_cast<double>(n));
}

// Gradient constraint: rescale the oscillation around the block mean.
void retract_gradient(double* v, int N, int R, int M) {
  const double g = grad_norm(v, N, R, M);
  if (g <= 1.0) return;
  const std::int64_t n = ipow(R, N);
  const double s = 1.0 / g;
  for (int m = 0; m < M; ++m) {
    double mean = 0.0;
    for (std::int64_t j = 0; j < n; ++j) mean += v[j * M + m];
    mean /= static_cast<double>(n);
    for (std::int64_t j = 0; j < n; ++j) v[j * M + m] = mean + s * (v[j * M + m] - mean);
  }
}

void retract_l2(double* v, std::int64_t n, int M, double xi) {
  const double nv = l2_norm(v, n, M);
  if (nv <= xi) return;
  const double s = nv > 0.0 ? xi / nv : 0.0;
  for (std::int64_t i = 0; i < n * M; ++i) v[i] *= s;
}

void retract_sup(double* v, std::int64_t n, int M, double sup) {
  for (std::int64_t j = 0; j < n; ++j) {
    double r = 0.0;
    for (int m = 0; m < M; ++m) r += v[j * M + m] * v[j * M + m];
    r = std::sqrt(r);
    if (r > sup)
      for (int m = 0; m < M; ++m) v[j * M + m] *= sup / r;
  }
}

void retract_psi1(std::vector<double>& psi1, const NodeTable& T, double xi, double sup) {
  retract_gradient(psi1.data(), T.N, T.R1, T.M);
  retract_l2(psi1.data(), T.n1, T.M, xi);
  retract_sup(psi1.data(), T.n1, T.M, sup);
}

void retract_psi2(std::vector<double>& psi2, const NodeTable& T, double xi, double sup) {
  for (std::int64_t j = 0; j < T.n1; ++j) retract_gradient(psi2.data() + j * T.n2 * T.M, T.N, T.R2, T.M);
  retract_l2(psi2.data(), T.n1 * T.n2, T.M, xi);
  retract_sup(psi2.data(), T.n1 * T.n2, T.M, sup);
}

double mean_dot(const std::vector<double>& g, const std::vector<double>& d, std::int64_t nodes) {
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * d[i];
  return s / static_cast<double>(nodes);
}

constexpr std::size_t kStallWindow = 25;

struct Descent {
  Perturbations psi;
  double value = 0.0;
  int iterations = 0;
  double step_norm = 0.0;
  bool converged = false;
  std::vector<double> trace;
};

Descent descend(const Problem& P, Perturbations q, const CellSolverOptions& opts) {
  const NodeTable& T = P.T;
  retract_psi1(q.psi1, T, P.xi, P.sup);
  retract_psi2(q.psi2, T, P.xi, P.sup);
  Descent d;
  double J = P.objective(q);
  d.trace.push_back(J);
  std::vector<double> g1, g2;
  double s1 = 0.1, s2 = 0.1;
  for (int it = 0; it < opts.max_iter && J > 0.0; ++it) {
    bool moved = false;
    for (int block = 0; block < 2; ++block) {
      P.gradients(q, g1, g2);
      std::vector<double>& psi = block == 0 ? q.psi1 : q.psi2;
      const std::vector<double>& g = block == 0 ? g1 : g2;
      const std::int64_t nodes = block == 0 ? T.n1 : T.n1 * T.n2;
      double& s = block == 0 ? s1 : s2;
      s = std::min(s * 2.0, 1e3);
      for (int ls = 0; ls < 40; ++ls, s *= 0.5) {
        Perturbations trial = q;
        std::vector<double>& tp = block == 0 ? trial.psi1 : trial.psi2;
        for (std::size_t i = 0; i < tp.size(); ++i) tp[i] -= s * g[i];
        if (block == 0)
          retract_psi1(trial.psi1, T, P.xi, P.sup);
        else
          retract_psi2(trial.psi2, T, P.xi, P.sup);
        std::vector<double> diff(tp.size());
        for (std::size_t i = 0; i < tp.size(); ++i) diff[i] = psi[i] - tp[i];
        const double dec = mean_dot(g, diff, nodes);
        if (dec <= 0.0) continue;
        const double Jt = P.objective(trial);
        if (Jt <= J - opts.armijo * dec) {
          d.step_norm = l2_norm(diff.data(), nodes, T.M);
          q = std::move(trial);
          J = Jt;
          moved = true;
          break;
        }
      }
    }
    d.iterations = it + 1;
    d.trace.push_back(J);
    // Long trial steps can leave a plateau, so stalls are judged over a window of sweeps.
    const std::size_t n = d.trace.size();
    const bool stalled = n > kStallWindow && d.trace[n - 1 - kStallWindow] - J < opts.tol;
    if (!moved || stalled) {
      d.converged = true;
      break;
    }

  }
  if (J <= 0.0) d.converged = true;
  d.psi = std::move(q);
  d.value = J;
  return d;
}

Perturbations constant_shift(const NodeTable& T, const Eigen::VectorXd& z, const Eigen::VectorXd& target,
                             double xi) {
  Perturbations q;
  q.psi1.assign(static_cast<std::size_t>(T.n1 * T.M), 0.0);
  q.psi2.assign(static_cast<std::size_t>(T.n1 * T.n2 * T.M), 0.0);
  const Eigen::VectorXd d = target - z;
  const double len = d.norm();
  if (len == 0.0) return q;
  const double half = 0.5 * std::min(2.0 * xi, len);
  for (std::int64_t j = 0; j < T.n1; ++j)
    for (int m = 0; m < T.M; ++m) q.psi1[j * T.M + m] = half * d[m] / len;
  for (std::int64_t j = 0; j < T.n1 * T.n2; ++j)
    for (int m = 0; m < T.M; ++m) q.psi2[j * T.M + m] = half * d[m] / len;
  return q;
}

}  // namespace

PerturbationNorms perturbation_norms(const Perturbations& psi, int N, int M, const CellGrid& grid) {
  PerturbationNorms r;
  const std::int64_t n1 = ipow(grid.R1, N), n2 = ipow(grid.R2, N);
  r.psi1_l2 = l2_norm(psi.psi1.data(), n1, M);
  r.psi1_grad = grad_norm(psi.psi1.data(), N, grid.R1, M);
  r.psi2_l2 = l2_norm(psi.psi2.data(), n1 * n2, M);
  for (std::int64_t j = 0; j < n1; ++j)
    r.psi2_grad_max = std::max(r.psi2_grad_max, grad_norm(psi.psi2.data() + j * n2 * M, N, grid.R2, M));
  auto sup_of = [M](const std::vector<double>& v) {
    double s = 0.0;
    for (std::size_t j = 0; j + M <= v.size(); j += M) {
      double q = 0.0;
      for (int m = 0; m < M; ++m) q += v[j + m] * v[j + m];
      s = std::max(s, std::sqrt(q));
    }
    return s;
  };
  r.sup = std::max(sup_of(psi.psi1), sup_of(psi.psi2));
  return r;
}

double cell_objective(const TwoScalePotential& p, const Eigen::VectorXd& z, const Perturbations& psi,
                      const CellGrid& grid) {
  NodeTable T(p, grid);
  Problem P{T, z, 0.0, 0.0};
  return P.objective(psi);
}

CellSolution solve_W_xi(const TwoScalePotential& p, const Eigen::VectorXd& z, double xi, const CellGrid& grid,
                        const CellSolverOptions& opts, const Perturbations* warm) {
  if (!(xi >= 0.0)) throw std::invalid_argument("solve_W_xi: xi must be nonnegative");
  if (z.size() != p.M()) throw std::invalid_argument("solve_W_xi: z has the wrong dimension");
  NodeTable T(p, grid);
  const double sup_M = opts.sup_M > 0.0 ? opts.sup_M : p.growth_R() + z.norm() + 1.0;
  const double sup = sup_M - 0.5 * z.norm();
  if (!(sup > 0.0)) throw std::invalid_argument("solve_W_xi: truncation level M must exceed |z|/2");
  Problem P{T, z, xi, sup};

  std::vector<Perturbations> starts;
  starts.push_back(constant_shift(T, z, z, xi));
  if (warm) {
    if (warm->psi1.size() != starts[0].psi1.size() || warm->psi2.size() != starts[0].psi2.size())
      throw std::invalid_argument("solve_W_xi: warm start has the wrong layout");
    starts.push_back(*warm);
  }
  if (opts.multi_start && xi > 0.0) {
    starts.push_back(constant_shift(T, z, p.a(), xi));
    starts.push_back(constant_shift(T, z, p.b(), xi));
  }

  CellSolution best;
  best.value = std::numeric_limits<double>::infinity();
  for (auto& s : starts) {
    Descent d = descend(P, std::move(s), opts);
    if (d.value < best.value) {
      best.value = d.value;
      best.psi = std::move(d.psi);
      best.iterations = d.iterations;
      best.step_norm = d.step_norm;
      best.converged = d.converged;
      best.trace = std::move(d.trace);
    }
    if (best.value == 0.0) break;
  }
  const auto nr = perturbation_norms(best.psi, T.N, T.M, grid);
  const double slack = 1e-10;
  best.feasible = nr.psi1_l2 <= xi + slack && nr.psi2_l2 <= xi + slack && nr.psi1_grad <= 1.0 + slack &&
                  nr.psi2_grad_max <= 1.0 + slack && nr.sup <= sup + slack;
  return best;
}

ZeroSetRadius zero_set_radius(const TwoScalePotential& p, double xi, const CellGrid& grid,
                              const CellSolverOptions& opts, double zero_tol, int bisections) {
  ZeroSetRadius out;
  if (xi <= 0.0) return out;
  const int M = p.M();
  const double reach = 0.5 * (p.b() - p.a()).norm();
  auto radius_from = [&](const Eigen::VectorXd& well) {
    double r_min = std::numeric_limits<double>::infinity();
    for (int dir = 0; dir < 2 * M; ++dir) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(M);
      e[dir / 2] = dir % 2 == 0 ? 1.0 : -1.0;
      auto is_zero = [&](double r) { return solve_W_xi(p, well + r * e, xi, grid, opts).value <= zero_tol; };
      double lo = 0.0, hi = reach;
      if (is_zero(hi)) {
        r_min = std::min(r_min, hi);
        continue;
      }
      for (int it = 0; it < bisections; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (is_zero(mid))
          lo = mid;
        else
          hi = mid;
      }
      r_min = std::min(r_min, lo);
    }
    return r_min;
  };
  out.r_a = radius_from(p.a());
  out.r_b = radius_from(p.b());
  return out;
}

ConvergenceTable convergence_scan(const TwoScalePotential& p, const std::vector<Eigen::VectorXd>& z,
                                  const std::vector<double>& ladder, const CellGrid& grid,
                                  const CellSolverOptions& opts) {
  for (std::size_t i = 1; i < ladder.size(); ++i)
    if (!(ladder[i] < ladder[i - 1])) throw std::invalid_argument("convergence_scan: ladder must strictly decrease");
  if (!ladder.empty() && ladder.back() < 0.0) throw std::invalid_argument("convergence_scan: negative xi");
  ConvergenceTable t;
  t.xi = ladder;
  t.z = z;
  const std::size_t rows = ladder.size(), cols = z.size();
  t.value.assign(rows, std::vector<double>(cols, 0.0));
  t.iterations.assign(rows, std::vector<int>(cols, 0));
  t.feasible.assign(rows, std::vector<std::uint8_t>(cols, 0));
  t.W_h.assign(cols, 0.0);
  parallel_for(static_cast<std::int64_t>(cols), [&](std::int64_t k) {
    NodeTable T(p, grid);
    Problem P{T, z[k], 0.0, 0.0};
    t.W_h[k] = P.objective(constant_shift(T, z[k], z[k], 0.0));
    Perturbations prev;
    bool have = false;
    for (std::size_t r = rows; r-- > 0;) {
      CellSolution s = solve_W_xi(p, z[k], ladder[r], grid, opts, have ? &prev : nullptr);
      t.value[r][k] = s.value;
      t.iterations[r][k] = s.iterations;
      t.feasible[r][k] = s.feasible ? 1 : 0;
      prev = std::move(s.psi);
      have = true;
    }
  });
  t.sup_gap.assign(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < cols; ++k) {
      t.sup_gap[r] = std::max(t.sup_gap[r], t.W_h[k] - t.value[r][k]);
      if (r > 0 && t.value[r][k] < t.value[r - 1][k] - 2.0 * opts.tol) ++t.monotone_violations;
    }
  return t;
}

CellCache::CellCache(Eigen::VectorXd lo, Eigen::VectorXd hi, int nodes, double xi)
    : lo_(std::move(lo)), hi_(std::move(hi)), nodes_(nodes), xi_(xi) {
  if (nodes < 2) throw std::invalid_argument("CellCache: at least 2 nodes per axis");
  if (lo_.size() != hi_.size() || lo_.size() == 0) throw std::invalid_argument("CellCache: box dimension mismatch");
  for (int m = 0; m < lo_.size(); ++m)
    if (!(hi_[m] > lo_[m])) throw std::invalid_argument("CellCache: empty box");
  values.assign(static_cast<std::size_t>(size()), 0.0);
}

std::int64_t CellCache::size() const { return ipow(nodes_, M()); }

Eigen::VectorXd CellCache::node(std::int64_t lin) const {
  const int M = this->M();
  Eigen::VectorXd z(M);
  for (int m = M - 1; m >= 0; --m) {
    const std::int64_t i = lin % nodes_;
    lin /= nodes_;
    z[m] = lo_[m] + (hi_[m] - lo_[m]) * static_cast<double>(i) / (nodes_ - 1);
  }
  return z;
}

bool CellCache::contains(const double* z) const {
  for (int m = 0; m < M(); ++m)
    if (z[m] < lo_[m] - 1e-12 || z[m] > hi_[m] + 1e-12) return false;
  return true;
}

double CellCache::operator()(const double* z) const {
  const int M = this->M();
  std::vector<std::int64_t> i0(M);
  std::vector<double> f(M);
  for (int m = 0; m < M; ++m) {
    const double s = (z[m] - lo_[m]) / (hi_[m] - lo_[m]) * (nodes_ - 1);
    const double c = std::clamp(s, 0.0, static_cast<double>(nodes_ - 1));
    std::int64_t k = static_cast<std::int64_t>(std::floor(c));
    if (k >= nodes_ - 1) k = nodes_ - 2;
    i0[m] = k;
    f[m] = c - static_cast<double>(k);
  }
  double out = 0.0;
  for (int corner = 0; corner < (1 << M); ++corner) {
    double w = 1.0;
    std::int64_t lin = 0;
    for (int m = 0; m < M; ++m) {
      const int bit = (corner >> m) & 1;
      w *= bit ? f[m] : 1.0 - f[m];
      lin = lin * nodes_ + i0[m] + bit;
    }
    if (w != 0.0) out += w * values[static_cast<std::size_t>(lin)];
  }
  return out;
}

CellCache build_cell_cache(const TwoScalePotential& p, double xi, const Eigen::VectorXd& lo,
                           const Eigen::VectorXd& hi, int nodes, const CellGrid& grid,
                           const CellSolverOptions& opts, const CellCache* warm) {
  if (lo.size() != p.M()) throw std::invalid_argument("build_cell_cache: box dimension mismatch");
  CellCache c(lo, hi, nodes, xi);
  c.a = p.a();
  c.b = p.b();
  if (warm && (warm->size() != c.size() || warm->solutions.size() != static_cast<std::size_t>(c.size())))
    throw std::invalid_argument("build_cell_cache: warm cache has a different lattice");
  c.solutions.resize(static_cast<std::size_t>(c.size()));
  parallel_for(c.size(), [&](std::int64_t i) {
    CellSolution s = solve_W_xi(p, c.node(i), xi, grid, opts, warm ? &warm->solutions[i] : nullptr);
    c.values[i] = s.value;
    c.solutions[i] = std::move(s.psi);
  });
  return c;
}

std::vector<CellCache> build_cache_ladder(const TwoScalePotential& p, const std::vector<double>& ladder,
                                          const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, int nodes,
                                          const CellGrid& grid, const CellSolverOptions& opts) {
  std::vector<std::size_t> order(ladder.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return ladder[x] < ladder[y]; });
  std::vector<CellCache> out(ladder.size());
  const CellCache* prev = nullptr;
  for (std::size_t i : order) {
    out[i] = build_cell_cache(p, ladder[i], lo, hi, nodes, grid, opts, prev);
    prev = &out[i];
  }
  return out;
}

}  // namespace twoscale
