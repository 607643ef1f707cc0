#include "twoscale/unfolding.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace twoscale {

namespace {

// Odometer over a product of ranges [0, count[a]).
struct Odometer {
  std::vector<std::int64_t> count, idx;
  bool done = false;
  explicit Odometer(std::vector<std::int64_t> c) : count(std::move(c)), idx(count.size(), 0) {
    for (auto v : count)
      if (v <= 0) done = true;
  }
  void next() {
    int a = static_cast<int>(count.size()) - 1;
    while (a >= 0 && ++idx[a] == count[a]) idx[a--] = 0;
    if (a < 0) done = true;
  }
};

std::int64_t ipow(std::int64_t b, int e) {
  std::int64_t r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

void unravel(std::int64_t lin, std::int64_t n, int N, std::int64_t* idx) {
  for (int a = N - 1; a >= 0; --a) {
    idx[a] = lin % n;
    lin /= n;
  }
}

}  // namespace

std::int64_t cells_per_scale(double scale, double h, const char* what) {
  if (!(scale > 0.0) || !(h > 0.0)) throw std::invalid_argument(std::string(what) + ": scales must be positive");
  const double r = scale / h;
  if (r < 1.0 - 1e-9) throw std::invalid_argument(std::string(what) + " is smaller than the grid spacing");
  const double n = std::round(r);
  if (std::abs(r - n) > 1e-7 * std::max(1.0, r))
    throw std::invalid_argument(std::string(what) + " is not an integer multiple of the grid spacing");
  return static_cast<std::int64_t>(n);
}

// ---------------------------------------------------------------- decomposition

std::int64_t DomainDecomposition::generator_count() const {
  std::int64_t n = 1;
  for (auto c : xi_count) n *= c;
  return n;
}

std::vector<std::int64_t> DomainDecomposition::generator(std::int64_t lin) const {
  const int N = box.N;
  std::vector<std::int64_t> g(N);
  for (int a = N - 1; a >= 0; --a) {
    g[a] = xi_lo[a] + lin % xi_count[a];
    lin /= xi_count[a];
  }
  return g;
}

std::int64_t DomainDecomposition::interior_cells() const { return generator_count() * ipow(K, box.N); }

std::int64_t DomainDecomposition::remainder_cells() const { return box.size() - interior_cells(); }

DomainDecomposition decompose(const GridBox& box, double delta, const Lattice& lattice) {
  if (!lattice.is_unit() || lattice.dim() != box.N)
    throw std::invalid_argument("decompose: grid operations require the unit lattice");
  DomainDecomposition d;
  d.box = box;
  d.delta = delta;
  d.K = cells_per_scale(delta, box.h, "delta");
  const int N = box.N;
  d.xi_lo.resize(N);
  d.xi_count.resize(N);
  for (int a = 0; a < N; ++a) {
    // Closed delta-cells [K xi, K xi + K) fully inside [origin, origin + count).
    const std::int64_t first = -floor_div(-box.origin[a], d.K);
    const std::int64_t last = floor_div(box.origin[a] + box.count[a], d.K);
    d.xi_lo[a] = first;
    d.xi_count[a] = std::max<std::int64_t>(0, last - first);
  }
  d.interior.assign(static_cast<std::size_t>(box.size()), 0);
  const std::int64_t n = box.size();
  std::vector<std::int64_t> idx(N);
  for (std::int64_t c = 0; c < n; ++c) {
    box.unravel(c, idx.data());
    bool in = true;
    for (int a = 0; a < N && in; ++a) {
      const std::int64_t g = box.origin[a] + idx[a];
      in = g >= d.xi_lo[a] * d.K && g < (d.xi_lo[a] + d.xi_count[a]) * d.K;
    }
    d.interior[c] = in ? 1 : 0;
  }
  return d;
}

DomainDecomposition decompose(const GridBox& box, double delta) { return decompose(box, delta, Lattice::unit(box.N)); }

Eigen::VectorXd iota2(const Eigen::VectorXd& x, double delta, double eta) {
  if (!(delta > 0.0) || !(eta > 0.0)) throw std::invalid_argument("iota2: scales must be positive");
  Eigen::VectorXd r(x.size());
  for (int i = 0; i < x.size(); ++i) {
    double q = x[i] / delta;
    const double qr = std::round(q);
    q = std::abs(q - qr) < 1e-10 * std::max(1.0, std::abs(q)) ? qr : std::floor(q);
    const double t = (delta / eta) * q;
    double f = t - std::floor(t);
    const double tol = 1e-9 * std::max(1.0, std::abs(t));
    if (f < tol || 1.0 - f < tol) f = 0.0;
    r[i] = f;
  }
  return r;
}

// ---------------------------------------------------------------- unfolding

UnfoldedField unfold1(const GridField& u, double delta, const Eigen::VectorXd& fill) {
  if (fill.size() != u.M) throw std::invalid_argument("unfold1: fill has wrong dimension");
  UnfoldedField U;
  U.stage = 1;
  U.M = u.M;
  U.dec = decompose(u.box, delta);
  U.fill = fill;
  const int N = u.box.N;
  U.nodes1 = ipow(U.dec.K, N);
  U.nodes2 = 1;
  const std::int64_t G = U.dec.generator_count();
  U.values.resize(static_cast<std::size_t>(G * U.nodes1 * U.M));
  std::vector<std::int64_t> j(N), cell(N);
  for (std::int64_t g = 0; g < G; ++g) {
    const auto xi = U.dec.generator(g);
    for (std::int64_t jl = 0; jl < U.nodes1; ++jl) {
      unravel(jl, U.dec.K, N, j.data());
      for (int a = 0; a < N; ++a) cell[a] = xi[a] * U.dec.K + j[a] - u.box.origin[a];
      const double* src = u.at(u.box.linear(cell.data()));
      double* dst = U.at(g, jl, 0);
      for (int m = 0; m < U.M; ++m) dst[m] = src[m];
    }
  }
  return U;
}

UnfoldedField unfold2(const GridField& u, double delta, double eta, const Eigen::VectorXd& fill) {
  if (fill.size() != u.M) throw std::invalid_argument("unfold2: fill has wrong dimension");
  if (eta > delta * (1.0 + 1e-12)) throw std::invalid_argument("unfold2: requires eta <= delta");
  UnfoldedField U;
  U.stage = 2;
  U.M = u.M;
  U.dec = decompose(u.box, delta);
  U.eta = eta;
  U.k = cells_per_scale(eta, u.box.h, "eta");
  U.fill = fill;
  const int N = u.box.N;
  const std::int64_t K = U.dec.K, k = U.k;
  U.nodes1 = ipow(K, N);
  U.nodes2 = ipow(k, N);
  const std::int64_t G = U.dec.generator_count();
  U.values.resize(static_cast<std::size_t>(G * U.nodes1 * U.nodes2 * U.M));
  U.proper.assign(static_cast<std::size_t>(G * U.nodes1), 0);
  std::vector<std::int64_t> j(N), l(N), start(N), cell(N);
  for (std::int64_t g = 0; g < G; ++g) {
    const auto xi = U.dec.generator(g);
    for (std::int64_t jl = 0; jl < U.nodes1; ++jl) {
      unravel(jl, K, N, j.data());
      bool ok = true;
      for (int a = 0; a < N; ++a) {
        // eta-cell of the absolute lattice containing the point delta*xi + delta*y1.
        start[a] = k * floor_div(xi[a] * K + j[a], k);
        ok = ok && start[a] >= xi[a] * K && start[a] + k <= xi[a] * K + K;
      }
      U.proper[g * U.nodes1 + jl] = ok ? 1 : 0;
      for (std::int64_t ll = 0; ll < U.nodes2; ++ll) {
        double* dst = U.at(g, jl, ll);
        if (!ok) {
          for (int m = 0; m < U.M; ++m) dst[m] = fill[m];
          continue;
        }
        unravel(ll, k, N, l.data());
        for (int a = 0; a < N; ++a) cell[a] = start[a] + l[a] - u.box.origin[a];
        const double* src = u.at(u.box.linear(cell.data()));
        for (int m = 0; m < U.M; ++m) dst[m] = src[m];
      }
    }
  }
  return U;
}

UnfoldedField partial_unfold(const UnfoldedField& U1, double eta, const Eigen::VectorXd& fill) {
  if (U1.stage != 1) throw std::invalid_argument("partial_unfold: expects a first unfolding");
  const double delta = U1.dec.delta;
  if (eta > delta * (1.0 + 1e-12)) throw std::invalid_argument("partial_unfold: requires eta <= delta");
  UnfoldedField U;
  U.stage = 2;
  U.M = U1.M;
  U.dec = U1.dec;
  U.eta = eta;
  U.k = cells_per_scale(eta, U1.dec.box.h, "eta");
  U.fill = fill;
  const int N = U1.N();
  const std::int64_t K = U1.dec.K, k = U.k;
  U.nodes1 = U1.nodes1;
  U.nodes2 = ipow(k, N);
  const std::int64_t G = U1.dec.generator_count();
  U.values.resize(static_cast<std::size_t>(G * U.nodes1 * U.nodes2 * U.M));
  U.proper.assign(static_cast<std::size_t>(G * U.nodes1), 0);
  std::vector<std::int64_t> j(N), l(N), shift(N), start(N), node(N);
  Eigen::VectorXd x(N);
  for (std::int64_t g = 0; g < G; ++g) {
    const auto xi = U1.dec.generator(g);
    for (int a = 0; a < N; ++a) x[a] = (static_cast<double>(xi[a]) + 0.5) * delta;
    const Eigen::VectorXd io = iota2(x, delta, eta);
    for (int a = 0; a < N; ++a) {
      const double s = io[a] * static_cast<double>(k);
      shift[a] = static_cast<std::int64_t>(std::llround(s));
      if (std::abs(s - static_cast<double>(shift[a])) > 1e-6)
        throw std::invalid_argument("partial_unfold: mismatch vector is not grid-aligned");
    }
    for (std::int64_t jl = 0; jl < U.nodes1; ++jl) {
      unravel(jl, K, N, j.data());
      bool ok = true;
      for (int a = 0; a < N; ++a) {
        // y1-node offset of (eta/delta)(floor(delta y1/eta + iota) - iota).
        start[a] = k * floor_div(j[a] + shift[a], k) - shift[a];
        ok = ok && start[a] >= 0 && start[a] + k <= K;
      }
      U.proper[g * U.nodes1 + jl] = ok ? 1 : 0;
      for (std::int64_t ll = 0; ll < U.nodes2; ++ll) {
        double* dst = U.at(g, jl, ll);
        if (!ok) {
          for (int m = 0; m < U.M; ++m) dst[m] = fill[m];
          continue;
        }
        unravel(ll, k, N, l.data());
        std::int64_t nl = 0;
        for (int a = 0; a < N; ++a) nl = nl * K + (start[a] + l[a]);
        const double* src = U1.at(g, nl, 0);
        for (int m = 0; m < U.M; ++m) dst[m] = src[m];
      }
    }
  }
  return U;
}

// ---------------------------------------------------------------- integrals

Eigen::VectorXd unfolded_integral(const UnfoldedField& U) {
  const int N = U.N();
  const double w = std::pow(U.dec.delta, N) / static_cast<double>(U.nodes1 * U.nodes2);
  std::vector<CompensatedSum> acc(U.M);
  const std::size_t entries = U.values.size() / U.M;
  for (std::size_t e = 0; e < entries; ++e)
    for (int m = 0; m < U.M; ++m) acc[m].add(U.values[e * U.M + m]);
  Eigen::VectorXd r(U.M);
  const double lam = U.dec.remainder_measure();
  for (int m = 0; m < U.M; ++m) r[m] = acc[m].value() * w + lam * U.fill[m];
  return r;
}

double unfolded_potential_integral(const TwoScalePotential& p, const UnfoldedField& U) {
  if (U.stage != 2) throw std::invalid_argument("unfolded_potential_integral: expects a second unfolding");
  const int N = U.N();
  if (p.N() != N || p.M() != U.M) throw std::invalid_argument("unfolded_potential_integral: dimension mismatch");
  const std::int64_t K = U.dec.K, k = U.k;
  const double w = std::pow(U.dec.delta, N) / static_cast<double>(U.nodes1 * U.nodes2);
  std::vector<std::int64_t> j(N), l(N);
  std::vector<double> t1(N), t2(N);
  CompensatedSum acc;
  const std::int64_t G = U.dec.generator_count();
  for (std::int64_t g = 0; g < G; ++g)
    for (std::int64_t jl = 0; jl < U.nodes1; ++jl) {
      unravel(jl, K, N, j.data());
      for (int a = 0; a < N; ++a) t1[a] = (static_cast<double>(j[a]) + 0.5) / static_cast<double>(K);
      for (std::int64_t ll = 0; ll < U.nodes2; ++ll) {
        unravel(ll, k, N, l.data());
        for (int a = 0; a < N; ++a) t2[a] = (static_cast<double>(l[a]) + 0.5) / static_cast<double>(k);
        acc.add(p.value_cell(t1.data(), t2.data(), U.at(g, jl, ll)));
      }
    }
  // Boundary sets carry the fill; their contribution is the cell average of W at the fill.
  double fill_avg = 0.0;
  if (U.dec.remainder_cells() > 0) {
    const Vec f = U.fill;
    fill_avg = homogenize(p, f, 16, 16);
  }
  return acc.value() * w + U.dec.remainder_measure() * fill_avg;
}

UnfoldedField unfolded_product(const UnfoldedField& A, const UnfoldedField& B) {
  if (A.values.size() != B.values.size() || A.stage != B.stage)
    throw std::invalid_argument("unfolded_product: layout mismatch");
  UnfoldedField C = A;
  for (std::size_t i = 0; i < C.values.size(); ++i) C.values[i] = A.values[i] * B.values[i];
  for (int m = 0; m < C.M; ++m) C.fill[m] = A.fill[m] * B.fill[m];
  return C;
}

GridField field_product(const GridField& v, const GridField& w) {
  if (!v.box.same_as(w.box) || v.M != w.M) throw std::invalid_argument("field_product: layout mismatch");
  GridField r = v;
  for (std::size_t i = 0; i < r.values.size(); ++i) r.values[i] = v.values[i] * w.values[i];
  return r;
}

std::vector<std::uint8_t> image_mask1(const GridBox& box, double delta) { return decompose(box, delta).interior; }

std::vector<std::uint8_t> image_mask2(const GridBox& box, double delta, double eta) {
  const DomainDecomposition d = decompose(box, delta);
  const std::int64_t K = d.K, k = cells_per_scale(eta, box.h, "eta");
  const int N = box.N;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(box.size()), 0);
  std::vector<std::int64_t> idx(N);
  for (std::int64_t c = 0; c < box.size(); ++c) {
    if (!d.interior[c]) continue;
    box.unravel(c, idx.data());
    bool ok = true;
    for (int a = 0; a < N && ok; ++a) {
      const std::int64_t g = box.origin[a] + idx[a];
      const std::int64_t cell_lo = floor_div(g, K) * K;
      const std::int64_t eta_lo = floor_div(g, k) * k;
      ok = eta_lo >= cell_lo && eta_lo + k <= cell_lo + K;
    }
    mask[c] = ok ? 1 : 0;
  }
  return mask;
}

Eigen::VectorXd masked_integral(const GridField& u, const std::vector<std::uint8_t>& mask, bool inside, bool absolute) {
  std::vector<CompensatedSum> acc(u.M);
  for (std::int64_t c = 0; c < u.cells(); ++c) {
    if ((mask[c] != 0) != inside) continue;
    for (int m = 0; m < u.M; ++m) acc[m].add(absolute ? std::abs(u.at(c)[m]) : u.at(c)[m]);
  }
  Eigen::VectorXd r(u.M);
  for (int m = 0; m < u.M; ++m) r[m] = acc[m].value() * u.box.cell_volume();
  return r;
}

// ---------------------------------------------------------------- gradients

GridField forward_difference(const GridField& u, int axis) {
  const GridBox& b = u.box;
  if (axis < 0 || axis >= b.N || b.count[axis] < 2) throw std::invalid_argument("forward_difference: bad axis");
  GridField r(b, u.M);
  r.a = u.a;
  r.b = u.b;
  const std::int64_t s = b.stride(axis);
  std::vector<std::int64_t> idx(b.N);
  for (std::int64_t c = 0; c < b.size(); ++c) {
    b.unravel(c, idx.data());
    const bool last = idx[axis] == b.count[axis] - 1;
    const std::int64_t lo = last ? c - s : c, hi = last ? c : c + s;
    for (int m = 0; m < u.M; ++m) r.at(c)[m] = (u.at(hi)[m] - u.at(lo)[m]) / b.h;
  }
  return r;
}

UnfoldedField y1_forward_difference(const UnfoldedField& U1, int axis) {
  if (U1.stage != 1) throw std::invalid_argument("y1_forward_difference: expects a first unfolding");
  const int N = U1.N();
  const std::int64_t K = U1.dec.K;
  UnfoldedField D = U1;
  std::fill(D.values.begin(), D.values.end(), 0.0);
  D.fill.setZero();
  std::int64_t s = 1;
  for (int a = N - 1; a > axis; --a) s *= K;
  std::vector<std::int64_t> j(N);
  const std::int64_t G = U1.dec.generator_count();
  for (std::int64_t g = 0; g < G; ++g)
    for (std::int64_t jl = 0; jl < U1.nodes1; ++jl) {
      unravel(jl, K, N, j.data());
      if (j[axis] >= K - 1) continue;
      for (int m = 0; m < U1.M; ++m)
        D.at(g, jl, 0)[m] = (U1.at(g, jl + s, 0)[m] - U1.at(g, jl, 0)[m]) * static_cast<double>(K);
    }
  return D;
}

// ---------------------------------------------------------------- defect norms

DefectNorms defect_norms(const GridField& u, double delta, double eta, const Eigen::VectorXd& fill) {
  if (fill.size() != u.M) throw std::invalid_argument("defect_norms: fill has wrong dimension");
  const GridBox& b = u.box;
  const int N = b.N, M = u.M;
  const DomainDecomposition d = decompose(b, delta);
  const std::int64_t K = d.K, k = cells_per_scale(eta, b.h, "eta");
  if (k > K) throw std::invalid_argument("defect_norms: requires eta <= delta");
  const double hv = b.cell_volume();
  CompensatedSum s1, s2;

  // Boundary set Lambda: U1 u = fill, U2 u = fill.
  for (std::int64_t c = 0; c < b.size(); ++c) {
    if (d.interior[c]) continue;
    for (int m = 0; m < M; ++m) {
      const double e = fill[m] - u.at(c)[m];
      s1.add(hv * e * e);
    }
  }

  auto cell_of = [&](const std::vector<std::int64_t>& abs_idx) {
    std::int64_t l = 0;
    for (int a = 0; a < N; ++a) l = l * b.count[a] + (abs_idx[a] - b.origin[a]);
    return l;
  };

  const std::int64_t G = d.generator_count();
  std::vector<double> mean(M);
  std::vector<std::int64_t> abs_idx(N);
  for (std::int64_t g = 0; g < G; ++g) {
    const auto xi = d.generator(g);
    // First defect: 2 h^N sum |u_i - mean|^2 over the delta-cell.
    std::fill(mean.begin(), mean.end(), 0.0);
    std::vector<std::int64_t> Kc(N, K);
    for (Odometer o(Kc); !o.done; o.next()) {
      for (int a = 0; a < N; ++a) abs_idx[a] = xi[a] * K + o.idx[a];
      const double* v = u.at(cell_of(abs_idx));
      for (int m = 0; m < M; ++m) mean[m] += v[m];
    }
    const double nk = static_cast<double>(ipow(K, N));
    for (double& m : mean) m /= nk;
    for (Odometer o(Kc); !o.done; o.next()) {
      for (int a = 0; a < N; ++a) abs_idx[a] = xi[a] * K + o.idx[a];
      const double* v = u.at(cell_of(abs_idx));
      double e2 = 0.0;
      for (int m = 0; m < M; ++m) e2 += (v[m] - mean[m]) * (v[m] - mean[m]);
      s1.add(2.0 * hv * e2);
    }

    // Second defect: proper eta-cells contribute 2 h^N times their variance sum, other nodes |fill - u|^2.
    std::vector<std::int64_t> first(N), count(N);
    for (int a = 0; a < N; ++a) {
      const std::int64_t lo = xi[a] * K, hi = lo + K;
      first[a] = -floor_div(-lo, k);
      count[a] = std::max<std::int64_t>(0, floor_div(hi, k) - first[a]);
    }
    std::vector<std::int64_t> kc(N, k);
    for (Odometer oc(count); !oc.done; oc.next()) {
      std::fill(mean.begin(), mean.end(), 0.0);
      for (Odometer ol(kc); !ol.done; ol.next()) {
        for (int a = 0; a < N; ++a) abs_idx[a] = (first[a] + oc.idx[a]) * k + ol.idx[a];
        const double* v = u.at(cell_of(abs_idx));
        for (int m = 0; m < M; ++m) mean[m] += v[m];
      }
      const double nl = static_cast<double>(ipow(k, N));
      for (double& m : mean) m /= nl;
      for (Odometer ol(kc); !ol.done; ol.next()) {
        for (int a = 0; a < N; ++a) abs_idx[a] = (first[a] + oc.idx[a]) * k + ol.idx[a];
        const double* v = u.at(cell_of(abs_idx));
        double e2 = 0.0;
        for (int m = 0; m < M; ++m) e2 += (v[m] - mean[m]) * (v[m] - mean[m]);
        s2.add(2.0 * hv * e2);
      }
    }
    bool any_improper = false;
    for (int a = 0; a < N; ++a) any_improper = any_improper || count[a] * k != K;
    if (any_improper) {
      for (Odometer o(Kc); !o.done; o.next()) {
        bool proper = true;
        for (int a = 0; a < N; ++a) {
          const std::int64_t gidx = xi[a] * K + o.idx[a];
          const std::int64_t ec = floor_div(gidx, k);
          proper = proper && ec >= first[a] && ec < first[a] + count[a];
        }
        if (proper) continue;
        for (int a = 0; a < N; ++a) abs_idx[a] = xi[a] * K + o.idx[a];
        const double* v = u.at(cell_of(abs_idx));
        double e2 = 0.0;
        for (int m = 0; m < M; ++m) e2 += (fill[m] - v[m]) * (fill[m] - v[m]);
        s2.add(hv * e2);
      }
    }
  }
  DefectNorms r;
  r.d1 = std::sqrt(std::max(0.0, s1.value()));
  r.d2 = std::sqrt(std::max(0.0, s2.value()));
  return r;
}

}  // namespace twoscale
