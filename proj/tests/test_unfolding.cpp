#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "twoscale/potentials.hpp"
#include "twoscale/unfolding.hpp"

using namespace twoscale;

namespace {

Eigen::VectorXd vec1(double x) { return Eigen::VectorXd::Constant(1, x); }

GridField random_field(const GridBox& box, int M, unsigned seed) {
  GridField f(box, M);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(-1.5, 1.5);
  for (double& v : f.values) v = ud(rng);
  return f;
}

GridBox box1(std::int64_t n) { return GridBox::unit_domain(1, n); }

GridBox box2(std::int64_t n0, std::int64_t n1, double h) {
  GridBox b;
  b.N = 2;
  b.origin = {0, 0};
  b.count = {n0, n1};
  b.h = h;
  return b;
}

// Brute-force defect norms from materialized unfoldings.
DefectNorms brute_defects(const GridField& u, double delta, double eta, const Eigen::VectorXd& fill) {
  const UnfoldedField U1 = unfold1(u, delta, fill);
  const UnfoldedField U2 = unfold2(u, delta, eta, fill);
  const GridBox& b = u.box;
  const int N = b.N, M = u.M;
  const std::int64_t K = U1.dec.K;
  const double hv = b.cell_volume();
  double s1 = 0.0, s2 = 0.0;
  std::vector<std::int64_t> idx(N);
  for (std::int64_t c = 0; c < b.size(); ++c) {
    if (!U1.dec.interior[c]) {
      for (int m = 0; m < M; ++m) s1 += hv * std::pow(fill[m] - u.at(c)[m], 2);
      continue;
    }
    b.unravel(c, idx.data());
    std::int64_t g = 0;
    for (int a = 0; a < N; ++a) g = g * U1.dec.xi_count[a] + ((b.origin[a] + idx[a]) / K - U1.dec.xi_lo[a]);
    for (std::int64_t j = 0; j < U1.nodes1; ++j) {
      for (int m = 0; m < M; ++m) s1 += hv / U1.nodes1 * std::pow(U1.at(g, j, 0)[m] - u.at(c)[m], 2);
      for (std::int64_t l = 0; l < U2.nodes2; ++l)
        for (int m = 0; m < M; ++m)
          s2 += hv / (U1.nodes1 * U2.nodes2) * std::pow(U2.at(g, j, l)[m] - U1.at(g, j, 0)[m], 2);
    }
  }
  return {std::sqrt(s1), std::sqrt(s2)};
}

}  // namespace

TEST_CASE("decompose: exact tiling and remainder") {
  auto d = decompose(box1(64), 0.25);
  CHECK(d.generator_count() == 4);
  CHECK(d.remainder_cells() == 0);
  for (int g = 0; g < 4; ++g) CHECK(d.generator(g)[0] == g);

  // Oracle: direct enumeration of closed cells [0.3 xi, 0.3 xi + 0.3] inside [0, 1].
  auto e = decompose(box1(100), 0.3);
  int expect = 0;
  for (int xi = 0; xi < 10; ++xi)
    if (0.3 * xi + 0.3 <= 1.0 + 1e-12) ++expect;
  CHECK(e.generator_count() == expect);
  CHECK(expect == 3);
  CHECK(e.remainder_cells() == 10);
  for (int c = 0; c < 100; ++c) CHECK(e.interior[c] == (c < 90 ? 1 : 0));
  CHECK(e.remainder_measure() == doctest::Approx(0.1));

  auto f = decompose(GridBox::unit_domain(2, 64), 0.25);
  CHECK(f.generator_count() == 16);
  CHECK(f.remainder_cells() == 0);

  CHECK_THROWS(decompose(box1(10), 0.05));
  CHECK_THROWS(decompose(box1(100), 0.035));
}

TEST_CASE("iota2 examples") {
  CHECK(iota2(vec1(0.77), 0.25, 0.05)[0] == 0.0);
  // Direct formula: {(0.3/0.1) * floor(0.35/0.3)} = {3} = 0.
  CHECK(iota2(vec1(0.35), 0.3, 0.1)[0] == 0.0);
  // {(0.25/0.1) * floor(0.3/0.25)} = {2.5} = 0.5.
  CHECK(iota2(vec1(0.3), 0.25, 0.1)[0] == doctest::Approx(0.5).epsilon(1e-12));
  Eigen::VectorXd x(2);
  x << 0.3, 0.6;
  auto io = iota2(x, 0.25, 0.1);
  CHECK(io[0] == doctest::Approx(0.5));
  CHECK(io[1] == doctest::Approx(0.0));
}

TEST_CASE("unfold1 of constant and linear fields") {
  GridField c(box1(64), vec1(2.5));
  auto U = unfold1(c, 0.25, vec1(-1.0));
  for (double v : U.values) CHECK(v == 2.5);

  GridField lin(box1(64), 1);
  for (int i = 0; i < 64; ++i) lin.values[i] = (i + 0.5) / 64.0;
  auto V = unfold1(lin, 0.25, vec1(-1.0));
  for (int g = 0; g < 4; ++g)
    for (int j = 0; j < 16; ++j) {
      const double x = (g * 16 + 3 + 0.5) / 64.0, y1 = (j + 0.5) / 16.0;
      CHECK(V.at(g, j, 0)[0] == doctest::Approx(0.25 * std::floor(4 * x) + 0.25 * y1).epsilon(1e-15));
    }
}

TEST_CASE("identity (iii) for x^2 with zero fill") {
  GridField u(box1(64), 1);
  for (int i = 0; i < 64; ++i) u.values[i] = std::pow((i + 0.5) / 64.0, 2);
  auto U = unfold1(u, 0.25, vec1(0.0));
  // Oracle: direct sum over the image set, which is all of Omega here.
  double direct = 0.0;
  for (double v : u.values) direct += v / 64.0;
  CHECK(std::abs(unfolded_integral(U)[0] - direct) <= 1e-15);
}

TEST_CASE("unfold2 constant field and composition with the partial unfolding") {
  GridField c(box1(120), vec1(0.75));
  auto U = unfold2(c, 0.25, 0.05, vec1(-1.0));
  for (std::int64_t g = 0; g < U.dec.generator_count(); ++g)
    for (std::int64_t j = 0; j < U.nodes1; ++j)
      if (U.proper[g * U.nodes1 + j])
        for (std::int64_t l = 0; l < U.nodes2; ++l) CHECK(U.at(g, j, l)[0] == 0.75);

  struct Case {
    GridBox box;
    double delta, eta;
  };
  const double h2 = 1.0 / 40.0;
  std::vector<Case> cases = {{box1(100), 0.3, 0.04}, {box1(100), 0.25, 0.1}, {box1(120), 0.25, 0.05},
                             {box2(40, 36, h2), 6 * h2, 4 * h2}};
  for (const auto& cs : cases) {
    for (int M : {1, 2}) {
      GridField u = random_field(cs.box, M, 17 + M);
      const Eigen::VectorXd fill = Eigen::VectorXd::Constant(M, -1.0);
      auto direct = unfold2(u, cs.delta, cs.eta, fill);
      auto composed = partial_unfold(unfold1(u, cs.delta, fill), cs.eta, fill);
      REQUIRE(direct.values.size() == composed.values.size());
      CHECK(direct.proper == composed.proper);
      bool same = true;
      for (std::size_t i = 0; i < direct.values.size(); ++i) same = same && direct.values[i] == composed.values[i];
      CHECK(same);
    }
  }
}

TEST_CASE("mismatch vector is nonzero in the incommensurate case") {
  auto U = unfold2(random_field(box1(100), 1, 3), 0.3, 0.04, vec1(0.0));
  std::int64_t improper = 0;
  for (auto p : U.proper) improper += p ? 0 : 1;
  // delta/eta = 7.5: the second delta-cell starts mid eta-cell and loses two half cells.
  CHECK(improper > 0);
  CHECK(iota2(vec1(0.45), 0.3, 0.04)[0] == doctest::Approx(0.5));
}

TEST_CASE("product rules hold sample-exactly") {
  for (int seed = 0; seed < 5; ++seed) {
    GridField v = random_field(box1(100), 1, 100 + seed), w = random_field(box1(100), 1, 200 + seed);
    const GridField vw = field_product(v, w);
    auto lhs1 = unfold1(vw, 0.3, vec1(0.0));
    auto rhs1 = unfolded_product(unfold1(v, 0.3, vec1(0.0)), unfold1(w, 0.3, vec1(0.0)));
    CHECK(lhs1.values == rhs1.values);
    auto lhs2 = unfold2(vw, 0.3, 0.04, vec1(0.0));
    auto rhs2 = unfolded_product(unfold2(v, 0.3, 0.04, vec1(0.0)), unfold2(w, 0.3, 0.04, vec1(0.0)));
    CHECK(lhs2.values == rhs2.values);
  }
}

TEST_CASE("integral identities (iii)-(vi) with zero fill") {
  const double h2 = 1.0 / 40.0;
  struct Case {
    GridBox box;
    double delta, eta;
  };
  std::vector<Case> cases = {{box1(100), 0.3, 0.04}, {box2(40, 36, h2), 6 * h2, 4 * h2}};
  for (const auto& cs : cases)
    for (int seed = 0; seed < 5; ++seed) {
      GridField phi = random_field(cs.box, 1, 1000 + seed);
      const auto m1 = image_mask1(cs.box, cs.delta);
      const auto m2 = image_mask2(cs.box, cs.delta, cs.eta);
      const double I1 = unfolded_integral(unfold1(phi, cs.delta, vec1(0.0)))[0];
      const double I2 = unfolded_integral(unfold2(phi, cs.delta, cs.eta, vec1(0.0)))[0];
      CHECK(std::abs(I1 - masked_integral(phi, m1, true, false)[0]) <= 1e-12);
      CHECK(std::abs(I2 - masked_integral(phi, m2, true, false)[0]) <= 1e-12);
      const double total = phi.integral()[0];
      CHECK(std::abs(I1 - total) <= masked_integral(phi, m1, false, true)[0] + 1e-12);
      CHECK(std::abs(I2 - total) <= masked_integral(phi, m2, false, true)[0] + 1e-12);
    }
}

TEST_CASE("fill a adds a times the boundary measure to identity (iii)") {
  GridField phi = random_field(box1(100), 1, 5);
  const double I_zero = unfolded_integral(unfold1(phi, 0.3, vec1(0.0)))[0];
  const double I_a = unfolded_integral(unfold1(phi, 0.3, vec1(-1.0)))[0];
  CHECK(I_a - I_zero == doctest::Approx(-0.1).epsilon(1e-12));
}

TEST_CASE("chain rule: y1-difference of U1 u equals delta times unfolded x-difference") {
  for (const GridBox& box : {box1(100), box2(40, 36, 1.0 / 40.0)}) {
    const double delta = box.N == 1 ? 0.3 : 6.0 / 40.0;
    GridField u = random_field(box, 2, 77);
    for (int axis = 0; axis < box.N; ++axis) {
      auto lhs = y1_forward_difference(unfold1(u, delta, Eigen::Vector2d(0, 0)), axis);
      auto du = unfold1(forward_difference(u, axis), delta, Eigen::Vector2d(0, 0));
      const std::int64_t K = lhs.dec.K;
      double worst = 0.0;
      std::vector<std::int64_t> j(box.N);
      for (std::int64_t g = 0; g < lhs.dec.generator_count(); ++g)
        for (std::int64_t jl = 0; jl < lhs.nodes1; ++jl) {
          std::int64_t r = jl;
          for (int a = box.N - 1; a >= 0; --a) {
            j[a] = r % K;
            r /= K;
          }
          if (j[axis] >= K - 1) continue;
          for (int m = 0; m < 2; ++m) {
            const double a = lhs.at(g, jl, 0)[m], b = delta * du.at(g, jl, 0)[m];
            worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(b)));
          }
        }
      CHECK(worst <= 1e-12);
    }
  }
}

TEST_CASE("fast defect norms agree with brute force over materialized fields") {
  const double h2 = 1.0 / 40.0;
  for (int seed = 0; seed < 4; ++seed) {
    for (auto fill : {0.0, -1.0}) {
      GridField u = random_field(box1(100), 1, 300 + seed);
      auto fast = defect_norms(u, 0.3, 0.04, vec1(fill));
      auto slow = brute_defects(u, 0.3, 0.04, vec1(fill));
      CHECK(fast.d1 == doctest::Approx(slow.d1).epsilon(1e-12));
      CHECK(fast.d2 == doctest::Approx(slow.d2).epsilon(1e-12));
      GridField w = random_field(box2(40, 36, h2), 2, 400 + seed);
      auto fast2 = defect_norms(w, 6 * h2, 4 * h2, Eigen::Vector2d(fill, 0.5));
      auto slow2 = brute_defects(w, 6 * h2, 4 * h2, Eigen::Vector2d(fill, 0.5));
      CHECK(fast2.d1 == doctest::Approx(slow2.d1).epsilon(1e-12));
      CHECK(fast2.d2 == doctest::Approx(slow2.d2).epsilon(1e-12));
    }
  }
  GridField c(box1(100), vec1(0.3));
  auto d = defect_norms(c, 0.25, 0.05, vec1(0.3));
  CHECK(d.d1 <= 1e-14);
  CHECK(d.d2 <= 1e-14);
}

TEST_CASE("unfolding inequality for an aligned composite") {
  // delta = 1/4, eta = 1/32 on h = 1/256: inclusion faces in y1 fall on eta/delta subcell boundaries.
  auto quart = [](double c) {
    return std::make_shared<QuarticWell>(c, Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0));
  };
  auto p = make_composite(1, 0.5, 0.5, quart(1), quart(4), quart(9));
  GridField u = random_field(box1(256), 1, 9);
  const double delta = 0.25, eta = 1.0 / 32.0;
  double direct = 0.0;
  for (int i = 0; i < 256; ++i) {
    const double t1 = ((i % 64) + 0.5) / 64.0, t2 = ((i % 8) + 0.5) / 8.0;
    direct += p->value_cell(&t1, &t2, &u.values[i]) / 256.0;
  }
  const double unf = unfolded_potential_integral(*p, unfold2(u, delta, eta, vec1(-1.0)));
  CHECK(direct >= unf - 1e-13);
  CHECK(direct == doctest::Approx(unf).epsilon(1e-13));
}

TEST_CASE("unfold errors") {
  GridField u(box1(100), 1);
  CHECK_THROWS(unfold2(u, 0.05, 0.1, vec1(0.0)));
  CHECK_THROWS(unfold1(u, 0.305, vec1(0.0)));
  CHECK_THROWS(unfold1(u, 0.3, Eigen::Vector2d(0, 0)));
}
