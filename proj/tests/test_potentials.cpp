#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "twoscale/potential_spec.hpp"
#include "twoscale/potentials.hpp"

using namespace twoscale;

namespace {

Vec v1(double x) { return Vec::Constant(1, x); }

BasePtr quartic(double c) { return std::make_shared<QuarticWell>(c, v1(-1.0), v1(1.0)); }

PotentialPtr standard_composite(int N = 1) { return make_composite(N, 0.5, 0.5, quartic(1), quartic(4), quartic(9)); }

}  // namespace

TEST_CASE("quartic well matches c(1-u^2)^2 and its derivatives") {
  QuarticWell w(3.0, v1(-1.0), v1(1.0));
  for (double u : {-2.0, -1.0, -0.3, 0.0, 0.7, 1.0, 1.9}) {
    const double ref = 3.0 * (1 - u * u) * (1 - u * u);
    CHECK(w.value(&u) == doctest::Approx(ref).epsilon(1e-14));
    double g = 0.0, H = 0.0;
    w.gradient(&u, &g);
    w.hessian(&u, &H);
    CHECK(g == doctest::Approx(-12.0 * u * (1 - u * u)).epsilon(1e-12));
    CHECK(H == doctest::Approx(3.0 * (12 * u * u - 4)).epsilon(1e-12));
  }
}

TEST_CASE("quartic well in R^2: gradient and hessian agree with central differences") {
  Vec a(2), b(2);
  a << -1.0, 0.5;
  b << 1.0, -0.25;
  QuarticWell w(2.0, a, b);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> ud(-2.0, 2.0);
  for (int s = 0; s < 10; ++s) {
    double z[2] = {ud(rng), ud(rng)}, g[2], H[4];
    w.gradient(z, g);
    w.hessian(z, H);
    for (int i = 0; i < 2; ++i) {
      const double t = 1e-6;
      double zp[2] = {z[0], z[1]}, zm[2] = {z[0], z[1]};
      zp[i] += t;
      zm[i] -= t;
      CHECK(g[i] == doctest::Approx((w.value(zp) - w.value(zm)) / (2 * t)).epsilon(1e-7));
      double gp[2], gm[2];
      w.gradient(zp, gp);
      w.gradient(zm, gm);
      for (int j = 0; j < 2; ++j) CHECK(H[j * 2 + i] == doctest::Approx((gp[j] - gm[j]) / (2 * t)).epsilon(1e-6));
    }
  }
  CHECK(w.value(a.data()) == 0.0);
  CHECK(w.value(b.data()) == 0.0);
}

TEST_CASE("composite with theta1 = 1 ignores W3") {
  auto p = make_composite(1, 1.0, 0.3, quartic(1), quartic(4), quartic(9));
  auto q = make_composite(1, 1.0, 0.3, quartic(1), quartic(4), quartic(100));
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  for (int s = 0; s < 200; ++s) {
    double y1 = ud(rng), y2 = ud(rng), z = 3 * ud(rng) - 1.5;
    CHECK(p->value(&y1, &y2, &z) == q->value(&y1, &y2, &z));
  }
}

TEST_CASE("composite selects W1 on I1 x I2") {
  auto p = standard_composite();
  double y1 = 0.5, y2 = 0.5, z = 0.0;
  CHECK(p->value(&y1, &y2, &z) == 1.0);
  y2 = 0.1;
  CHECK(p->value(&y1, &y2, &z) == 4.0);
  y1 = 0.05;
  CHECK(p->value(&y1, &y2, &z) == 9.0);
}

TEST_CASE("homogenized composite at zero equals the volume-fraction average") {
  // Oracle: closed form theta1 (theta2 c1 + (1-theta2) c2) + (1-theta1) c3 with W_i(0) = c_i.
  const double oracle = 0.5 * (0.5 * 1.0 + 0.5 * 4.0) + 0.5 * 9.0;
  CHECK(oracle == 5.75);
  for (int N : {1, 2}) {
    CompositeLayout lay;
    auto p = make_composite(N, 0.5, 0.5, quartic(1), quartic(4), quartic(9), {}, &lay);
    CHECK(lay.snapped1);
    CHECK(lay.theta1_actual == 0.5);
    CHECK(homogenize(*p, v1(0.0)) == doctest::Approx(oracle).epsilon(1e-15));
    HomogenizedPotential Wh(p);
    CHECK(Wh(v1(0.0)) == doctest::Approx(oracle).epsilon(1e-15));
    CHECK(Wh(v1(-1.0)) == 0.0);
    CHECK(Wh(v1(1.0)) == 0.0);
  }
}

TEST_CASE("2D inclusion for theta = 1/2 is an exact 64 x 32 node box") {
  bool snapped = false;
  CellBox b = centered_box(2, 0.5, 64, &snapped);
  CHECK(snapped);
  CHECK(b.volume() == 0.5);
  CHECK(b.hi[0] - b.lo[0] + b.hi[1] - b.lo[1] == 1.5);
}

TEST_CASE("homogenize trivial cases and monotonicity") {
  auto p = standard_composite();
  CHECK(homogenize(*p, v1(-1.0)) == 0.0);
  auto u = make_uniform(1, quartic(2.5));
  for (double z : {-1.5, -0.2, 0.4, 2.0}) CHECK(homogenize(*u, v1(z)) == doctest::Approx(2.5 * (1 - z * z) * (1 - z * z)));
  auto q = make_composite(1, 0.5, 0.5, quartic(2), quartic(4), quartic(9));
  for (double z : {-0.8, 0.0, 0.3, 1.5}) CHECK(homogenize(*p, v1(z)) <= homogenize(*q, v1(z)));
}

TEST_CASE("truncation") {
  auto p = standard_composite();
  const double M = 3.0, R = 2.0;
  auto t = truncate(p, M, R);
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  for (int s = 0; s < 300; ++s) {
    double y1 = ud(rng), y2 = ud(rng);
    double z = (ud(rng) - 0.5) * 16.0;
    const double wp = p->value(&y1, &y2, &z), wt = t->value(&y1, &y2, &z);
    if (std::abs(z) <= M) CHECK(wt == wp);
    CHECK(wt <= std::max(wp, std::abs(z) / R) + 1e-12);
    double z3 = 3.0 * M * (z < 0 ? -1 : 1);
    CHECK(t->value(&y1, &y2, &z3) == doctest::Approx(3.0 * M / R));
  }
  double y = 0.3, a = -1.0;
  CHECK(t->value(&y, &y, &a) == 0.0);
  CHECK_THROWS(truncate(p, 1.0, 2.0));
  CHECK_THROWS(truncate(p, 2.0, 2.0));
}

TEST_CASE("truncated base derivatives are consistent in the blend region") {
  Vec a(2), b(2);
  a << -1.0, 0.0;
  b << 1.0, 0.0;
  TruncatedBase tb(std::make_shared<QuarticWell>(1.0, a, b), 2.0, 1.5);
  for (double r : {2.3, 2.9, 3.6}) {
    double z[2] = {r * 0.6, r * 0.8}, g[2], H[4];
    tb.gradient(z, g);
    tb.hessian(z, H);
    for (int i = 0; i < 2; ++i) {
      const double t = 1e-6;
      double zp[2] = {z[0], z[1]}, zm[2] = {z[0], z[1]};
      zp[i] += t;
      zm[i] -= t;
      CHECK(g[i] == doctest::Approx((tb.value(zp) - tb.value(zm)) / (2 * t)).epsilon(1e-6));
      double gp[2], gm[2];
      tb.gradient(zp, gp);
      tb.gradient(zm, gm);
      for (int j = 0; j < 2; ++j) CHECK(H[j * 2 + i] == doctest::Approx((gp[j] - gm[j]) / (2 * t)).epsilon(1e-5));
    }
  }
}

TEST_CASE("periodicity is exact for composites") {
  auto p = standard_composite(2);
  std::mt19937 rng(1);
  std::uniform_int_distribution<int> di(0, (1 << 20) - 1), sh(-50, 50);
  for (int s = 0; s < 500; ++s) {
    double y1[2] = {(di(rng) + 0.5) / (1 << 20), (di(rng) + 0.5) / (1 << 20)};
    double y2[2] = {(di(rng) + 0.5) / (1 << 20), (di(rng) + 0.5) / (1 << 20)};
    double y1s[2] = {y1[0] + sh(rng), y1[1] + sh(rng)}, y2s[2] = {y2[0] + sh(rng), y2[1] + sh(rng)};
    double z = 0.37;
    CHECK(p->value(y1, y2, &z) == p->value(y1s, y2s, &z));
  }
}

TEST_CASE("hypothesis validation") {
  SUBCASE("composite passes everything") {
    auto rep = validate_hypotheses(*standard_composite(), 200);
    for (const auto& c : rep.checks) CHECK_MESSAGE(c.pass, c.name << " " << c.witness);
    CHECK(rep.all_pass());
  }
  SUBCASE("third zero fails H2 with a witness") {
    auto third = std::make_shared<FunctionBase>(
        v1(-1.0), v1(1.0),
        [](const double* z) {
          const double u = z[0];
          return u * u * (1 - u * u) * (1 - u * u) + 0.0;
        },
        nullptr, 1.0, 6.0);
    auto p = make_uniform(1, third, 4.0);
    auto rep = validate_hypotheses(*p, 200);
    CHECK_FALSE(rep.get("H2").pass);
    CHECK(rep.get("H2").witness.find("spurious") != std::string::npos);
  }
  SUBCASE("lifted potential fails H2 at the well") {
    auto lifted = std::make_shared<FunctionBase>(
        v1(-1.0), v1(1.0), [](const double* z) { return 1.0 + (1 - z[0] * z[0]) * (1 - z[0] * z[0]); }, nullptr, 2.0,
        4.0);
    auto p = make_uniform(1, lifted, 4.0);
    auto rep = validate_hypotheses(*p, 50);
    CHECK_FALSE(rep.get("H2").pass);
    CHECK(rep.get("H2").worst == doctest::Approx(1.0));
  }
  CHECK_THROWS(validate_hypotheses(*standard_composite(), 0));
}

TEST_CASE("composite construction errors") {
  CHECK_THROWS(make_composite(1, 1.5, 0.5, quartic(1), quartic(4), quartic(9)));
  CHECK_THROWS(make_composite(1, 0.5, -0.1, quartic(1), quartic(4), quartic(9)));
  auto shifted = std::make_shared<QuarticWell>(1.0, v1(-1.0), v1(2.0));
  CHECK_THROWS(make_composite(1, 0.5, 0.5, quartic(1), shifted, quartic(9)));
}

TEST_CASE("potential spec strings") {
  auto p = build_potential("composite{theta1=0.5,theta2=0.5,c1=1,c2=4,c3=9,base=quartic}", 1);
  CHECK(HomogenizedPotential(p)(v1(0.0)) == 5.75);
  auto q = build_potential("uniform{base=quartic,scale=2,a=-1:0,b=1:0}", 2);
  CHECK(q->M() == 2);
  double y[2] = {0.1, 0.2}, z[2] = {0.0, 0.0};
  CHECK(q->value(y, y, z) == 2.0);
  CHECK_THROWS(build_potential("composite{theta1=0.5,bogus=1}", 1));
  CHECK_THROWS(build_potential("sinusoid{}", 1));
  CHECK_THROWS(build_potential("composite{theta1=abc}", 1));
}

TEST_CASE("lattice floor and fraction") {
  Eigen::MatrixXd B(2, 2);
  B << 2.0, 1.0, 0.0, 1.0;
  Lattice L(B);
  CHECK(L.cell_volume() == doctest::Approx(2.0));
  Eigen::VectorXd z(2);
  z << 3.7, -0.4;
  const Eigen::VectorXd f = L.frac(z), fl = L.floor(z);
  CHECK((f + fl - z).norm() < 1e-14);
  const Eigen::VectorXd c = B.inverse() * f;
  CHECK(c[0] >= 0.0);
  CHECK(c[0] < 1.0);
  CHECK(c[1] >= 0.0);
  CHECK(c[1] < 1.0);
  CHECK_THROWS(Lattice(Eigen::MatrixXd::Zero(2, 2)));
}
