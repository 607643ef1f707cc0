#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "twoscale/profile.hpp"
#include "twoscale/quadrature.hpp"

using namespace twoscale;

namespace {

Vec v1(double x) { return Vec::Constant(1, x); }

double quartic1(const double* z) { return (1 - z[0] * z[0]) * (1 - z[0] * z[0]); }

double quartic2(const double* z) {
  const double da = (z[0] + 1) * (z[0] + 1) + z[1] * z[1], db = (z[0] - 1) * (z[0] - 1) + z[1] * z[1];
  return da * db;
}

PhaseMask mask_from(const GridBox& box, const std::function<bool(const double*)>& in) {
  PhaseMask A{box, std::vector<std::uint8_t>(static_cast<std::size_t>(box.size()))};
  std::vector<std::int64_t> idx(box.N);
  std::vector<double> x(box.N);
  for (std::int64_t i = 0; i < box.size(); ++i) {
    box.unravel(i, idx.data());
    for (int ax = 0; ax < box.N; ++ax) x[ax] = box.center(ax, idx[ax]);
    A.inside[i] = in(x.data()) ? 1 : 0;
  }
  return A;
}

}  // namespace

TEST_CASE("quartic profile matches tanh as lambda vanishes") {
  auto p = build_profile(Curve::segment(v1(-1), v1(1), 2), quartic1, 1.0, 1e-6);
  double worst = 0.0;
  for (int i = 0; i <= 4000; ++i) {
    const double t = -12.0 + 24.0 * i / 4000.0;
    worst = std::max(worst, std::abs(p.u(t)[0] - std::tanh(t)));
  }
  CHECK(worst <= 1e-3);
  CHECK(p.g(0.0) == doctest::Approx(0.0).epsilon(0).scale(1).epsilon(1e-12));
  CHECK(p.g(-p.tau) == -1.0);
  CHECK(p.g(p.tau) == 1.0);
  CHECK(p.u(-p.tau)[0] == -1.0);
  CHECK(p.u(p.tau)[0] == 1.0);
  double prev = -2.0;
  for (int i = 1; i < 2000; ++i) {
    const double g = p.g(-p.tau + 2 * p.tau * i / 2000.0);
    CHECK(g > prev);
    prev = g;
  }
  CHECK(p.ode_residual() <= 1e-6);
}

TEST_CASE("tabulated profile agrees with the exact inverse") {
  for (double lambda : {1e-6, 1e-3}) {
    auto p = build_profile(Curve::segment(v1(-1), v1(1), 2), quartic1, 0.05, lambda);
    ProfileTable table(p);
    double worst = 0.0;
    for (int i = 0; i <= 5000; ++i) {
      const double t = -1.1 * p.tau + 2.2 * p.tau * i / 5000.0;
      double u;
      table.u(t, &u);
      worst = std::max(worst, std::abs(u - p.u(t)[0]));
    }
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("tau two-sided bound over an (eps, lambda) grid") {
  auto W = [](const double* z) { return 5.75 * quartic1(z); };
  for (double eps : {0.01, 0.1, 1.0})
    for (double lambda : {1e-6, 1e-3, 1e-1}) {
      auto p = build_profile(Curve::segment(v1(-1), v1(1), 5), W, eps, lambda);
      CHECK(p.lower_constant() > 0.0);
      CHECK(p.lower_constant() * eps <= p.tau);
      CHECK(p.tau <= p.upper_tau());
      // tau scales linearly with eps.
      CHECK(p.tau / eps == doctest::Approx(build_profile(Curve::segment(v1(-1), v1(1), 5), W, 1.0, lambda).tau).epsilon(1e-10));
    }
}

TEST_CASE("profile energy estimate and independent t-quadrature") {
  for (double lambda : {1e-4, 1e-2}) {
    const double eps = 0.05;
    auto p = build_profile(Curve::segment(v1(-1), v1(1), 3), quartic1, eps, lambda);
    const double e = p.energy();
    CHECK(e <= p.energy_bound());
    CHECK(e >= 8.0 / 3.0);
    // Same energy in the t variable: W(u)/eps + eps |u'|^2.
    auto dens = [&](double t) {
      const double gp = p.g_prime(t);
      const double sp = p.speed(p.g(t));
      return quartic1(p.u(t).data()) / eps + eps * sp * sp * gp * gp;
    };
    const double et = adaptive_simpson(dens, -p.tau, p.tau, 1e-10);
    CHECK(et == doctest::Approx(e).epsilon(1e-6));
  }
  // Piecewise curve through the plane.
  Curve bent;
  bent.t = {-1.0, 0.0, 1.0};
  Vec a(2), m(2), b(2);
  a << -1, 0;
  m << 0, 0.3;
  b << 1, 0;
  bent.nodes = {a, m, b};
  auto p = build_profile(bent, quartic2, 0.1, 1e-3);
  CHECK(p.energy() <= p.energy_bound());
  CHECK(p.length == doctest::Approx(2 * std::sqrt(1.09)));
  CHECK(p.u(0.0).size() == 2);
}

TEST_CASE("profile input errors") {
  CHECK_THROWS(build_profile(Curve::segment(v1(-1), v1(1), 3), quartic1, 1.0, 0.0));
  CHECK_THROWS(build_profile(Curve::segment(v1(-1), v1(1), 3), quartic1, 1.0, -1.0));
  Curve stall;
  stall.t = {-1.0, 0.0, 1.0};
  stall.nodes = {v1(-1), v1(-1), v1(1)};
  CHECK_THROWS(build_profile(stall, quartic1, 1.0, 1e-3));
  CHECK(default_lambda(2.0, 4.0) == doctest::Approx(2.5e-5).epsilon(1e-14));
}

TEST_CASE("signed distance: half-space, disk, unit gradient") {
  const auto box = GridBox::unit_domain(2, 64);
  auto half = signed_distance(mask_from(box, [](const double* x) { return x[0] < 0.5; }));
  std::vector<std::int64_t> idx(2);
  for (std::int64_t i = 0; i < box.size(); ++i) {
    box.unravel(i, idx.data());
    CHECK(std::abs(half.values[i] - (box.center(0, idx[0]) - 0.5)) <= 1e-14);
  }

  const auto fine = GridBox::unit_domain(2, 128);
  const double r = 0.3;
  auto disk = signed_distance(mask_from(fine, [&](const double* x) { return std::hypot(x[0] - 0.5, x[1] - 0.5) < r; }));
  double worst = 0.0;
  int checked = 0, good = 0;
  for (std::int64_t i = 0; i < fine.size(); ++i) {
    fine.unravel(i, idx.data());
    const double x = fine.center(0, idx[0]), y = fine.center(1, idx[1]);
    const double rho = std::hypot(x - 0.5, y - 0.5);
    worst = std::max(worst, std::abs(std::abs(disk.values[i]) - std::abs(rho - r)));
    CHECK((disk.values[i] < 0) == (rho < r));
    // Central-difference gradient away from the centre and from the medial branches of the pixel staircase.
    if (idx[0] < 1 || idx[1] < 1 || idx[0] > 126 || idx[1] > 126 || rho < 0.1 || std::abs(rho - r) < 0.1) continue;
    const double gx = (disk.values[i + fine.stride(0)] - disk.values[i - fine.stride(0)]) / (2 * fine.h);
    const double gy = (disk.values[i + 1] - disk.values[i - 1]) / (2 * fine.h);
    ++checked;
    if (std::abs(std::hypot(gx, gy) - 1.0) <= 0.05) ++good;
  }
  CHECK(worst <= fine.h);
  CHECK(checked > 1000);
  CHECK(good == checked);

  // 3D ball against the analytic distance.
  const auto cube = GridBox::unit_domain(3, 32);
  auto ball = signed_distance(mask_from(cube, [](const double* x) {
    return std::sqrt(std::pow(x[0] - 0.5, 2) + std::pow(x[1] - 0.5, 2) + std::pow(x[2] - 0.5, 2)) < 0.25;
  }));
  std::vector<std::int64_t> i3(3);
  double w3 = 0.0;
  for (std::int64_t i = 0; i < cube.size(); ++i) {
    cube.unravel(i, i3.data());
    const double rho = std::sqrt(std::pow(cube.center(0, i3[0]) - 0.5, 2) + std::pow(cube.center(1, i3[1]) - 0.5, 2) +
                                 std::pow(cube.center(2, i3[2]) - 0.5, 2));
    w3 = std::max(w3, std::abs(std::abs(ball.values[i]) - std::abs(rho - 0.25)));
  }
  CHECK(w3 <= cube.h);

  CHECK_THROWS(signed_distance(mask_from(box, [](const double*) { return true; })));
  CHECK_THROWS(signed_distance(mask_from(box, [](const double*) { return false; })));
}

TEST_CASE("recovery sequence: far field, L1 distance, resolution guard") {
  const auto box = GridBox::unit_domain(2, 256);
  auto A = mask_from(box, [](const double* x) { return x[0] < 0.5; });
  auto dist = signed_distance(A);
  auto ref = recovery_sequence(dist, build_profile(Curve::segment(v1(-1), v1(1), 2), quartic1, 0.02, 1e-4));
  double prev_l1 = 1e9;
  for (double eps : {0.04, 0.02, 0.01}) {
    auto p = build_profile(Curve::segment(v1(-1), v1(1), 2), quartic1, eps, 1e-4);
    auto u = recovery_sequence(dist, p);
    double l1 = 0.0;
    std::int64_t layer = 0;
    for (std::int64_t i = 0; i < box.size(); ++i) {
      const double target = A.inside[i] ? -1.0 : 1.0;
      if (dist.values[i] < -p.tau) CHECK(u.values[i] == -1.0);
      if (dist.values[i] > p.tau) CHECK(u.values[i] == 1.0);
      if (std::abs(dist.values[i]) <= p.tau) ++layer;
      l1 += std::abs(u.values[i] - target) * box.cell_volume();
    }
    const double layer_vol = layer * box.cell_volume();
    CHECK(l1 <= 2.0 * layer_vol);
    CHECK(layer_vol <= 2 * p.tau + 2 * box.h);
    CHECK(l1 < prev_l1);
    prev_l1 = l1;
  }
  CHECK(ref.a[0] == -1.0);
  CHECK(ref.b[0] == 1.0);
  auto coarse = signed_distance(mask_from(GridBox::unit_domain(2, 16), [](const double* x) { return x[0] < 0.5; }));
  CHECK_THROWS(recovery_sequence(coarse, build_profile(Curve::segment(v1(-1), v1(1), 2), quartic1, 0.01, 1e-4)));
}

TEST_CASE("mass repair: analytic constant, exact mean, no-op, errors") {
  CHECK(unit_ball_volume(2) == doctest::Approx(M_PI).epsilon(1e-15));
  CHECK(unit_ball_volume(3) == doctest::Approx(4 * M_PI / 3).epsilon(1e-15));

  const auto box = GridBox::unit_domain(2, 200);
  auto A = mask_from(box, [](const double* x) { return x[0] < 0.6; });
  auto dist = signed_distance(A);
  auto u = recovery_sequence(dist, build_profile(Curve::segment(v1(-1), v1(1), 2), quartic1, 0.01, 1e-4));
  auto c = choose_bubble_center(dist);
  CHECK(c.clearance >= 0.25);
  CHECK(c.x0[0] < 0.6);

  const double m = 0.62;
  auto rep = mass_repair(u, m, c.x0, 0.1);
  CHECK(rep.c_analytic == doctest::Approx(-3.0 / (M_PI * 0.01)).epsilon(1e-14));
  CHECK(rep.c_analytic == doctest::Approx(-95.493).epsilon(1e-5));
  CHECK(rep.c_grid == doctest::Approx(rep.c_analytic).epsilon(1e-2));
  const double target = m * -1.0 + (1 - m) * 1.0;
  CHECK(std::abs(rep.v.mean()[0] - target) <= 1e-12);
  for (std::int64_t i = 0; i < box.size(); ++i)
    if (!rep.ball[i]) CHECK(rep.v.values[i] == u.values[i]);

  // m_n = m: the field is returned unchanged.
  const double mn = (1.0 - u.mean()[0]) / 2.0;
  auto same = mass_repair(u, mn, c.x0, 0.1);
  CHECK(same.v.values == u.values);

  CHECK_THROWS(mass_repair(u, m, c.x0, 0.45));  // reaches the layer
  Vec edge(2);
  edge << 0.05, 0.5;
  CHECK_THROWS(mass_repair(u, m, edge, 0.1));  // leaves the domain
  GridField u1(GridBox::unit_domain(1, 64), v1(-1));
  u1.a = v1(-1);
  u1.b = v1(1);
  CHECK_THROWS(mass_repair(u1, 0.5, v1(0.5), 0.1));
}
