#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "twoscale/geodesic.hpp"
#include "twoscale/quadrature.hpp"

using namespace twoscale;

namespace {

Vec v1(double x) { return Vec::Constant(1, x); }
Vec v2(double x, double y) {
  Vec z(2);
  z << x, y;
  return z;
}

BasePtr quartic(double c) { return std::make_shared<QuarticWell>(c, v1(-1.0), v1(1.0)); }

double quartic1(const double* z) { return (1 - z[0] * z[0]) * (1 - z[0] * z[0]); }

// |z-a|^2 |z-b|^2 with a = (-1, 0), b = (1, 0).
double quartic2(const double* z) {
  const double da = (z[0] + 1) * (z[0] + 1) + z[1] * z[1], db = (z[0] - 1) * (z[0] - 1) + z[1] * z[1];
  return da * db;
}

}  // namespace

TEST_CASE("line energy: constant curve, quartic segment, homogeneity, reparametrization") {
  Curve c = Curve::segment(v1(0.3), v1(0.3), 5);
  CHECK(line_energy(quartic1, c) == 0.0);

  Curve s = Curve::segment(v1(-1), v1(1), 4097);
  CHECK(line_energy(quartic1, s) == doctest::Approx(8.0 / 3.0).epsilon(1e-6));
  auto scaled = [](const double* z) { return 4.0 * quartic1(z); };
  CHECK(line_energy(scaled, s) == doctest::Approx(2.0 * line_energy(quartic1, s)).epsilon(1e-14));

  std::mt19937 rng(5);
  std::uniform_real_distribution<double> ud(0.1, 1.0);
  Curve r = s;
  double acc = 0.0;
  std::vector<double> gaps(r.size() - 1);
  for (auto& g : gaps) acc += (g = ud(rng));
  double t = -1.0;
  for (std::size_t k = 1; k + 1 < r.size(); ++k) r.t[k] = (t += 2.0 * gaps[k - 1] / acc);
  CHECK(std::abs(line_energy(quartic1, r) - line_energy(quartic1, s)) <= 1e-10 * line_energy(quartic1, s));

  auto negative = [](const double*) { return -1.0; };
  CHECK_THROWS(line_energy(negative, s));
}

TEST_CASE("sigma_h scalar fast path") {
  auto p = make_uniform(1, quartic(1.0));
  HomogenizedPotential Wh(p);
  auto r = sigma_h(Wh);
  CHECK(r.method == "closed-form");
  CHECK(r.value == doctest::Approx(8.0 / 3.0).epsilon(1e-10));

  auto comp = make_composite(1, 0.5, 0.5, quartic(1), quartic(4), quartic(9));
  HomogenizedPotential Wc(comp);
  auto rc = sigma_h(Wc);
  CHECK(rc.value == doctest::Approx(std::sqrt(5.75) * 8.0 / 3.0).epsilon(1e-10));
  CHECK(rc.value <= line_energy([&](const double* z) { return Wc(z); }, Curve::segment(v1(-1), v1(1), 129)) + 1e-3);

  // Independent quadrature of 2 sqrt(W^h).
  const double ref = adaptive_simpson([&](double s) { return 2 * std::sqrt(Wc(&s)); }, -1, 1, 1e-13);
  CHECK(rc.value == doctest::Approx(ref).epsilon(1e-8));

  auto lifted = [](const double* z) { return 1.0 + quartic1(z); };
  CHECK_THROWS(sigma_field(lifted, v1(-1), v1(1)));
}

TEST_CASE("homogeneity of sigma") {
  for (double c : {0.25, 3.0, 9.0}) {
    auto W = [c](const double* z) { return c * quartic1(z); };
    CHECK(sigma_field(W, v1(-1), v1(1)).value == doctest::Approx(std::sqrt(c) * 8.0 / 3.0).epsilon(1e-8));
  }
  auto W2 = [](const double* z) { return 4.0 * quartic2(z); };
  auto r1 = sigma_field(quartic2, v2(-1, 0), v2(1, 0));
  auto r2 = sigma_field(W2, v2(-1, 0), v2(1, 0));
  CHECK(r2.value == doctest::Approx(2.0 * r1.value).epsilon(1e-3));
}

TEST_CASE("two components: straight optimum and bump detour") {
  auto r = sigma_field(quartic2, v2(-1, 0), v2(1, 0));
  CHECK(r.method == "optimized");
  CHECK(r.value == doctest::Approx(8.0 / 3.0).epsilon(2e-3));
  CHECK(r.value <= line_energy(quartic2, Curve::segment(v2(-1, 0), v2(1, 0), r.nodes)) + 1e-12);
  CHECK(r.value == doctest::Approx(line_energy(quartic2, r.curve)).epsilon(1e-12));
  // Descent at fixed resolution never increases the energy.
  GeodesicOptions fixed;
  fixed.max_nodes = fixed.nodes;
  auto rf = sigma_field(quartic2, v2(-1, 0), v2(1, 0), fixed);
  for (std::size_t i = 1; i < rf.trace.size(); ++i) CHECK(rf.trace[i] <= rf.trace[i - 1]);

  // A bump at the origin pushes the geodesic off the segment.
  auto bump = [](const double* z) { return quartic2(z) * (1.0 + 20.0 * std::exp(-(z[0] * z[0] + z[1] * z[1]) / 0.05)); };
  auto rb = sigma_field(bump, v2(-1, 0), v2(1, 0));
  const double seg = line_energy(bump, Curve::segment(v2(-1, 0), v2(1, 0), 1025));
  CHECK(rb.value < 0.95 * seg);
  CHECK(rb.value >= 8.0 / 3.0 * (1 - 2e-3));
  double off = 0.0;
  for (const auto& z : rb.curve.nodes) off = std::max(off, std::abs(z[1]));
  CHECK(off > 0.1);
}

TEST_CASE("geodesic distance: identity, free balls, triangle inequality") {
  CHECK(geodesic_distance(quartic2, v2(0.2, 0.1), v2(0.2, 0.1)) == 0.0);
  WellBalls balls{{v2(-1, 0), v2(1, 0)}, {0.2, 0.2}};
  CHECK(geodesic_distance(quartic2, v2(-1.1, 0.05), v2(-0.9, -0.1), &balls) == 0.0);
  CHECK(geodesic_distance(quartic2, v2(-1, 0), v2(1, 0), &balls) < geodesic_distance(quartic2, v2(-1, 0), v2(1, 0)));

  std::mt19937 rng(11);
  std::uniform_real_distribution<double> ud(-1.2, 1.2);
  GeodesicOptions o;
  o.nodes = 65;
  o.max_nodes = 129;
  for (int trial = 0; trial < 4; ++trial) {
    Vec p = v2(ud(rng), ud(rng)), q = v2(ud(rng), ud(rng)), r = v2(ud(rng), ud(rng));
    const double pr = geodesic_distance(quartic2, p, r, nullptr, o);
    const double pq = geodesic_distance(quartic2, p, q, nullptr, o);
    const double qr = geodesic_distance(quartic2, q, r, nullptr, o);
    CHECK(pr <= pq + qr + 1e-2 * (pq + qr));
  }
  // Scalar case with balls: the free intervals are skipped exactly.
  WellBalls b1{{v1(-1), v1(1)}, {0.5, 0.5}};
  const double d = geodesic_distance(quartic1, v1(-1), v1(1), &b1);
  CHECK(d == doctest::Approx(2 * (2 * 0.5 - 2 * 0.125 / 3)).epsilon(1e-10));
}

TEST_CASE("one-third normalization") {
  WellBalls balls{{v1(-1), v1(1)}, {0.2, 0.2}};
  Curve s = Curve::segment(v1(-1), v1(1), 33);
  Curve n = normalize_one_third(s, balls);
  CHECK(is_one_third_normalized(n, balls));
  CHECK(std::abs(line_energy(quartic1, n) - line_energy(quartic1, s)) <= 1e-12);
  for (std::size_t k = 0; k < n.size(); ++k) {
    if (n.t[k] <= -1.0 / 3.0) CHECK(std::abs(n.nodes[k][0] + 1) <= 0.2);
    if (n.t[k] >= 1.0 / 3.0) CHECK(std::abs(n.nodes[k][0] - 1) <= 0.2);
  }
  Curve again = normalize_one_third(n, balls);
  CHECK(again.t == n.t);
  CHECK(again.nodes == n.nodes);

  // Only the endpoint inside: a constant piece is inserted.
  WellBalls tiny{{v1(-1), v1(1)}, {1e-3, 1e-3}};
  Curve m = normalize_one_third(s, tiny);
  CHECK(is_one_third_normalized(m, tiny));
  CHECK(std::abs(line_energy(quartic1, m) - line_energy(quartic1, s)) <= 1e-12);

  CHECK_THROWS(normalize_one_third(Curve::segment(v1(-0.5), v1(1), 9), balls));
}

TEST_CASE("sigma_xi from a cache") {
  auto p = make_composite(1, 0.5, 0.5, quartic(1), quartic(4), quartic(9));
  const CellGrid g{8, 8};
  auto caches = build_cache_ladder(*p, {0.05, 0.01, 0.0}, v1(-1), v1(1), 41, g);
  const double sh = std::sqrt(5.75) * 8 / 3;
  double prev = 0.0;
  for (const auto& c : caches) {
    auto r = sigma_xi(c);
    CHECK(r.value <= sh * (1 + 2e-3));
    CHECK(r.value >= prev);
    prev = r.value;
    CHECK(is_one_third_normalized(r.curve, WellBalls{{c.a, c.b}, {cache_zero_radius(c).r_a, cache_zero_radius(c).r_b}}));
  }
  // xi = 0 reproduces sigma^h up to the interpolation error.
  CHECK(prev == doctest::Approx(sh).epsilon(2e-3));
  auto r = cache_zero_radius(caches[0]);
  CHECK(r.r_a >= 0.1 - 0.05);
  CellCache narrow = build_cell_cache(*p, 0.01, v1(-0.5), v1(1), 5, g);
  narrow.a = v1(-1);
  narrow.b = v1(1);
  CHECK_THROWS(sigma_xi(narrow));
}
