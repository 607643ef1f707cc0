#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "twoscale/harness.hpp"

using namespace twoscale;

namespace {

const char* kSmall1D = R"(# small 1D run
[potential]
spec = composite{theta1=0.5,theta2=0.5,c1=1,c2=4,c3=9,base=quartic}
[domain]
dim = 1
target = halfspace
interface = 0.5
window = 4
[schedule]
eps0 = 0.1
ratio = 0.5
p = 1.5
r = 1.5
levels = 2
cells_per_eta = 4
[solver]
max_iter = 100
seed = 3
[acceptance]
ratio_min = 0.9
ratio_max = 1.1
)";

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("twoscale_harness_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::string with(const std::string& base, const std::string& section, const std::string& line) {
  const std::string tag = "[" + section + "]\n";
  std::string out = base;
  const auto at = out.find(tag);
  REQUIRE(at != std::string::npos);
  out.insert(at + tag.size(), line + "\n");
  return out;
}

}  // namespace

TEST_CASE("default schedule and regime guard") {
  ScheduleSpec s;
  const auto levels = s.generate();
  REQUIRE(levels.size() == 4);
  CHECK(levels[3].eps == doctest::Approx(0.0125));
  CHECK(levels[3].delta == doctest::Approx(0.0125 * 0.0125));
  CHECK(levels[3].eta == doctest::Approx(std::pow(0.0125, 4)));
  CHECK_NOTHROW(check_regime(levels));

  ScheduleSpec wide = s;
  wide.p = 1.0;  // delta/eps stays constant
  CHECK_THROWS_AS(check_regime(wide.generate()), std::invalid_argument);
  ScheduleSpec up = s;
  up.q = 1.5;
  CHECK_THROWS_AS(check_regime(up.generate()), std::invalid_argument);
  std::vector<ScaleLevel> flipped = {{0, 0.1, 0.2, 0.01}};
  CHECK_THROWS_AS(check_regime(flipped), std::invalid_argument);
  CHECK_THROWS_AS(parse_config(with(kSmall1D, "schedule", "p = 0.9")), std::invalid_argument);
}

TEST_CASE("config parsing is strict and hashing is stable") {
  const ExperimentConfig c = parse_config(kSmall1D);
  CHECK(c.schedule.levels == 2);
  CHECK(c.cells_per_eta == 4.0);
  CHECK(c.seed == 3u);
  CHECK(c.acceptance.at("ratio_min") == 0.9);
  CHECK(parse_config(c.to_ini()).hash() == c.hash());
  std::string reseeded = kSmall1D;
  reseeded.replace(reseeded.find("seed = 3"), 8, "seed = 4");
  CHECK(parse_config(reseeded).hash() != c.hash());
  CHECK_THROWS_AS(parse_config(with(kSmall1D, "solver", "seed = 4")), std::invalid_argument);

  CHECK_THROWS_AS(parse_config(with(kSmall1D, "domain", "colour = red")), std::invalid_argument);
  CHECK_THROWS_AS(parse_config(with(kSmall1D, "acceptance", "slope_max = 2")), std::invalid_argument);
  CHECK_THROWS_AS(parse_config(std::string("[extra]\nkey = 1\n") + kSmall1D), std::invalid_argument);
  CHECK_THROWS_AS(parse_config(std::string("stray = 1\n") + kSmall1D), std::invalid_argument);
  CHECK_THROWS_AS(parse_config(with(kSmall1D, "schedule", "levels = two")), std::invalid_argument);
  CHECK_THROWS_AS(parse_config(with(kSmall1D, "solver", "method = magic")), std::invalid_argument);
  CHECK_THROWS_AS(parse_config(with(kSmall1D, "solver", "mass = 1.5")), std::invalid_argument);
}

TEST_CASE("bubble exponent rule") {
  CHECK(bubble_exponent(2, 0.0) == doctest::Approx(0.6));
  CHECK(bubble_exponent(3, 0.0) == doctest::Approx(0.48));
  CHECK(bubble_exponent(2, 0.7) == 0.7);
  CHECK_THROWS_AS(bubble_exponent(2, 0.8), std::invalid_argument);
  CHECK_THROWS_AS(bubble_exponent(1, 0.0), std::invalid_argument);
}

TEST_CASE("gamma run: ratio near 1, deterministic bytes, CSV round trip, plots") {
  const ExperimentConfig c = parse_config(kSmall1D);
  const ExperimentReport r1 = run_gamma(c);
  const ExperimentReport r2 = run_gamma(c);
  const std::string csv = report_csv(r1);
  CHECK(csv == report_csv(r2));
  CHECK(csv.rfind("# schema=1\n", 0) == 0);
  REQUIRE(r1.rows.size() == 2);
  for (double ratio : r1.column("ratio")) CHECK(ratio == doctest::Approx(1.0).epsilon(0.1));
  for (double per : r1.column("perimeter")) CHECK(per == 1.0);
  CHECK(r1.all_pass());
  CHECK(r1.meta_value("sigma_h") != "");

  const auto dir = scratch("gamma");
  write_report(r1, dir.string(), "g");
  CHECK(slurp(dir / "g.csv") == csv);
  CHECK(std::filesystem::exists(dir / "g.timing.csv"));
  const ExperimentReport back = read_report_csv((dir / "g.csv").string());
  CHECK(back.columns == r1.columns);
  CHECK(back.kind == "gamma");
  REQUIRE(back.rows.size() == r1.rows.size());
  for (std::size_t i = 0; i < back.rows.size(); ++i)
    for (std::size_t j = 0; j < back.rows[i].size(); ++j) {
      if (std::isnan(r1.rows[i][j]))
        CHECK(std::isnan(back.rows[i][j]));
      else
        CHECK(back.rows[i][j] == r1.rows[i][j]);
    }
  CHECK(report_csv(back) == csv);

  const auto notes = emit_plots(back, dir.string(), "g");
  const std::string svg1 = slurp(dir / "g_ratio.svg");
  emit_plots(back, dir.string(), "g");
  CHECK(slurp(dir / "g_ratio.svg") == svg1);
  std::size_t circles = 0;
  for (std::size_t at = svg1.find("<circle"); at != std::string::npos; at = svg1.find("<circle", at + 1)) ++circles;
  CHECK(circles == r1.rows.size());
  // No xi ladder was configured.
  CHECK(notes.size() == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("uniform target: energy to zero, perimeter zero, ratio undefined") {
  std::string text = kSmall1D;
  text = with(text, "domain", "target = uniform");
  text.replace(text.find("target = halfspace\n"), 19, "");
  text.replace(text.find("ratio_min = 0.9\nratio_max = 1.1\n"), 32, "energy_max = 1e-8\n");
  const ExperimentConfig c = parse_config(text);
  const ExperimentReport r = run_gamma(c);
  for (double per : r.column("perimeter")) CHECK(per == 0.0);
  for (double ratio : r.column("ratio")) CHECK(std::isnan(ratio));
  for (double e : r.column("min_energy")) CHECK(e <= 1e-8);
  CHECK(r.all_pass());
  CHECK(report_csv(r).find(",undefined,") != std::string::npos);

  const auto dir = scratch("uniform");
  const auto notes = emit_plots(r, dir.string(), "u");
  CHECK(!std::filesystem::exists(dir / "u_ratio.svg"));
  CHECK(std::find_if(notes.begin(), notes.end(), [](const std::string& s) { return s.find("ratio") != std::string::npos; }) !=
        notes.end());
  std::filesystem::remove_all(dir);
}

TEST_CASE("scaling: constant field has zero defects, recovery sequence has positive slopes") {
  std::string uni = kSmall1D;
  uni.replace(uni.find("target = halfspace"), 18, "target = uniform");
  const ExperimentReport z = run_scaling(parse_config(uni));
  for (double d : z.column("d1_sq")) CHECK(d == 0.0);
  for (double d : z.column("d2_sq")) CHECK(d == 0.0);
  CHECK(z.meta_value("slope_d1") == "undefined");

  std::string text = with(kSmall1D, "acceptance", "slope_min = 0.7");
  text.replace(text.find("levels = 2"), 10, "levels = 3");
  const ExperimentReport r = run_scaling(parse_config(text));
  REQUIRE(r.rows.size() == 3);
  for (double d : r.column("d1_sq")) CHECK(d > 0.0);
  CHECK(std::stod(r.meta_value("slope_d1")) > 0.7);
  CHECK(std::stod(r.meta_value("slope_d2")) > 0.7);
}

TEST_CASE("mass run in projection-only mode keeps the mean") {
  std::string text = with(kSmall1D, "solver", "mass = 0.4");
  text = with(text, "acceptance", "mass_error_max = 1e-12");
  text.replace(text.find("window = 4"), 10, "window = 0");
  const ExperimentConfig c = parse_config(text);
  const ExperimentReport r = run_mass(c);
  CHECK(r.meta_value("mode") == "projection only");
  for (double e : r.column("mass_error")) CHECK(e <= 1e-12);
  for (double b : r.column("bubble_energy")) CHECK(std::isnan(b));
  bool mass_pred = false;
  for (const auto& p : r.predicates)
    if (p.name == "mass_error_max") mass_pred = p.pass;
  CHECK(mass_pred);

  ExperimentConfig none = c;
  none.mass.reset();
  CHECK_THROWS_AS(run_mass(none), std::invalid_argument);
}

TEST_CASE("unresolved scales are rejected before any compute") {
  const ExperimentConfig c = parse_config(with(kSmall1D, "domain", "max_cells = 100"));
  CHECK_THROWS_WITH_AS(run_gamma(c), doctest::Contains("unresolved scales"), std::invalid_argument);
}

TEST_CASE("unfold check: identities exact, audit passes") {
  std::string text = with(kSmall1D, "acceptance", "identity_tol = 1e-12");
  text.replace(text.find("levels = 2"), 10, "levels = 3");
  const ExperimentReport r = run_unfold_check(parse_config(text), 4);
  CHECK(r.label_column == "test");
  std::size_t identities = 0;
  for (std::size_t i = 0; i < r.rows.size(); ++i)
    if (r.labels[i].rfind("identity_", 0) == 0) {
      ++identities;
      CHECK(r.rows[i].back() == 1.0);
    }
  CHECK(identities == 4 * 6);
  for (const auto& p : r.predicates) CHECK_MESSAGE(p.pass, p.name << ": " << p.detail);
  const auto csv = report_csv(r);
  CHECK(csv.find("test,n,delta,eta,lhs,rhs,abs_err,pass\n") != std::string::npos);
  const auto dir = scratch("unfold");
  write_report(r, dir.string(), "u");
  CHECK(report_csv(read_report_csv((dir / "u.csv").string())) == csv);
  std::filesystem::remove_all(dir);
}
