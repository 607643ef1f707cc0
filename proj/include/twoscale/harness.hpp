#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "twoscale/energy.hpp"
#include "twoscale/geodesic.hpp"
#include "twoscale/profile.hpp"

namespace twoscale {

struct ScaleLevel {
  int n = 0;
  double eps = 0.0, delta = 0.0, eta = 0.0;
};

// eps_n = eps0 q^n, delta_n = eps_n^p, eta_n = delta_n^r for n = 0..levels-1.
struct ScheduleSpec {
  double eps0 = 0.1, q = 0.5, p = 2.0, r = 2.0;
  int levels = 4;
  std::vector<ScaleLevel> generate() const;
};

// Rejects schedules outside eta << delta << eps: every scale positive and decreasing,
// eta < delta < eps, and eta/delta, delta/eps strictly decreasing.
void check_regime(const std::vector<ScaleLevel>& schedule);

struct ExperimentConfig {
  // [potential]
  std::string potential = "composite{theta1=0.5,theta2=0.5,c1=1,c2=4,c3=9,base=quartic}";
  // [domain]
  int dim = 1;
  double length = 1.0;
  std::string target = "halfspace";  // halfspace | disk | uniform
  double interface = 0.5;            // halfspace: A = {x_1 < interface}
  double radius = 0.25;              // disk centred in the box
  double window = 4.0;               // 1D half-width around the interface in units of eps; 0 = whole domain
  double max_cells = 1e8;
  // [schedule]
  ScheduleSpec schedule;
  double cells_per_eta = 8.0;
  // [solver]
  int max_iter = 200;
  double tol = 1e-10;
  std::string method = "auto";  // auto | newton | preconditioned | gradient
  unsigned seed = 1;
  std::optional<double> mass;
  double alpha = 0.0;   // bubble radius exponent; 0 = 1.2 * 2/(N+2) clipped into (1/N, 3/(N+2))
  double lambda = 0.0;  // profile lambda; 0 = (0.01 sigma_h / L)^2
  std::vector<double> xi_ladder;
  int xi_nodes = 101;
  int cell_grid = 32;
  bool minimize = true;
  // [output]
  std::string out_dir = "out";
  std::string name = "report";
  bool plots = true;
  // [acceptance]
  std::map<std::string, double> acceptance;

  std::string to_ini() const;
  std::string hash() const;  // FNV-1a of to_ini() without [output]
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

struct Predicate {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ExperimentReport {
  std::string kind;
  std::vector<std::pair<std::string, std::string>> meta;
  std::string label_column;          // optional leading text column
  std::vector<std::string> labels;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;  // NaN marks an undefined entry
  std::vector<double> wall;               // seconds per row; written to a sidecar, not the CSV
  std::vector<Predicate> predicates;

  bool all_pass() const;
  std::vector<double> column(const std::string& name) const;
  std::string meta_value(const std::string& key) const;  // empty when absent
};

// Gamma-convergence experiment: recovery init, minimization, sigma_h Per comparison.
ExperimentReport run_gamma(const ExperimentConfig& cfg);
// Defect norms of recovery sequences along the schedule with fitted log-log slopes.
ExperimentReport run_scaling(const ExperimentConfig& cfg);
// Mass-constrained experiment with bubble repair (N >= 2) or projection only (N = 1).
ExperimentReport run_mass(const ExperimentConfig& cfg);
// Integral identities and product rules of the unfolding operators on random fields,
// followed by the defect scaling audit of the configured schedule.
ExperimentReport run_unfold_check(const ExperimentConfig& cfg, int fields = 20);

struct BubbleLevel {
  ScaleLevel level;
  double radius = 0.0, alpha = 0.0;
  double c_analytic = 0.0, c_grid = 0.0;
  double drift = 0.0;           // |m_n - m| of the recovery sequence, as a mean
  double energy = 0.0;          // F_n(v_n, B_n) on a fine two-scale window over the ball
  double bound_volume = 0.0;    // r^N / eps
  double bound_gradient = 0.0;  // eps^3 / r^(N+2)
  double clearance = 0.0;
};

// Recovery and repair on a macro grid resolving the transition layer, bubble energy on a
// window grid resolving eta. Requires N >= 2 and a mass fraction.
std::vector<BubbleLevel> bubble_study(const ExperimentConfig& cfg);

double bubble_exponent(int N, double requested);

std::string report_csv(const ExperimentReport& r);
// Writes <dir>/<name>.csv and <dir>/<name>.timing.csv.
void write_report(const ExperimentReport& r, const std::string& dir, const std::string& name);
ExperimentReport read_report_csv(const std::string& path);

// SVG plots of the report; returns notes for skipped plots.
std::vector<std::string> emit_plots(const ExperimentReport& r, const std::string& dir, const std::string& name);

}  // namespace twoscale
