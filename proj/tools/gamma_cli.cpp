#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "twoscale/cell_problem.hpp"
#include "twoscale/energy.hpp"
#include "twoscale/geodesic.hpp"
#include "twoscale/harness.hpp"
#include "twoscale/potential_spec.hpp"
#include "twoscale/profile.hpp"

using namespace twoscale;
using nlohmann::json;

namespace {

const char* kDefaultPotential = "composite{theta1=0.5,theta2=0.5,c1=1,c2=4,c3=9,base=quartic}";

std::string g17(double v) {
  if (!std::isfinite(v)) return "undefined";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<double> split_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

// Wells default to -e1, e1 in R^M when the spec does not name them.
PotentialPtr potential_with_wells(const std::string& text, int N, int M) {
  PotentialSpec spec = parse_potential_spec(text);
  if (M > 1) {
    std::string a = "-1", b = "1";
    for (int i = 1; i < M; ++i) {
      a += ":0";
      b += ":0";
    }
    spec.params.emplace("a", a);
    spec.params.emplace("b", b);
  }
  return build_potential(spec, N);
}

std::ostream& open_out(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot write " + path);
  return file;
}

int finish(const ExperimentReport& r, const ExperimentConfig& cfg) {
  const std::string dir = cfg.out_dir;
  write_report(r, dir, cfg.name);
  std::cout << "report: " << (std::filesystem::path(dir) / (cfg.name + ".csv")).string() << "\n";
  if (cfg.plots)
    for (const auto& note : emit_plots(r, dir, cfg.name)) std::cout << "plot: " << note << "\n";
  for (const auto& p : r.predicates) std::cout << (p.pass ? "PASS " : "FAIL ") << p.name << ": " << p.detail << "\n";
  const std::string skipped = r.meta_value("skipped_predicates");
  if (!skipped.empty()) std::cout << "skipped predicates: " << skipped << "\n";
  return r.all_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-scale phase-field laboratory"};
  app.require_subcommand(1);

  std::string config, out_dir;
  auto add_config = [&](CLI::App* s) {
    s->add_option("config", config, "experiment config (INI)")->required()->check(CLI::ExistingFile);
    s->add_option("--out", out_dir, "override output directory");
  };
  auto* run = app.add_subcommand("run", "Gamma-convergence experiment");
  add_config(run);
  auto* scaling = app.add_subcommand("scaling", "defect-norm scaling along the schedule");
  add_config(scaling);
  auto* mass = app.add_subcommand("mass", "mass-constrained experiment");
  add_config(mass);
  int fields = 20;
  auto* unfold = app.add_subcommand("unfold-check", "unfolding identities and scaling audit");
  add_config(unfold);
  unfold->add_option("--fields", fields, "random fields for the identity audit");

  std::string report_path;
  auto* plot = app.add_subcommand("plot", "plots from a report CSV");
  plot->add_option("report", report_path, "report CSV")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", out_dir, "output directory (default: next to the report)");

  std::string potential = kDefaultPotential, zlist = "-1,-0.5,0,0.5,1", ladder, out;
  double xi = 0.0;
  int grid = 32, dim_n = 1, dim_m = 1, nodes = 0;
  auto* cellprob = app.add_subcommand("cellprob", "auxiliary cell potential W^xi");
  cellprob->add_option("--potential", potential);
  cellprob->add_option("--dim-n", dim_n, "spatial dimension N");
  cellprob->add_option("--xi", xi, "single xi");
  cellprob->add_option("--z", zlist, "comma-separated z points; components joined by ':'");
  cellprob->add_option("--grid", grid, "cell nodes per axis");
  cellprob->add_option("--ladder", ladder, "comma-separated xi ladder");
  cellprob->add_option("--out", out, "CSV file (default stdout)");

  std::string trace;
  auto* sigma = app.add_subcommand("sigma", "surface tension sigma_h or sigma_xi");
  sigma->add_option("--potential", potential);
  sigma->add_option("--dim-n", dim_n, "spatial dimension N");
  sigma->add_option("--dim-m", dim_m, "phase-space dimension M");
  sigma->add_option("--xi", xi, "compute sigma_xi from a W^xi cache instead of sigma_h");
  sigma->add_option("--nodes", nodes, "curve nodes, or cache nodes per axis with --xi");
  sigma->add_option("--grid", grid, "cell nodes per axis with --xi");
  sigma->add_option("--trace", trace, "file for the energy trace");

  double eps = 0.1, lambda = 0.0;
  int samples = 1001;
  auto* profile = app.add_subcommand("profile", "optimal transition profile");
  profile->add_option("--potential", potential);
  profile->add_option("--eps", eps);
  profile->add_option("--lambda", lambda, "0 = (0.01 sigma / L)^2");
  profile->add_option("--samples", samples);
  profile->add_option("--out", out, "CSV file (default stdout)");

  std::string target = "halfspace";
  double interface = 0.5, radius = 0.25;
  long long cells = 256;
  auto* recover = app.add_subcommand("recover", "recovery sequence on the unit box");
  recover->add_option("--potential", potential);
  recover->add_option("--dim", dim_n);
  recover->add_option("--cells", cells, "cells per axis");
  recover->add_option("--eps", eps);
  recover->add_option("--lambda", lambda);
  recover->add_option("--target", target)->check(CLI::IsMember({"halfspace", "disk"}));
  recover->add_option("--interface", interface);
  recover->add_option("--radius", radius);
  recover->add_option("--out", out)->required();

  double delta = 0.01, eta = 0.001;
  std::string init = "recovery", in_file, method = "auto";
  std::optional<double> mass_fraction;
  int max_iter = 2000;
  unsigned seed = 1;
  auto* mini = app.add_subcommand("minimize", "minimize the two-scale energy on the unit box");
  mini->add_option("--potential", potential);
  mini->add_option("--dim", dim_n);
  mini->add_option("--cells", cells, "cells per axis; h = 1/cells must resolve eta");
  mini->add_option("--eps", eps);
  mini->add_option("--delta", delta);
  mini->add_option("--eta", eta);
  mini->add_option("--init", init)->check(CLI::IsMember({"recovery", "random", "file"}));
  mini->add_option("--in", in_file, "initial GridField for --init file");
  mini->add_option("--mass", mass_fraction);
  mini->add_option("--method", method)->check(CLI::IsMember({"auto", "newton", "preconditioned", "gradient"}));
  mini->add_option("--max-iter", max_iter);
  mini->add_option("--seed", seed);
  mini->add_option("--target", target)->check(CLI::IsMember({"halfspace", "disk"}));
  mini->add_option("--out", out, "GridField file for the minimizer");

  CLI11_PARSE(app, argc, argv);

  try {
    auto load = [&] {
      ExperimentConfig c = load_config(config);
      if (!out_dir.empty()) c.out_dir = out_dir;
      return c;
    };
    if (*run) {
      const auto c = load();
      return finish(run_gamma(c), c);
    }
    if (*scaling) {
      const auto c = load();
      return finish(run_scaling(c), c);
    }
    if (*mass) {
      const auto c = load();
      return finish(run_mass(c), c);
    }
    if (*unfold) {
      const auto c = load();
      return finish(run_unfold_check(c, fields), c);
    }
    if (*plot) {
      const ExperimentReport r = read_report_csv(report_path);
      const std::filesystem::path p(report_path);
      const std::string dir = out_dir.empty() ? (p.has_parent_path() ? p.parent_path().string() : ".") : out_dir;
      for (const auto& note : emit_plots(r, dir, p.stem().string())) std::cout << "plot: " << note << "\n";
      return 0;
    }
    if (*cellprob) {
      const PotentialPtr p = build_potential(potential, dim_n);
      std::vector<double> xis = ladder.empty() ? std::vector<double>{xi > 0.0 ? xi : 0.01} : split_list(ladder);
      std::sort(xis.rbegin(), xis.rend());
      std::vector<Eigen::VectorXd> zs;
      std::stringstream ss(zlist);
      std::string item;
      while (std::getline(ss, item, ',')) zs.push_back(parse_vector(item));
      const ConvergenceTable t = convergence_scan(*p, zs, xis, CellGrid{grid, grid});
      std::ofstream file;
      std::ostream& o = open_out(out, file);
      o << "z,xi,W_xi,W_h,gap,iters,feasible\n";
      for (std::size_t i = 0; i < t.xi.size(); ++i)
        for (std::size_t k = 0; k < t.z.size(); ++k) {
          std::string z;
          for (int c = 0; c < t.z[k].size(); ++c) z += (c ? ":" : "") + g17(t.z[k][c]);
          o << z << "," << g17(t.xi[i]) << "," << g17(t.value[i][k]) << "," << g17(t.W_h[k]) << ","
            << g17(t.W_h[k] - t.value[i][k]) << "," << t.iterations[i][k] << "," << int(t.feasible[i][k]) << "\n";
        }
      return 0;
    }
    if (*sigma) {
      const PotentialPtr p = potential_with_wells(potential, dim_n, dim_m);
      TensionResult r;
      if (xi > 0.0) {
        Eigen::VectorXd lo = p->a().cwiseMin(p->b()), hi = p->a().cwiseMax(p->b());
        if (p->M() > 1) {
          const double pad = 0.5 * (p->b() - p->a()).norm();
          lo.array() -= pad;
          hi.array() += pad;
        }
        const CellCache cache = build_cell_cache(*p, xi, lo, hi, nodes > 0 ? nodes : 101, CellGrid{grid, grid});
        r = sigma_xi(cache);
      } else {
        GeodesicOptions g;
        if (nodes > 0) g.nodes = nodes;
        r = sigma_h(HomogenizedPotential(p), g);
      }
      json line = {{"sigma", r.value}, {"method", r.method}, {"nodes", r.nodes}, {"energy_trace_file", nullptr}};
      if (!trace.empty()) {
        std::ofstream f(trace, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + trace);
        f << "sweep,energy\n";
        for (std::size_t i = 0; i < r.trace.size(); ++i) f << i << "," << g17(r.trace[i]) << "\n";
        line["energy_trace_file"] = trace;
      }
      std::cout << line.dump() << "\n";
      return 0;
    }
    if (*profile) {
      const PotentialPtr p = build_potential(potential, 1);
      const HomogenizedPotential Wh(p);
      const TensionResult s = sigma_h(Wh);
      const Curve gamma = p->M() == 1 ? Curve::segment(p->a(), p->b(), 2) : s.curve;
      const double lam = lambda > 0.0 ? lambda : default_lambda(s.value, gamma.length());
      const TransitionProfile prof = build_profile(gamma, [&](const double* z) { return Wh(z); }, eps, lam);
      std::ofstream file;
      std::ostream& o = open_out(out, file);
      o << "# tau=" << g17(prof.tau) << " lambda=" << g17(lam) << "\nt,g";
      for (int c = 0; c < p->M(); ++c) o << ",u" << c;
      o << "\n";
      for (int i = 0; i < samples; ++i) {
        const double t = -prof.tau + 2.0 * prof.tau * i / (samples - 1);
        const Eigen::VectorXd u = prof.u(t);
        o << g17(t) << "," << g17(prof.g(t));
        for (int c = 0; c < u.size(); ++c) o << "," << g17(u[c]);
        o << "\n";
      }
      return 0;
    }

    // recover and minimize share the recovery construction on the unit box.
    auto build_recovery = [&](const GridBox& box, const PotentialPtr& p) {
      const HomogenizedPotential Wh(p);
      const TensionResult s = sigma_h(Wh);
      const Curve gamma = p->M() == 1 ? Curve::segment(p->a(), p->b(), 2) : s.curve;
      const double lam = lambda > 0.0 ? lambda : default_lambda(s.value, gamma.length());
      const TransitionProfile prof = build_profile(gamma, [&](const double* z) { return Wh(z); }, eps, lam);
      PhaseMask A{box, std::vector<std::uint8_t>(static_cast<std::size_t>(box.size()))};
      std::vector<std::int64_t> idx(box.N);
      for (std::int64_t i = 0; i < box.size(); ++i) {
        box.unravel(i, idx.data());
        double d2 = 0.0;
        for (int ax = 0; ax < box.N; ++ax) d2 += std::pow(box.center(ax, idx[ax]) - 0.5, 2);
        A.inside[i] = target == "halfspace" ? box.center(0, idx[0]) < interface : d2 < radius * radius;
      }
      GridField u = recovery_sequence(signed_distance(A), prof);
      u.a = p->a();
      u.b = p->b();
      return u;
    };
    if (*recover) {
      const PotentialPtr p = build_potential(potential, dim_n);
      const GridField u = build_recovery(GridBox::unit_domain(dim_n, cells), p);
      write_grid_field(u, out);
      std::cout << json{{"file", out}, {"cells", u.cells()}, {"h", u.box.h}}.dump() << "\n";
      return 0;
    }
    if (*mini) {
      const PotentialPtr p = build_potential(potential, dim_n);
      const GridBox box = GridBox::unit_domain(dim_n, cells);
      GridField u0;
      if (init == "file") {
        if (in_file.empty()) throw std::invalid_argument("--init file needs --in");
        u0 = read_grid_field(in_file);
      } else if (init == "random") {
        u0 = random_field(box, p->a(), p->b(), seed);
      } else {
        u0 = build_recovery(box, p);
      }
      MinimizeOptions o;
      o.mass = mass_fraction;
      o.max_iter = max_iter;
      o.method = method == "newton"           ? MinimizeOptions::Method::newton
                 : method == "preconditioned" ? MinimizeOptions::Method::preconditioned
                 : method == "gradient"       ? MinimizeOptions::Method::gradient
                                              : MinimizeOptions::Method::automatic;
      const Scales sc{eps, delta, eta};
      const MinimizeResult r = minimize(u0, sc, *p, o);
      if (!out.empty()) write_grid_field(r.u, out);
      const HomogenizedPotential Wh(p);
      const double per = perimeter(r.u, p->a(), p->b());
      const double sh = sigma_h(Wh).value;
      json line = {{"energy", r.energy.total},       {"potential_part", r.energy.potential}, {"gradient_part", r.energy.gradient},
                   {"iterations", r.iterations},     {"converged", r.converged},            {"method", r.method},
                   {"perimeter", per},               {"sigma_h", sh},                       {"max_mass_error", r.max_mass_error}};
      line["ratio"] = per > 0.0 ? json(r.energy.total / (sh * per)) : json("undefined");
      std::cout << line.dump() << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "gamma: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
