#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "twoscale/harness.hpp"

namespace twoscale {

namespace {

struct Series {
  std::string name;
  std::vector<double> x, y;
};

struct Axes {
  std::string title, xlabel, ylabel;
  bool logx = false, logy = false;
  std::optional<double> hline;
  std::string hline_label;
  bool integer_x = false;  // one tick per integer abscissa
};

const char* kColors[] = {"#1f5fa8", "#c2452d", "#2e8b57", "#7a4fa0"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// Enough significant digits to tell neighbouring ticks apart.
std::string tick(double v, double step) {
  int digits = 3;
  if (step > 0.0 && v != 0.0) digits = std::clamp(1 + static_cast<int>(std::ceil(std::log10(std::abs(v) / step))), 3, 12);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string short_number(const std::string& s) {
  if (s.empty() || s == "undefined") return s.empty() ? "undefined" : s;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", std::stod(s));
  return buf;
}

std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

// Fixed-size line plot; coordinates rounded to 0.01 px so output bytes depend only on the data.
std::string svg(const Axes& ax, const std::vector<Series>& series) {
  const double W = 540, H = 380, L = 90, R = 20, T = 40, B = 55;
  auto tx = [&](double v) { return ax.logx ? std::log10(v) : v; };
  auto ty = [&](double v) { return ax.logy ? std::log10(v) : v; };
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, tx(s.x[i]));
      x1 = std::max(x1, tx(s.x[i]));
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  if (ax.hline) {
    y0 = std::min(y0, ty(*ax.hline));
    y1 = std::max(y1, ty(*ax.hline));
  }
  if (x1 - x0 <= 0.0) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (y1 - y0 <= 0.0) {
    const double pad = std::max(std::abs(y0) * 0.05, 1e-3);
    y0 -= pad;
    y1 += pad;
  }
  const double px = 0.05 * (x1 - x0), py = 0.08 * (y1 - y0);
  x0 -= px;
  x1 += px;
  y0 -= py;
  y1 += py;
  auto sx = [&](double v) { return L + (tx(v) - x0) / (x1 - x0) * (W - L - R); };
  auto sy = [&](double v) { return H - B - (ty(v) - y0) / (y1 - y0) * (H - T - B); };
  auto unx = [&](double u) { return ax.logx ? std::pow(10.0, u) : u; };
  auto uny = [&](double u) { return ax.logy ? std::pow(10.0, u) : u; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(W / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"13\">" << escape(ax.title) << "</text>\n";
  o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  auto xtick = [&](double gx, const std::string& label) {
    o << "<line x1=\"" << num(gx) << "\" y1=\"" << H - B << "\" x2=\"" << num(gx) << "\" y2=\"" << H - B + 4 << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << num(gx) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << label << "</text>\n";
  };
  if (ax.integer_x) {
    for (double v = std::ceil(x0) + 0.0; v <= x1; v += 1.0) xtick(sx(v), tick(v, 1.0));
  }
  for (int k = 0; k <= 4; ++k) {
    const double ux = x0 + (x1 - x0) * k / 4.0, uy = y0 + (y1 - y0) * k / 4.0;
    const double gx = L + (W - L - R) * k / 4.0, gy = H - B - (H - T - B) * k / 4.0;
    if (!ax.integer_x) xtick(gx, tick(unx(ux), std::abs(unx(ux) - unx(ux - (x1 - x0) / 4.0))));
    const std::string ylab = tick(uny(uy), std::abs(uny(uy) - uny(uy - (y1 - y0) / 4.0)));
    o << "<line x1=\"" << L - 4 << "\" y1=\"" << num(gy) << "\" x2=\"" << L << "\" y2=\"" << num(gy) << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << L - 6 << "\" y=\"" << num(gy + 4) << "\" text-anchor=\"end\">" << ylab << "</text>\n";
  }
  o << "<text x=\"" << num((L + W - R) / 2) << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">" << escape(ax.xlabel) << "</text>\n";
  o << "<text x=\"14\" y=\"" << num((T + H - B) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " << num((T + H - B) / 2)
    << ")\">" << escape(ax.ylabel) << "</text>\n";
  if (ax.hline) {
    const double y = sy(*ax.hline);
    o << "<line x1=\"" << L << "\" y1=\"" << num(y) << "\" x2=\"" << W - R << "\" y2=\"" << num(y)
      << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
    o << "<text x=\"" << W - R - 4 << "\" y=\"" << num(y - 4) << "\" text-anchor=\"end\" fill=\"gray\">" << escape(ax.hline_label)
      << "</text>\n";
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* col = kColors[k % 4];
    o << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) o << (i ? " " : "") << num(sx(s.x[i])) << "," << num(sy(s.y[i]));
    o << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      o << "<circle cx=\"" << num(sx(s.x[i])) << "\" cy=\"" << num(sy(s.y[i])) << "\" r=\"3\" fill=\"" << col << "\"/>\n";
    o << "<text x=\"" << L + 8 << "\" y=\"" << T + 16 + 14 * k << "\" fill=\"" << col << "\">" << escape(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

bool has_column(const ExperimentReport& r, const std::string& c) {
  return std::find(r.columns.begin(), r.columns.end(), c) != r.columns.end();
}

// Rows where both entries are finite (and positive on log axes).
Series pick(const ExperimentReport& r, const std::string& name, const std::string& xc, const std::string& yc, bool logx, bool logy) {
  Series s;
  s.name = name;
  const auto x = r.column(xc), y = r.column(yc);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) continue;
    if ((logx && x[i] <= 0.0) || (logy && y[i] <= 0.0)) continue;
    s.x.push_back(x[i]);
    s.y.push_back(y[i]);
  }
  return s;
}

void write(const std::filesystem::path& path, const std::string& text, std::vector<std::string>& files) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("emit_plots: cannot write " + path.string());
  f << text;
  files.push_back(path.string());
}

}  // namespace

std::vector<std::string> emit_plots(const ExperimentReport& r, const std::string& dir, const std::string& name) {
  if (r.rows.empty()) throw std::invalid_argument("emit_plots: empty report");
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  std::vector<std::string> notes, files;

  if (has_column(r, "ratio")) {
    const Series s = pick(r, "min energy / sigma_h Per", "n", "ratio", false, false);
    if (s.x.empty()) {
      notes.push_back("ratio plot skipped: ratio column is empty");
    } else {
      Axes ax{"Energy ratio along the schedule", "level n", "ratio", false, false, 1.0, "1", true};
      write(base / (name + "_ratio.svg"), svg(ax, {s}), files);
    }
  }
  if (has_column(r, "d1_sq") && has_column(r, "d2_sq")) {
    const Series s1 = pick(r, "|U1 u - u|^2 vs delta (slope " + short_number(r.meta_value("slope_d1")) + ")", "delta", "d1_sq", true, true);
    const Series s2 = pick(r, "|U2 u - U1 u|^2 vs eta/delta (slope " + short_number(r.meta_value("slope_d2")) + ")", "eta_over_delta", "d2_sq", true, true);
    if (s1.x.empty() && s2.x.empty()) {
      notes.push_back("defect plot skipped: defect columns are empty or zero");
    } else {
      std::vector<Series> ss;
      if (!s1.x.empty()) ss.push_back(s1);
      if (!s2.x.empty()) ss.push_back(s2);
      Axes ax{"Defect norms", "scale ratio", "squared defect", true, true, std::nullopt, ""};
      write(base / (name + "_defects.svg"), svg(ax, ss), files);
    }
  }
  if (has_column(r, "bubble_energy")) {
    const Series s = pick(r, "bubble energy", "n", "bubble_energy", false, true);
    if (s.x.empty()) {
      notes.push_back("bubble plot skipped: bubble_energy column is empty");
    } else {
      Axes ax{"Bubble energy along the schedule", "level n", "energy", false, true, std::nullopt, "", true};
      write(base / (name + "_bubble.svg"), svg(ax, {s}), files);
    }
  }
  const std::string ladder = r.meta_value("sigma_xi");
  if (!ladder.empty() && ladder.find(':') != std::string::npos) {
    Series s;
    s.name = "sigma_xi";
    std::stringstream ss(ladder);
    std::string item;
    while (std::getline(ss, item, ';')) {
      const auto c = item.find(':');
      s.x.push_back(std::stod(item.substr(0, c)));
      s.y.push_back(std::stod(item.substr(c + 1)));
    }
    const std::string sh = r.meta_value("sigma_h");
    Axes ax{"Auxiliary surface tension ladder", "xi", "sigma", true, false, std::nullopt, "sigma_h"};
    if (!sh.empty() && sh != "undefined") ax.hline = std::stod(sh);
    write(base / (name + "_sigma_xi.svg"), svg(ax, {s}), files);
  } else if (r.kind == "gamma") {
    notes.push_back("sigma_xi plot skipped: no ladder in the report");
  }
  if (files.empty() && notes.empty()) notes.push_back("no plottable columns in a " + r.kind + " report");
  return notes;
}

}  // namespace twoscale
