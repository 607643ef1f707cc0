#include "twoscale/potential_spec.hpp"

#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace twoscale {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("potential parameter '" + key + "' is not a number: " + v);
  }
  if (pos != v.size()) throw std::invalid_argument("potential parameter '" + key + "' is not a number: " + v);
  return d;
}

}  // namespace

Vec parse_vector(const std::string& text) {
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) vals.push_back(to_double("vector", trim(item)));
  if (vals.empty()) throw std::invalid_argument("empty vector value");
  return Eigen::Map<Vec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

PotentialSpec parse_potential_spec(const std::string& raw) {
  const std::string text = trim(raw);
  PotentialSpec spec;
  const auto lb = text.find('{');
  if (lb == std::string::npos) {
    spec.kind = text;
    return spec;
  }
  if (text.back() != '}') throw std::invalid_argument("potential spec missing closing brace: " + text);
  spec.kind = trim(text.substr(0, lb));
  std::stringstream ss(text.substr(lb + 1, text.size() - lb - 2));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("potential parameter without value: " + item);
    const std::string key = trim(item.substr(0, eq));
    if (spec.params.count(key)) throw std::invalid_argument("duplicate potential parameter: " + key);
    spec.params[key] = trim(item.substr(eq + 1));
  }
  return spec;
}

PotentialPtr build_potential(const std::string& text, int N) { return build_potential(parse_potential_spec(text), N); }

PotentialPtr build_potential(const PotentialSpec& spec, int N) {
  auto get = [&](const std::string& k, const std::string& def) {
    auto it = spec.params.find(k);
    return it == spec.params.end() ? def : it->second;
  };
  auto num = [&](const std::string& k, double def) {
    auto it = spec.params.find(k);
    return it == spec.params.end() ? def : to_double(k, it->second);
  };
  std::set<std::string> allowed;
  if (spec.kind == "composite")
    allowed = {"theta1", "theta2", "c1", "c2", "c3", "base", "a", "b", "ramp", "resolution", "R"};
  else if (spec.kind == "uniform")
    allowed = {"base", "scale", "a", "b", "R"};
  else
    throw std::invalid_argument("unknown potential kind: " + spec.kind);
  for (const auto& [k, v] : spec.params)
    if (!allowed.count(k)) throw std::invalid_argument("unknown potential parameter: " + k);
  if (get("base", "quartic") != "quartic") throw std::invalid_argument("unsupported base: " + get("base", ""));
  const Vec a = parse_vector(get("a", "-1")), b = parse_vector(get("b", "1"));
  if (a.size() != b.size()) throw std::invalid_argument("wells a and b have different dimensions");
  if (spec.kind == "uniform") {
    auto p = make_uniform(N, std::make_shared<QuarticWell>(num("scale", 1.0), a, b), num("R", 0.0));
    return p;
  }
  CompositeOptions opts;
  opts.resolution = static_cast<int>(num("resolution", 64));
  opts.ramp_cells = num("ramp", 0.0);
  opts.growth_R = num("R", 0.0);
  return make_composite(N, num("theta1", 0.5), num("theta2", 0.5),
                        std::make_shared<QuarticWell>(num("c1", 1.0), a, b),
                        std::make_shared<QuarticWell>(num("c2", 4.0), a, b),
                        std::make_shared<QuarticWell>(num("c3", 9.0), a, b), opts);
}

}  // namespace twoscale
