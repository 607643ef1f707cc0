#pragma once

#include <map>
#include <string>

#include "twoscale/potentials.hpp"

namespace twoscale {

// Parsed form of `name{key=value,...}`; vector values use ':' between components.
struct PotentialSpec {
  std::string kind;
  std::map<std::string, std::string> params;
};

PotentialSpec parse_potential_spec(const std::string& text);

// Builds `composite{theta1,theta2,c1,c2,c3,base=quartic,a,b,ramp,resolution,R}` or
// `uniform{base=quartic,scale,a,b,R}` in spatial dimension N.
PotentialPtr build_potential(const std::string& text, int N);
PotentialPtr build_potential(const PotentialSpec& spec, int N);

Vec parse_vector(const std::string& text);

}  // namespace twoscale
