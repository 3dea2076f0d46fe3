#pragma once

#include "adn/grid.hpp"

#include <random>

namespace adn::testing {

inline grid::Bus plain_bus(int id) { return {id, 0.0, 0.0, 0.9025, 1.1025}; }

inline grid::GridModel two_bus(double r, double x) {
  return {{plain_bus(0), plain_bus(1)}, {{0, 1, r, x, 10.0}}, 0, {}, {}};
}

/// Chain 0-1-2 with sources at buses 1 and 2 and an energy unit at bus 2.
inline grid::GridModel three_bus() {
  std::vector<grid::Bus> buses{plain_bus(0), plain_bus(1), plain_bus(2)};
  std::vector<grid::Branch> branches{{0, 1, 0.01, 0.02, 4.0}, {1, 2, 0.015, 0.025, 4.0}};
  std::vector<grid::Source> sources{{1, "wind", 1.0}, {2, "pv", 1.0}};
  std::vector<grid::EnergyUnit> units{{2, -0.5, 0.5, -1.0, 1.0, 0.0, 0.01, 0.95}};
  return {buses, branches, 0, sources, units};
}

/// Random radial feeder: bus i > 0 hangs off a uniformly chosen earlier bus.
inline grid::GridModel random_tree(int n, unsigned seed, bool shunts = true) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> imp(0.002, 0.02);
  std::uniform_real_distribution<double> sh(-0.002, 0.002);
  std::vector<grid::Bus> buses;
  std::vector<grid::Branch> branches;
  std::vector<grid::Source> sources;
  std::vector<grid::EnergyUnit> units;
  for (int i = 0; i < n; ++i) {
    grid::Bus b = plain_bus(100 + i);
    if (shunts && i > 0) {
      b.g = std::abs(sh(rng));
      b.b = sh(rng);
    }
    buses.push_back(b);
    if (i > 0) {
      const int parent = std::uniform_int_distribution<int>(0, i - 1)(rng);
      branches.push_back({parent, i, imp(rng), imp(rng), 10.0});
      if (i % 3 == 0) sources.push_back({i, "wind", 1.0});
      if (i % 7 == 0) units.push_back({i, -0.3, 0.3, -1.0, 1.0, 0.0, 0.0, 1.0});
    }
  }
  return {buses, branches, 0, sources, units};
}

}  // namespace adn::testing
