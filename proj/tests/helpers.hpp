#pragma once

#include <random>
#include <string>
#include <vector>

#include "core/stratum.hpp"
#include "core/triangle.hpp"

namespace testutil {

using namespace delaycast;

// R districts on a grid, two age bands x two genders, fixed populations.
inline StratumFrame small_frame(int n_districts, double pop = 50000) {
  std::vector<District> districts;
  for (int r = 0; r < n_districts; ++r) {
    District d;
    d.id = "D" + std::to_string(100 + r);
    d.name = "District " + std::to_string(r);
    d.lon = 6.0 + 0.5 * (r % 5);
    d.lat = 47.0 + 0.5 * (r / 5);
    districts.push_back(d);
  }
  std::vector<Stratum> groups = {{"15-34", "F"}, {"15-34", "M"}, {"35-59", "F"}, {"35-59", "M"}};
  std::vector<double> pops;
  for (int r = 0; r < n_districts; ++r) {
    for (std::size_t g = 0; g < groups.size(); ++g) {
      pops.push_back(pop + 1000.0 * r + 100.0 * static_cast<double>(g));
    }
  }
  return StratumFrame(std::move(districts), std::move(groups), std::move(pops));
}

inline CaseTriangle empty_triangle(const StratumFrame& frame, Date start, int n_rows, int anchor,
                                   int d_max) {
  std::vector<std::string> ids;
  for (const auto& d : frame.districts()) ids.push_back(d.id);
  return CaseTriangle(start, n_rows, anchor, d_max, std::move(ids), frame.groups());
}

// Fills every cell (observed or not) with values; unobserved cells are marked
// predicted so aggregation treats the triangle as complete.
template <typename F>
inline void fill_all(CaseTriangle& tri, F value_of) {
  for (int t = 1; t <= tri.n_rows(); ++t) {
    for (int d = 1; d <= tri.d_max(); ++d) {
      CellState s = tri.observed(t, d) ? CellState::observed : CellState::predicted;
      for (int r = 0; r < tri.n_districts(); ++r) {
        for (int g = 0; g < tri.n_groups(); ++g) {
          tri.set_cell(t, d, r, g, value_of(t, d, r, g), s);
        }
      }
    }
  }
}

}  // namespace testutil
