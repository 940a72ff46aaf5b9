#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "ee/common/error.hpp"
#include "ee/common/parallel.hpp"
#include "ee/common/types.hpp"

namespace ee::metrics {

struct HeatmapSpec {
  std::size_t i = 0, j = 1;                 ///< free components
  std::pair<double, double> range_i{0, 1};  ///< inclusive
  std::pair<double, double> range_j{0, 1};
  std::size_t resolution = 21;
  std::optional<double> clip;  ///< truncate values above this (moment objective: 100)
  std::size_t threads = 1;
};

/// values(a, b) is the objective at (p1 = grid_i[a], p2 = grid_j[b]) with the
/// remaining components at their true values.
struct HeatmapGrid {
  std::vector<double> grid_i, grid_j;
  Matrix values;
  std::vector<std::vector<bool>> clipped;
  std::size_t argmin_a = 0, argmin_b = 0;  ///< lowest linear index among ties
  std::size_t truth_a = 0, truth_b = 0;    ///< grid cell nearest the truth
};

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t a = 0; a < n; ++a) v[a] = lo + (hi - lo) * static_cast<double>(a) / static_cast<double>(n - 1);
  return v;
}

inline std::size_t nearest_index(const std::vector<double>& grid, double x) {
  std::size_t best = 0;
  for (std::size_t a = 1; a < grid.size(); ++a)
    if (std::abs(grid[a] - x) < std::abs(grid[best] - x)) best = a;
  return best;
}

inline HeatmapGrid heatmap_grid(const std::function<double(const ParamVector&)>& objective, const ParamVector& truth,
                                const HeatmapSpec& spec) {
  ee::detail::require_config(spec.resolution >= 2, "heatmap: resolution must be >= 2");
  ee::detail::require_config(spec.i != spec.j && spec.i < truth.size() && spec.j < truth.size(),
                             "heatmap: need two distinct free components within the parameter dimension");
  HeatmapGrid h;
  const std::size_t n = spec.resolution;
  h.grid_i = linspace(spec.range_i.first, spec.range_i.second, n);
  h.grid_j = linspace(spec.range_j.first, spec.range_j.second, n);
  std::vector<double> vals(n * n);
  parallel_for(n * n, spec.threads, [&](std::size_t cell) {
    ParamVector phi = truth;
    phi[spec.i] = h.grid_i[cell / n];
    phi[spec.j] = h.grid_j[cell % n];
    vals[cell] = objective(phi);
  });
  h.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  h.clipped.assign(n, std::vector<bool>(n, false));
  double best = std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t cell = 0; cell < n * n; ++cell) {
    const std::size_t a = cell / n, b = cell % n;
    double v = vals[cell];
    // argmin on raw values; NaN never wins
    if (!found || v < best) {
      if (!std::isnan(v)) {
        best = v;
        h.argmin_a = a;
        h.argmin_b = b;
        found = true;
      }
    }
    if (spec.clip && !(v <= *spec.clip)) {
      v = *spec.clip;
      h.clipped[a][b] = true;
    }
    h.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = v;
  }
  h.truth_a = nearest_index(h.grid_i, truth[spec.i]);
  h.truth_b = nearest_index(h.grid_j, truth[spec.j]);
  return h;
}

/// CSV with header p1,p2,value,clipped.
inline void write_heatmap_csv(const std::filesystem::path& path, const HeatmapGrid& h) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os.precision(17);
  os << "p1,p2,value,clipped\n";
  for (std::size_t a = 0; a < h.grid_i.size(); ++a)
    for (std::size_t b = 0; b < h.grid_j.size(); ++b)
      os << h.grid_i[a] << ',' << h.grid_j[b] << ',' << h.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b))
         << ',' << (h.clipped[a][b] ? "true" : "false") << '\n';
}

}  // namespace ee::metrics
