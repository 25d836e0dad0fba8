#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dqlab/density.hpp"
#include "dqlab/dequant.hpp"
#include "dqlab/quantize.hpp"

namespace dqlab {

/// One cell of a D = 2 density grid, keyed by its center.
struct GridCell {
  double v1 = 0.0, v2 = 0.0, density = 0.0;
};

/// p(v) at the centers of a res x res grid over [lo, hi)^2, row-major in v1.
std::vector<GridCell> density_grid(DensityModel& model, std::size_t res, double lo, double hi);

/// Marginal dequantizer density E_x[q(v - x | x)] with x weighted by its
/// frequency in `data`: each state's component is a histogram of `samples`
/// draws of v = x + u at grid resolution.
std::vector<GridCell> dequant_grid(Dequantizer& dequant, const DiscreteBatch& data, std::size_t samples,
                                   std::size_t res, double lo, double hi, std::uint64_t seed);

/// Sum of density * cell area.
double grid_mass(const std::vector<GridCell>& cells, std::size_t res, double lo, double hi);

void write_grid_csv(const std::string& path, const std::vector<GridCell>& cells);

}  // namespace dqlab
