#include "dqlab/grid.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "dqlab/config.hpp"
#include "dqlab/error.hpp"

namespace dqlab {

namespace {

std::vector<GridCell> empty_grid(std::size_t res, double lo, double hi) {
  if (res == 0 || !(lo < hi)) throw ConfigError("grid needs resolution >= 1 and lo < hi");
  const double h = (hi - lo) / static_cast<double>(res);
  std::vector<GridCell> cells(res * res);
  for (std::size_t i = 0; i < res; ++i)
    for (std::size_t j = 0; j < res; ++j) {
      cells[i * res + j].v1 = lo + (static_cast<double>(i) + 0.5) * h;
      cells[i * res + j].v2 = lo + (static_cast<double>(j) + 0.5) * h;
    }
  return cells;
}

}  // namespace

std::vector<GridCell> density_grid(DensityModel& model, std::size_t res, double lo, double hi) {
  if (model.dim() != 2) throw ConfigError("density grids need a 2-dimensional model");
  std::vector<GridCell> cells = empty_grid(res, lo, hi);
  constexpr std::size_t kChunk = 8192;
  for (std::size_t begin = 0; begin < cells.size(); begin += kChunk) {
    const std::size_t end = std::min(cells.size(), begin + kChunk);
    Tensor v(Shape{end - begin, 2});
    for (std::size_t r = begin; r < end; ++r) {
      v.at(r - begin, 0) = cells[r].v1;
      v.at(r - begin, 1) = cells[r].v2;
    }
    Tape tape(false);
    const Tensor lp = model.log_prob(tape, tape.constant(std::move(v))).value();
    for (std::size_t r = begin; r < end; ++r) cells[r].density = std::exp(lp[r - begin]);
  }
  return cells;
}

std::vector<GridCell> dequant_grid(Dequantizer& dequant, const DiscreteBatch& data, std::size_t samples,
                                   std::size_t res, double lo, double hi, std::uint64_t seed) {
  if (data.dim() != 2) throw ConfigError("dequantizer grids need 2-dimensional data");
  if (data.size() == 0 || samples == 0) throw ConfigError("dequantizer grid needs data and samples");
  std::map<std::pair<std::int32_t, std::int32_t>, std::size_t> freq;
  for (std::size_t i = 0; i < data.size(); ++i) ++freq[{data.row(i)[0], data.row(i)[1]}];

  std::vector<GridCell> cells = empty_grid(res, lo, hi);
  const double h = (hi - lo) / static_cast<double>(res);
  std::uint64_t state = 0;
  for (const auto& [x, count] : freq) {
    const double weight = static_cast<double>(count) / static_cast<double>(data.size());
    Tensor xt = Tensor::matrix(1, 2, {static_cast<double>(x.first), static_cast<double>(x.second)});
    Rng rng = make_rng(seed, 3, state++);
    Tape tape(false);
    const Tensor v = dequant.sample(tape, xt, samples, rng).v.value();
    const double add = weight / (static_cast<double>(samples) * h * h);
    for (std::size_t s = 0; s < samples; ++s) {
      const double fi = std::floor((v.at(s, 0) - lo) / h), fj = std::floor((v.at(s, 1) - lo) / h);
      if (fi < 0 || fj < 0 || fi >= static_cast<double>(res) || fj >= static_cast<double>(res)) continue;
      cells[static_cast<std::size_t>(fi) * res + static_cast<std::size_t>(fj)].density += add;
    }
  }
  return cells;
}

double grid_mass(const std::vector<GridCell>& cells, std::size_t res, double lo, double hi) {
  const double h = (hi - lo) / static_cast<double>(res);
  double total = 0.0;
  for (const auto& c : cells) total += c.density;
  return total * h * h;
}

void write_grid_csv(const std::string& path, const std::vector<GridCell>& cells) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << "v1,v2,density\n";
  for (const auto& c : cells) out << format_real(c.v1) << ',' << format_real(c.v2) << ',' << format_real(c.density) << '\n';
}

}  // namespace dqlab
