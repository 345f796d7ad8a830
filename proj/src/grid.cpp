#include "decompound/grid.hpp"

#include "decompound/error.hpp"

namespace decompound {

Grid::Grid(std::size_t dim_, std::array<double, 2> lo_, std::array<double, 2> hi_, std::size_t points)
    : dim(dim_), lo(lo_), hi(hi_), points_per_axis(points) {
  if (dim != 1 && dim != 2) throw UnsupportedError("grids are supported for d = 1 and d = 2 only");
  if (points_per_axis < 2) throw InputError("grid needs at least 2 points per axis");
  for (std::size_t a = 0; a < dim; ++a)
    if (!(lo[a] < hi[a])) throw InputError("grid bounds must satisfy lo < hi");
}

Grid Grid::line(double lo, double hi, std::size_t points) { return Grid(1, {lo, 0.0}, {hi, 0.0}, points); }

Grid Grid::square(double lo, double hi, std::size_t points) { return Grid(2, {lo, lo}, {hi, hi}, points); }

std::size_t Grid::size() const { return dim == 1 ? points_per_axis : points_per_axis * points_per_axis; }

double Grid::spacing(std::size_t axis) const {
  return (hi[axis] - lo[axis]) / static_cast<double>(points_per_axis - 1);
}

double Grid::node(std::size_t axis, std::size_t i) const {
  return lo[axis] + static_cast<double>(i) * spacing(axis);
}

std::vector<double> Grid::points() const {
  std::vector<double> out;
  out.reserve(size() * dim);
  if (dim == 1) {
    for (std::size_t i = 0; i < points_per_axis; ++i) out.push_back(node(0, i));
  } else {
    for (std::size_t i = 0; i < points_per_axis; ++i)
      for (std::size_t j = 0; j < points_per_axis; ++j) {
        out.push_back(node(0, i));
        out.push_back(node(1, j));
      }
  }
  return out;
}

std::vector<double> Grid::trapezoid_weights() const {
  std::vector<double> axis(points_per_axis, 1.0);
  axis.front() = axis.back() = 0.5;
  std::vector<double> out;
  out.reserve(size());
  if (dim == 1) {
    for (double a : axis) out.push_back(a * spacing(0));
  } else {
    const double cell = spacing(0) * spacing(1);
    for (double a : axis)
      for (double b : axis) out.push_back(a * b * cell);
  }
  return out;
}

double Grid::integrate(std::span<const double> values) const {
  if (values.size() != size()) throw InputError("gridded values do not match grid size");
  const auto w = trapezoid_weights();
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) total += w[i] * values[i];
  return total;
}

}  // namespace decompound
