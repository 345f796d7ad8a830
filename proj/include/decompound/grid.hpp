#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace decompound {

/// Tensor grid on a box in 1 or 2 dimensions, used for quadrature and gridded output.
struct Grid {
  std::size_t dim = 1;
  std::array<double, 2> lo{};
  std::array<double, 2> hi{};
  std::size_t points_per_axis = 2;

  Grid() = default;
  Grid(std::size_t dim, std::array<double, 2> lo, std::array<double, 2> hi, std::size_t points_per_axis);
  static Grid line(double lo, double hi, std::size_t points);
  static Grid square(double lo, double hi, std::size_t points_per_axis);

  std::size_t size() const;
  double spacing(std::size_t axis) const;
  double node(std::size_t axis, std::size_t i) const;
  /// Point-major coordinates of every node; axis 0 varies slowest.
  std::vector<double> points() const;
  /// Composite trapezoid weights, parallel to points().
  std::vector<double> trapezoid_weights() const;
  double integrate(std::span<const double> values) const;
};

}  // namespace decompound
