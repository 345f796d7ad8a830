#include <cmath>
#include <limits>

#include "decompound/kernels.hpp"

namespace decompound::kernels {

ComponentTable::ComponentTable(std::size_t dim_, std::size_t count_)
    : dim(dim_),
      count(count_),
      padded((count_ + kLanes - 1) / kLanes * kLanes),
      log_coef(padded, -std::numeric_limits<double>::infinity()),
      mean(dim_ * padded, 0.0),
      chol_inv(dim_ * (dim_ + 1) / 2 * padded, 0.0) {}

namespace scalar {

namespace {

double component_term(const ComponentTable& t, std::size_t k, const double* x) {
  double maha = 0.0;
  for (std::size_t i = 0; i < t.dim; ++i) {
    double u = 0.0;
    for (std::size_t j = 0; j <= i; ++j) u += t.chol_at(i, j, k) * (x[j] - t.mean_at(j, k));
    maha += u * u;
  }
  return t.log_coef[k] - 0.5 * maha;
}

}  // namespace

double log_density(const ComponentTable& table, const double* x) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  double top = kNegInf;
  for (std::size_t k = 0; k < table.count; ++k) top = std::max(top, component_term(table, k, x));
  if (top == kNegInf) return kNegInf;
  double sum = 0.0;
  for (std::size_t k = 0; k < table.count; ++k) sum += std::exp(component_term(table, k, x) - top);
  return top + std::log(sum);
}

void log_density_batch(const ComponentTable& table, std::span<const double> points, std::span<double> out) {
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = scalar::log_density(table, points.data() + p * table.dim);
}

}  // namespace scalar
}  // namespace decompound::kernels
