#include <cmath>
#include <limits>
#include <vector>

#include "decompound/kernels.hpp"
#include "decompound/model.hpp"
#include "decompound/rng.hpp"
#include "doctest.h"

using namespace decompound;
using namespace decompound::kernels;

namespace {

NormalMixture random_mixture(std::size_t dim, std::size_t count, Rng& rng, bool shared) {
  std::vector<double> w(count);
  std::vector<Vector> mu(count);
  std::vector<Matrix> cov;
  for (std::size_t k = 0; k < count; ++k) {
    w[k] = 0.1 + rng.uniform();
    mu[k] = Vector(dim);
    for (std::size_t a = 0; a < dim; ++a) mu[k](a) = 4.0 * rng.uniform() - 2.0;
  }
  double total = 0.0;
  for (double v : w) total += v;
  for (double& v : w) v /= total;
  const std::size_t ncov = shared ? 1 : count;
  for (std::size_t k = 0; k < ncov; ++k) {
    Matrix a(dim, dim);
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j) a(i, j) = rng.normal();
    cov.push_back(a * a.transpose() + 0.3 * Matrix::Identity(dim, dim));
  }
  return NormalMixture(std::move(w), std::move(mu), std::move(cov), shared);
}

struct IsaGuard {
  Isa saved = active_isa();
  ~IsaGuard() { set_isa(saved); }
};

}  // namespace

TEST_CASE("scalar and AVX2 kernels agree on single points and batches") {
  if (!isa_available(Isa::avx2)) {
    MESSAGE("AVX2 unavailable on this host; equivalence not exercised");
    return;
  }
  Rng rng(11, 0);
  for (std::size_t dim : {1u, 2u, 3u}) {
    for (std::size_t count : {1u, 3u, 4u, 7u, 50u}) {
      for (bool shared : {true, false}) {
        const auto m = random_mixture(dim, count, rng, shared);
        const std::size_t n = 203;  // not a multiple of the lane width
        std::vector<double> pts(n * dim);
        for (double& p : pts) p = 12.0 * rng.uniform() - 6.0;
        pts[0] = 40.0;  // deep tail
        std::vector<double> a(n), b(n);
        scalar::log_density_batch(m.table(), pts, a);
        avx2::log_density_batch(m.table(), pts, b);
        for (std::size_t i = 0; i < n; ++i) {
          CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-13));
          const double single_s = scalar::log_density(m.table(), pts.data() + i * dim);
          const double single_v = avx2::log_density(m.table(), pts.data() + i * dim);
          CHECK(single_v == doctest::Approx(single_s).epsilon(1e-13));
        }
      }
    }
  }
}

TEST_CASE("kernels stay finite far in the tail") {
  const auto m = NormalMixture::gaussian1d(0.0, 1.0);
  for (Isa isa : {Isa::scalar, Isa::avx2}) {
    if (!isa_available(isa)) continue;
    IsaGuard guard;
    set_isa(isa);
    const double x[1] = {40.0};
    const double l = m.log_density(std::span<const double>(x, 1));
    CHECK(std::isfinite(l));
    CHECK(l == doctest::Approx(-800.0 - 0.5 * std::log(2.0 * M_PI)).epsilon(1e-14));
    CHECK(m.density(std::span<const double>(x, 1)) >= 0.0);
    CHECK(m.density(std::span<const double>(x, 1)) < 1e-300);
  }
}

TEST_CASE("dispatch can be pinned to the scalar path") {
  IsaGuard guard;
  set_isa(Isa::scalar);
  CHECK(active_isa() == Isa::scalar);
  CHECK(isa_name(Isa::scalar) == "scalar");
  const auto m = NormalMixture::gaussian1d(0.0, 1.0);
  const double x[1] = {0.0};
  CHECK(m.density(std::span<const double>(x, 1)) == doctest::Approx(1.0 / std::sqrt(2.0 * M_PI)).epsilon(1e-15));
}
