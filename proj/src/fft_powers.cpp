#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <mutex>

#include "decompound/error.hpp"
#include "decompound/likelihood.hpp"

namespace decompound {

namespace {

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

std::size_t fft_length(std::size_t n) {
  std::size_t len = 1;
  while (len < n) len <<= 1;
  return len;
}

struct FftBuffer {
  explicit FftBuffer(std::size_t n) : data(static_cast<double*>(fftw_malloc(sizeof(double) * n))), size(n) {
    std::fill(data, data + n, 0.0);
  }
  ~FftBuffer() { fftw_free(data); }
  FftBuffer(const FftBuffer&) = delete;
  FftBuffer& operator=(const FftBuffer&) = delete;
  double* data;
  std::size_t size;
};

struct SpectrumBuffer {
  explicit SpectrumBuffer(std::size_t n)
      : data(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))), size(n) {}
  ~SpectrumBuffer() { fftw_free(data); }
  SpectrumBuffer(const SpectrumBuffer&) = delete;
  SpectrumBuffer& operator=(const SpectrumBuffer&) = delete;
  fftw_complex* data;
  std::size_t size;
};

// Linear convolution of a fixed kernel with successive signals on padded grids.
class Convolver {
public:
  Convolver(std::size_t dim, std::size_t length)
      : dim_(dim),
        length_(length),
        real_size_(dim == 1 ? length : length * length),
        spectrum_size_(dim == 1 ? length / 2 + 1 : length * (length / 2 + 1)),
        signal_(real_size_),
        spectrum_(spectrum_size_),
        kernel_spectrum_(spectrum_size_) {
    std::lock_guard lock(fftw_planner_mutex());
    const int n = static_cast<int>(length_);
    if (dim_ == 1) {
      forward_ = fftw_plan_dft_r2c_1d(n, signal_.data, spectrum_.data, FFTW_ESTIMATE);
      backward_ = fftw_plan_dft_c2r_1d(n, spectrum_.data, signal_.data, FFTW_ESTIMATE);
    } else {
      forward_ = fftw_plan_dft_r2c_2d(n, n, signal_.data, spectrum_.data, FFTW_ESTIMATE);
      backward_ = fftw_plan_dft_c2r_2d(n, n, spectrum_.data, signal_.data, FFTW_ESTIMATE);
    }
  }

  ~Convolver() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }

  double* signal() { return signal_.data; }
  std::size_t length() const { return length_; }

  void clear() { std::fill(signal_.data, signal_.data + real_size_, 0.0); }

  // Current signal becomes the kernel.
  void capture_kernel() {
    fftw_execute(forward_);
    std::memcpy(kernel_spectrum_.data, spectrum_.data, sizeof(fftw_complex) * spectrum_size_);
  }

  // signal <- signal (*) kernel, unnormalized by the grid cell volume.
  void convolve_in_place() {
    fftw_execute(forward_);
    const double scale = 1.0 / static_cast<double>(real_size_);
    for (std::size_t i = 0; i < spectrum_size_; ++i) {
      const std::complex<double> a(spectrum_.data[i][0], spectrum_.data[i][1]);
      const std::complex<double> b(kernel_spectrum_.data[i][0], kernel_spectrum_.data[i][1]);
      const auto c = a * b * scale;
      spectrum_.data[i][0] = c.real();
      spectrum_.data[i][1] = c.imag();
    }
    fftw_execute(backward_);
  }

private:
  std::size_t dim_;
  std::size_t length_;
  std::size_t real_size_;
  std::size_t spectrum_size_;
  FftBuffer signal_;
  SpectrumBuffer spectrum_;
  SpectrumBuffer kernel_spectrum_;
  fftw_plan forward_{};
  fftw_plan backward_{};
};

std::vector<double> sample_on_nodes(const NormalMixture& m, std::size_t dim, std::array<long, 2> origin,
                                    std::array<std::size_t, 2> count, double h) {
  std::vector<double> points;
  const std::size_t total = count[0] * count[1];
  points.reserve(total * dim);
  for (std::size_t i = 0; i < count[0]; ++i) {
    for (std::size_t j = 0; j < count[1]; ++j) {
      points.push_back(static_cast<double>(origin[0] + static_cast<long>(i)) * h);
      if (dim == 2) points.push_back(static_cast<double>(origin[1] + static_cast<long>(j)) * h);
    }
  }
  std::vector<double> values(total);
  m.log_density_batch(points, values);
  for (double& v : values) v = std::exp(v);
  return values;
}

}  // namespace

GridPowers::GridPowers(const NormalMixture& base, const NormalMixture* start, int first, int last,
                       std::span<const double> weights, std::size_t points_per_axis)
    : dim_(base.dim()) {
  if (dim_ > 2) throw UnsupportedError("grid FFT convolution supports d <= 2 only");
  if (first < 1 || last < first) throw InputError("invalid power range for grid convolution");
  if (first > 1 && start == nullptr) throw InputError("grid convolution needs the starting power");
  if (weights.size() != static_cast<std::size_t>(last - first + 1)) throw InputError("weight count mismatch");
  if (points_per_axis < 16) throw InputError("grid convolution needs at least 16 points per axis");

  constexpr double kReach = 8.0;
  const double sd = base.max_axis_sd();
  std::array<double, 2> mu_min{0.0, 0.0}, mu_max{0.0, 0.0};
  for (std::size_t a = 0; a < dim_; ++a) {
    mu_min[a] = mu_max[a] = base.means()[0](a);
    for (const auto& mu : base.means()) {
      mu_min[a] = std::min(mu_min[a], mu(a));
      mu_max[a] = std::max(mu_max[a], mu(a));
    }
  }
  std::array<double, 2> lo{}, hi{};
  for (std::size_t a = 0; a < dim_; ++a) {
    lo[a] = mu_min[a] - kReach * sd;
    hi[a] = mu_max[a] + kReach * sd;
    for (int m = std::max(first - 1, 1); m <= last; ++m) {
      const double spread = kReach * std::sqrt(static_cast<double>(m)) * sd;
      lo[a] = std::min(lo[a], m * mu_min[a] - spread);
      hi[a] = std::max(hi[a], m * mu_max[a] + spread);
    }
  }
  double h = 0.0;
  for (std::size_t a = 0; a < dim_; ++a) h = std::max(h, (hi[a] - lo[a]) / static_cast<double>(points_per_axis - 1));
  spacing_ = h;

  std::array<long, 2> base_origin{0, 0};
  std::array<std::size_t, 2> base_count{1, 1};
  for (std::size_t a = 0; a < dim_; ++a) {
    origin_[a] = static_cast<long>(std::floor(lo[a] / h));
    count_[a] = static_cast<std::size_t>(static_cast<long>(std::ceil(hi[a] / h)) - origin_[a] + 1);
    base_origin[a] = static_cast<long>(std::floor((mu_min[a] - kReach * sd) / h));
    base_count[a] =
        static_cast<std::size_t>(static_cast<long>(std::ceil((mu_max[a] + kReach * sd) / h)) - base_origin[a] + 1);
  }

  std::size_t needed = 0;
  for (std::size_t a = 0; a < dim_; ++a) needed = std::max(needed, count_[a] + base_count[a] - 1);
  const std::size_t len = fft_length(needed);
  Convolver conv(dim_, len);
  const std::size_t row = dim_ == 1 ? 1 : len;

  auto load = [&](const std::vector<double>& values, std::array<std::size_t, 2> count) {
    conv.clear();
    for (std::size_t i = 0; i < count[0]; ++i)
      for (std::size_t j = 0; j < count[1]; ++j) conv.signal()[i * row + j] = values[i * count[1] + j];
  };

  const double cell = dim_ == 1 ? h : h * h;
  load(sample_on_nodes(base, dim_, base_origin, base_count, h), base_count);
  conv.capture_kernel();

  std::vector<double> current;
  if (first == 1) {
    current = sample_on_nodes(base, dim_, origin_, count_, h);
  } else {
    current = sample_on_nodes(*start, dim_, origin_, count_, h);
  }
  values_.assign(count_[0] * count_[1], 0.0);

  for (int m = first; m <= last; ++m) {
    if (m > 1) {
      load(current, count_);
      conv.convolve_in_place();
      // output index k sits at node origin_ + base_origin + k; global index = k + base_origin
      double total = 0.0, kept = 0.0;
      const std::size_t out0 = count_[0] + base_count[0] - 1;
      const std::size_t out1 = dim_ == 1 ? 1 : count_[1] + base_count[1] - 1;
      std::fill(current.begin(), current.end(), 0.0);
      for (std::size_t k0 = 0; k0 < out0; ++k0) {
        for (std::size_t k1 = 0; k1 < out1; ++k1) {
          const double v = std::max(0.0, conv.signal()[k0 * row + k1] * cell);
          total += v;
          const long g0 = static_cast<long>(k0) + base_origin[0];
          const long g1 = dim_ == 1 ? 0 : static_cast<long>(k1) + base_origin[1];
          if (g0 < 0 || g0 >= static_cast<long>(count_[0]) || g1 < 0 || g1 >= static_cast<long>(count_[1])) continue;
          current[static_cast<std::size_t>(g0) * count_[1] + static_cast<std::size_t>(g1)] = v;
          kept += v;
        }
      }
      lost_mass_ += weights[m - first] * (total - kept) * cell;
    }
    const double w = weights[m - first];
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += w * current[i];
  }
}

double GridPowers::value(std::span<const double> x) const {
  if (x.size() != dim_) throw InputError("point dimension does not match grid dimension");
  std::array<long, 2> idx{0, 0};
  std::array<double, 2> frac{0.0, 0.0};
  for (std::size_t a = 0; a < dim_; ++a) {
    const double t = x[a] / spacing_ - static_cast<double>(origin_[a]);
    if (!(t >= 0.0) || t > static_cast<double>(count_[a] - 1)) return 0.0;
    idx[a] = std::min(static_cast<long>(t), static_cast<long>(count_[a]) - 2);
    frac[a] = t - static_cast<double>(idx[a]);
  }
  auto at = [&](long i, long j) { return values_[static_cast<std::size_t>(i) * count_[1] + static_cast<std::size_t>(j)]; };
  if (dim_ == 1) return (1.0 - frac[0]) * at(idx[0], 0) + frac[0] * at(idx[0] + 1, 0);
  const double v00 = at(idx[0], idx[1]), v01 = at(idx[0], idx[1] + 1);
  const double v10 = at(idx[0] + 1, idx[1]), v11 = at(idx[0] + 1, idx[1] + 1);
  return (1.0 - frac[0]) * ((1.0 - frac[1]) * v00 + frac[1] * v01) + frac[0] * ((1.0 - frac[1]) * v10 + frac[1] * v11);
}

}  // namespace decompound
