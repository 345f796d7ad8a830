#pragma once

// Reference computations that share no code with the library routes they check.

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "decompound/model.hpp"

namespace oracle {

inline double normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

/// Continuous part of the increment density at 0 for N(0,1) jumps:
/// sum_{m=1}^{terms} e^{-lambda} lambda^m / m! / sqrt(2 pi m), in long double.
inline double series_at_zero(double lambda, int terms) {
  long double total = 0.0L, weight = std::exp(-static_cast<long double>(lambda));
  for (int m = 1; m <= terms; ++m) {
    weight *= static_cast<long double>(lambda) / m;
    total += weight / std::sqrt(2.0L * std::numbers::pi_v<long double> * m);
  }
  return static_cast<double>(total);
}

/// Values of a 1-d mixture density on the periodic grid x_j = lo + j h, j < n.
inline std::vector<double> tabulate(const decompound::NormalMixture& m, double lo, double h, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t j = 0; j < n; ++j) {
    double x = lo + static_cast<double>(j) * h;
    double s = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) s += m.weights()[k] * normal_pdf(x, m.means()[k](0), m.covariance(k)(0, 0));
    v[j] = s;
  }
  return v;
}

/// Spectral evaluation on a periodic grid centred at 0 (x_j = (j - n/2) h):
/// out = IFFT(f(h * FFT(r shifted to the origin))) / h, with f applied pointwise to the transform.
template <class F>
std::vector<double> spectral_map(const decompound::NormalMixture& r, double h, std::size_t n, F f) {
  const double lo = -static_cast<double>(n / 2) * h;
  auto values = tabulate(r, lo, h, n);
  std::vector<std::complex<double>> buf(n);
  // index 0 of the transform input corresponds to x = 0
  for (std::size_t j = 0; j < n; ++j) buf[j] = values[(j + n / 2) % n] * h;
  auto* data = reinterpret_cast<fftw_complex*>(buf.data());
  fftw_plan fwd = fftw_plan_dft_1d(static_cast<int>(n), data, data, FFTW_FORWARD, FFTW_ESTIMATE);
  fftw_execute(fwd);
  fftw_destroy_plan(fwd);
  for (auto& c : buf) c = f(c);
  fftw_plan bwd = fftw_plan_dft_1d(static_cast<int>(n), data, data, FFTW_BACKWARD, FFTW_ESTIMATE);
  fftw_execute(bwd);
  fftw_destroy_plan(bwd);
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) out[(j + n / 2) % n] = buf[j].real() / (static_cast<double>(n) * h);
  return out;
}

/// k-fold convolution power of a 1-d mixture on the grid (j - n/2) h.
inline std::vector<double> fft_power(const decompound::NormalMixture& r, int k, double h, std::size_t n) {
  return spectral_map(r, h, n, [k](std::complex<double> c) { return std::pow(c, k); });
}

/// Continuous part of the compound Poisson increment law: e^{-L} (exp(L phi) - 1) in the Fourier domain.
inline std::vector<double> fft_increment(const decompound::NormalMixture& r, double rate, double h, std::size_t n) {
  return spectral_map(r, h, n, [rate](std::complex<double> c) { return std::exp(-rate) * (std::exp(rate * c) - 1.0); });
}

}  // namespace oracle
